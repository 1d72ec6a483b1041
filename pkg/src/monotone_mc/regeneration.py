"""Regenerative construction of stationary laws on finite monotone chains.

The lower chain starts at ``x0`` and restarts from ``x0`` whenever it enters
``{z: z >= x0}`` at a time ``n >= 1``; the upper chain mirrors this with ``y0``
and ``{z: z <= y0}``. Their cycle occupation measures bracket a stationary law,
which the monotone push-forward iteration then reaches from below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergentCycle, InvalidDistribution, MonotoneViolation, NotConverged
from .kernel import FiniteKernel, hitting_analysis, is_monotone, spectral_radius
from .order import Dist, _members_of, as_dist, dominates

DEFAULT_EPS = 1e-10
DEFAULT_NMAX = 100_000
STATIONARY_CHECK = 1e-8


@dataclass(frozen=True)
class RegenSpec:
    x0: int
    y0: int

    def validate(self, k: FiniteKernel):
        if not (0 <= self.x0 < k.n and 0 <= self.y0 < k.n):
            raise ValueError("anchors outside the state space")
        if not k.poset.le(self.x0, self.y0):
            raise ValueError(f"anchors must satisfy x0 <= y0, got {self.x0}, {self.y0}")

    def lower_restart(self, k):
        """Mask of ``{z: z >= x0}``."""
        return _mask(k.n, k.poset.up_masks[self.x0])

    def upper_restart(self, k):
        """Mask of ``{z: z <= y0}``."""
        return _mask(k.n, k.poset.down_masks[self.y0])


def _mask(n, bits):
    m = np.zeros(n, dtype=bool)
    m[list(_members_of(bits))] = True
    return m


@dataclass(frozen=True)
class OccupationMeasure:
    pi: Dist
    mean_cycle: float
    anchor: int

    def to_json(self):
        return {"anchor": self.anchor, "mean_cycle": self.mean_cycle, "pi": self.pi.p.tolist()}


@dataclass(frozen=True)
class PRCheck:
    e_nu_minus: float
    e_nu_plus: float

    @property
    def holds(self):
        return bool(np.isfinite(self.e_nu_minus) and np.isfinite(self.e_nu_plus))

    def __iter__(self):
        return iter((self.e_nu_minus, self.e_nu_plus, self.holds))


def check_pr(k: FiniteKernel, spec: RegenSpec) -> PRCheck:
    """Mean upward return time to ``x0`` and downward return time to ``y0`` (``n >= 1``)."""
    spec.validate(k)
    lo = hitting_analysis(k, np.flatnonzero(spec.lower_restart(k)), spec.x0, first_return=True)
    hi = hitting_analysis(k, np.flatnonzero(spec.upper_restart(k)), spec.y0, first_return=True)
    return PRCheck(lo.expected_time, hi.expected_time)


def _occupation(k: FiniteKernel, anchor: int, restart, horizon: int, tol: float) -> OccupationMeasure:
    keep = ~restart
    Q = k.P[np.ix_(keep, keep)]
    if keep.any() and spectral_radius(Q) >= 1.0 - 1e-12:
        raise DivergentCycle("cycle length has infinite mean (taboo spectral radius is 1)")
    occ = np.zeros(k.n)
    occ[anchor] = 1.0
    v = k.P[anchor, keep].copy()
    idx = np.flatnonzero(keep)
    for _ in range(horizon):
        mass = v.sum()
        if mass <= tol:
            break
        occ[idx] += v
        v = v @ Q
    else:
        raise DivergentCycle(f"cycle mass {v.sum():.3e} still above {tol} after {horizon} steps")
    mean = occ.sum()
    return OccupationMeasure(Dist(occ / mean), float(mean), int(anchor))


def pi_minus_exact(k: FiniteKernel, spec: RegenSpec, horizon: int = 10**6, tol: float = 1e-16):
    """Occupation measure of one lower cycle, normalised by its mean length."""
    spec.validate(k)
    return _occupation(k, spec.x0, spec.lower_restart(k), horizon, tol)


def pi_plus_exact(k: FiniteKernel, spec: RegenSpec, horizon: int = 10**6, tol: float = 1e-16):
    """Occupation measure of one upper cycle, normalised by its mean length."""
    spec.validate(k)
    return _occupation(k, spec.y0, spec.upper_restart(k), horizon, tol)


def restarted_kernel(k: FiniteKernel, anchor: int, restart) -> tuple[FiniteKernel, np.ndarray]:
    """Kernel of the chain that jumps back to ``anchor`` whenever it would enter ``restart``.

    Rows of states not reachable from ``anchor`` are irrelevant; the reachable set
    is returned alongside so callers can restrict to it.
    """
    restart = np.asarray(restart, dtype=bool)
    L = k.P.copy()
    moved = L[:, restart].sum(axis=1)
    L[:, restart] = 0.0
    L[:, anchor] += moved
    Lk = FiniteKernel(L, k.poset, f"{k.name or 'kernel'}-restarted")
    seen = np.zeros(k.n, dtype=bool)
    seen[anchor] = True
    stack = [anchor]
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(L[u] > 0):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return Lk, np.flatnonzero(seen)


def restarted_stationary(k: FiniteKernel, anchor: int, restart) -> Dist:
    """Stationary law of the restarted chain on the set reachable from ``anchor``."""
    Lk, R = restarted_kernel(k, anchor, restart)
    Q = Lk.P[np.ix_(R, R)]
    m = R.size
    A = Q.T - np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    pi = np.zeros(k.n)
    pi[R] = np.linalg.solve(A, b)
    return Dist(np.clip(pi, 0.0, None))


@dataclass
class IterationResult:
    sequence: list
    converged_at: int | None
    limit: Dist
    steps: int

    def to_json(self):
        return {
            "converged_at": self.converged_at,
            "steps": self.steps,
            "limit": self.limit.p.tolist(),
        }


def monotone_iteration(
    k: FiniteKernel,
    pi_minus,
    pi_plus,
    nmax: int = DEFAULT_NMAX,
    eps: float = DEFAULT_EPS,
    keep_sequence: bool = True,
    tol: float = 1e-9,
) -> IterationResult:
    """Iterate ``mu_{j+1} = mu_j P`` from ``pi_minus``, asserting monotonicity every step.

    Each step checks ``mu_j <= mu_{j+1}`` and ``mu_{j+1} <= pi_plus``. Stops at the
    first ``j`` with ``||mu_{j+1} - mu_j||_1 <= eps`` and returns ``converged_at = j``.
    """
    mu = as_dist(pi_minus)
    top = as_dist(pi_plus)
    if mu.n != k.n or top.n != k.n:
        raise InvalidDistribution("distributions do not match the kernel size")
    if not is_monotone(k):
        raise MonotoneViolation("kernel is not stochastically monotone")
    if not dominates(mu, top, k.poset, tol):
        raise MonotoneViolation("lower seed is not dominated by the upper seed")
    cur = mu.p.copy()
    seq = [cur.copy()] if keep_sequence else []
    for j in range(nmax):
        nxt = cur @ k.P
        if not dominates(cur, nxt, k.poset, tol):
            raise MonotoneViolation(f"iterate {j + 1} is not above iterate {j}")
        if not dominates(nxt, top.p, k.poset, tol):
            raise MonotoneViolation(f"iterate {j + 1} exceeds the upper bound")
        if np.abs(nxt - cur).sum() <= eps:
            if np.abs(cur @ k.P - cur).sum() > STATIONARY_CHECK:
                raise NotConverged("iteration stalled away from a stationary law")
            return IterationResult(seq, j, Dist(cur), j)
        cur = nxt
        if keep_sequence:
            seq.append(cur.copy())
    raise NotConverged(f"no convergence to {eps} within {nmax} steps")
