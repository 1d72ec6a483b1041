"""Certificates for convergence and uniqueness of monotone chains.

Splitting certificates follow the canonical form ``A = {x <= z0}``,
``B = {y >= z0}``. A rate certificate with split mass ``eps`` after ``N`` steps
yields the uniform bound ``K q^{floor(n/N)}`` with ``q = (1 - eps)^{1/N}`` and
``K = (1 - eps)^{-(N-1)/N}``; the independent-coupling variant replaces
``eps`` by ``eps**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coupling import PairIn, Policy, exact_tau_tail, order_pairs
from .errors import BoundViolated, HypothesisFails, InvariantViolation, NoSplit
from .kernel import (
    FiniteKernel,
    RecursionKernel,
    _HittingSolver,
    hitting_analysis,
    moment_check,
    n_step,
    stationary_report,
)
from .order import _members_of, chain_distance_rows, order_distance
from .rng import COORD_X, stream_keys, uniforms
from .spaces import RealInterval

BOUND_SLACK = 1e-10


@dataclass(frozen=True)
class SplitCertificate:
    C: tuple
    z0: object
    A: tuple
    B: tuple
    N: int
    eps: float
    detail: dict = field(default_factory=dict, compare=False)

    def to_json(self):
        out = {
            "C": list(self.C) if self.C != "full" else "full",
            "z0": self.z0,
            "A": list(self.A) if isinstance(self.A, tuple) else self.A,
            "B": list(self.B) if isinstance(self.B, tuple) else self.B,
            "N": self.N,
            "eps": self.eps,
        }
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass(frozen=True)
class RateCertificate:
    split: SplitCertificate
    q: float
    K: float
    alt_q: float
    alt_K: float

    @property
    def N(self):
        return self.split.N

    @property
    def eps(self):
        return self.split.eps

    @property
    def coupled_after_N(self):
        return self.split.eps >= 1.0

    @classmethod
    def from_split(cls, split: SplitCertificate) -> "RateCertificate":
        eps, N = split.eps, split.N
        if not 0.0 < eps <= 1.0:
            raise NoSplit(f"split mass {eps!r} is not in (0, 1]")
        if eps >= 1.0:
            # both chains sit on the pivot after N steps
            return cls(split, 0.0, 1.0, 0.0, 1.0)
        q = (1.0 - eps) ** (1.0 / N)
        K = (1.0 - eps) ** (-(N - 1) / N)
        alt_q = (1.0 - eps * eps) ** (1.0 / N)
        alt_K = (1.0 - eps * eps) ** (-(N - 1) / N)
        return cls(split, q, K, alt_q, alt_K)

    def _geom(self, K, q, n):
        k = n // self.N
        if k == 0:
            return K
        return K * q**k

    def bound(self, n: int) -> float:
        return self._geom(self.K, self.q, n)

    def alt_bound(self, n: int) -> float:
        return self._geom(self.alt_K, self.alt_q, n)

    def sharp_bound(self, n: int) -> float:
        """``(1 - eps)^{floor(n/N)}``, the coupling-tail bound before constants are absorbed."""
        return (1.0 - self.eps) ** (n // self.N)

    def to_json(self):
        return {
            "split": self.split.to_json(),
            "q": self.q,
            "K": self.K,
            "alt_q": self.alt_q,
            "alt_K": self.alt_K,
            "coupled_after_N": self.coupled_after_N,
        }


@dataclass(frozen=True)
class UniquenessCertificate:
    ok: bool
    witnesses: dict
    failing_pair: tuple | None = None

    def __bool__(self):
        return self.ok

    def to_json(self):
        return {
            "ok": self.ok,
            "failing_pair": list(self.failing_pair) if self.failing_pair else None,
            "witnesses": [
                {"x": x, "y": y, "a": a, "b": b} for (x, y), (a, b) in sorted(self.witnesses.items())
            ],
        }


# ---------------------------------------------------------------------------
# compressibility


def compressibility_exact(k: FiniteKernel, x: int, y: int, n: int) -> float:
    """``sup`` over increasing test functions of ``|E g(X_n^x) - E g(X_n^y)|``."""
    Pn = np.linalg.matrix_power(k.P, n)
    return order_distance(Pn[x], Pn[y], k.poset)


@dataclass
class CompressibilityReport:
    x: int
    y: int
    lhs: np.ndarray
    tail_xy: np.ndarray
    tail_yx: np.ndarray

    @property
    def rhs(self):
        return np.maximum(self.tail_xy, self.tail_yx)

    @property
    def ok(self):
        return bool(np.all(self.lhs <= self.rhs + BOUND_SLACK))

    def to_json(self):
        return {
            "x": self.x,
            "y": self.y,
            "ok": self.ok,
            "lhs": self.lhs.tolist(),
            "rhs": self.rhs.tolist(),
        }


def verify_compressibility_bound(k: FiniteKernel, policy: Policy, x: int, y: int, nmax: int):
    """Check the distance of the time-``n`` laws against the two coupling tails of ``M``."""
    M = PairIn(order_pairs(k.poset), "M")
    tail_xy = exact_tau_tail(k, k, policy, M, x, y, nmax)
    tail_yx = exact_tau_tail(k, k, policy, M, y, x, nmax)
    lhs = np.empty(nmax + 1)
    rx = np.zeros(k.n)
    ry = np.zeros(k.n)
    rx[x] = 1.0
    ry[y] = 1.0
    for n in range(nmax + 1):
        lhs[n] = order_distance(rx, ry, k.poset)
        rhs = max(tail_xy[n], tail_yx[n])
        if lhs[n] > rhs + BOUND_SLACK:
            raise BoundViolated(n, lhs[n], rhs, f"start pair ({x}, {y})")
        rx = rx @ k.P
        ry = ry @ k.P
    return CompressibilityReport(x, y, lhs, tail_xy, tail_yx)


# ---------------------------------------------------------------------------
# splitting


def _all_states(k):
    return tuple(range(k.n))


def find_split(k: FiniteKernel, N: int, C=None) -> SplitCertificate | None:
    """Best canonical split over all pivots ``z0``; ``None`` when every pivot gives 0."""
    if N < 1:
        raise ValueError("N must be >= 1")
    C = _all_states(k) if C is None else tuple(sorted(int(c) for c in C))
    PN = np.linalg.matrix_power(k.P, N)
    rows = PN[list(C)]
    best = None
    for z in range(k.n):
        A = _members_of(k.poset.down_masks[z])
        B = _members_of(k.poset.up_masks[z])
        eps = float(min(rows[:, A].sum(axis=1).min(), rows[:, B].sum(axis=1).min()))
        if best is None or eps > best[0]:
            best = (eps, z, A, B)
    eps, z, A, B = best
    if eps <= 0.0:
        return None
    return SplitCertificate(C, z, tuple(A), tuple(B), N, min(eps, 1.0))


def check_achievability_hypotheses(k: FiniteKernel, cert: SplitCertificate, alpha: float) -> dict:
    """Return-to-``C`` hypotheses on the ``N``-skeleton: a.s. return, finite ``n^alpha`` moment."""
    if alpha <= 1.0:
        raise ValueError("alpha must exceed 1")
    C = list(cert.C)
    skel = n_step(k, cert.N)
    for x in range(k.n):
        res = hitting_analysis(skel, C, x, first_return=True)
        if res.prob_finite < 1.0:
            raise HypothesisFails(
                1, x, f"return probability to C from {x} is {res.prob_finite:.6g} < 1"
            )
    sup_moment, finite = moment_check(k, C, alpha, cert.N)
    if not finite:
        raise HypothesisFails(2, None, f"E tau^{alpha} is infinite on C")
    return {"holds": True, "alpha": alpha, "N": cert.N, "sup_moment": sup_moment}


def _recursion_split(k: RecursionKernel, N, c, reps, seed, grid):
    space = k.space
    if not isinstance(space, RealInterval):
        raise NoSplit("recursion certificates need a real interval space")
    c = 0.5 * (space.lo + space.hi) if c is None else float(c)
    starts = np.unique(np.concatenate([[space.lo, space.hi], np.linspace(space.lo, space.hi, grid)]))
    keys = stream_keys(seed, np.arange(reps), COORD_X)
    lower, upper = [], []
    for x in starts:
        X = np.full(reps, x)
        for t in range(N):
            X = k.step_batch(X, uniforms(keys, t))
        pa = float(np.mean(X <= c))
        pb = float(np.mean(X >= c))
        lower.append(pa - 3.0 * math.sqrt(pa * (1.0 - pa) / reps))
        upper.append(pb - 3.0 * math.sqrt(pb * (1.0 - pb) / reps))
    lower, upper = np.array(lower), np.array(upper)
    eps = float(min(lower.min(), upper.min()))
    detail = {
        "method": "monte_carlo",
        "reps": reps,
        "seed": seed,
        "grid": starts.tolist(),
        "worst_lower_start": float(starts[lower.argmin()]),
        "worst_upper_start": float(starts[upper.argmin()]),
        "margin": "3 sigma",
    }
    if k.monotone:
        # monotone updates: P^N(x, [lo, c]) decreases and P^N(x, [c, hi]) increases in x
        detail["endpoint_reduction"] = bool(
            lower.argmin() == len(starts) - 1 and upper.argmin() == 0
        )
    if eps <= 0.0:
        raise NoSplit(f"estimated split mass {eps:.4g} is not positive")
    return SplitCertificate("full", c, f"x <= {c}", f"x >= {c}", N, eps, detail)


def bm_certificate(k, N: int, c=None, reps: int = 100_000, seed: int = 0, grid: int = 17):
    """Rate certificate from a full-space split.

    Finite kernels search canonical pivots exactly. Recursions on an interval
    estimate the split mass at pivot ``c`` by Monte Carlo from both endpoints and
    a ``grid``-point lattice of starts, minus a 3-sigma margin.
    """
    if isinstance(k, FiniteKernel):
        split = find_split(k, N)
        if split is None:
            raise NoSplit(f"no pivot splits every row of P^{N}")
    else:
        split = _recursion_split(k, N, c, reps, seed, grid)
    return RateCertificate.from_split(split)


@dataclass
class RateReport:
    rows: list  # (n, max_distance, bound, alt_bound)
    worst_start: list

    @property
    def ok(self):
        return all(d <= b + BOUND_SLACK for _, d, b, _ in self.rows)

    def to_csv(self):
        lines = ["n,max_distance,bound,alt_bound"]
        for n, d, b, a in self.rows:
            lines.append(f"{n},{float(d)!r},{float(b)!r},{float(a)!r}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        return {"ok": self.ok, "nmax": self.rows[-1][0], "max_distance": [r[1] for r in self.rows]}


def verify_rate(k: FiniteKernel, cert: RateCertificate, nmax: int) -> RateReport:
    """Uniform distance of ``delta_x P^n`` to the stationary law against the certificate."""
    rep = stationary_report(k)
    if not rep.unique:
        raise ValueError("rate verification needs a unique stationary law")
    pi = rep.stationary_per_class[0].p
    Pn = np.eye(k.n)
    rows, worst = [], []
    for n in range(nmax + 1):
        if k.poset.is_chain:
            d = chain_distance_rows(Pn, pi, k.poset)
        else:
            d = np.array([order_distance(Pn[x], pi, k.poset) for x in range(k.n)])
        dmax = float(d.max())
        b, a = cert.bound(n), cert.alt_bound(n)
        if dmax > b + BOUND_SLACK:
            raise BoundViolated(n, dmax, b, f"start {int(d.argmax())}")
        if dmax > a + BOUND_SLACK:
            raise BoundViolated(n, dmax, a, "independent-coupling rate")
        rows.append((n, dmax, b, a))
        worst.append(int(d.argmax()))
        Pn = Pn @ k.P
    return RateReport(rows, worst)


# ---------------------------------------------------------------------------
# uniqueness


def uniqueness_certificate(k: FiniteKernel) -> UniquenessCertificate:
    """Singleton witnesses ``a <= b`` hit almost surely from ``x`` and from ``y``.

    A successful certificate is cross-checked against the class decomposition;
    a mismatch is an internal error.
    """
    n = k.n
    hit = np.zeros((n, n), dtype=bool)  # hit[x, a]: {a} is reached a.s. from x
    for a in range(n):
        T = np.zeros(n, dtype=bool)
        T[a] = True
        hit[:, a] = _HittingSolver(k, T).good
    leq = k.poset.leq
    witnesses = {}
    for x in range(n):
        for y in range(n):
            cand = np.argwhere(hit[x][:, None] & hit[y][None, :] & leq)
            if cand.size == 0:
                return UniquenessCertificate(False, witnesses, (x, y))
            a, b = cand[0]
            witnesses[(x, y)] = (int(a), int(b))
    if not stationary_report(k).unique:
        raise InvariantViolation("uniqueness witnesses found but several closed classes exist")
    return UniquenessCertificate(True, witnesses)
