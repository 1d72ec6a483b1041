"""Markov transition laws: stochastic matrices over a poset and stochastic recursions.

The two representations are deliberately kept apart. A recursion can be turned
into a matrix only through :func:`exactify`, which requires the update to be
piecewise constant in the driving uniform with declared breakpoints.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DomainError, InvalidKernel, Nonconvergent, SolverFailure
from .order import Dist, Poset, UpSet, dominates, _members_of
from .spaces import FinitePosetSpace, OrderedSpace, RealInterval

ROW_TOL = 1e-9
STATIONARY_TOL = 1e-10


class FiniteKernel:
    """Row-stochastic matrix over the ground set of a :class:`Poset`."""

    def __init__(self, P, poset: Poset, name: str | None = None):
        P = np.array(P, dtype=float)
        if P.ndim != 2 or P.shape != (poset.n, poset.n):
            raise InvalidKernel(f"matrix shape {P.shape} does not match poset size {poset.n}")
        if not np.all(np.isfinite(P)) or P.min() < -ROW_TOL:
            raise InvalidKernel("matrix has negative or non-finite entries")
        P = np.clip(P, 0.0, None)
        sums = P.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            raise InvalidKernel(f"row {int(bad[0])} sums to {sums[bad[0]]!r}")
        P = P / sums[:, None]
        P.setflags(write=False)
        self.P = P
        self.poset = poset
        self.name = name
        order = np.array(poset.linear_extension)
        cum = np.cumsum(P[:, order], axis=1)
        cum[:, -1] = 1.0
        cum.setflags(write=False)
        self._order = order
        self._cum = cum

    @property
    def n(self):
        return self.poset.n

    @property
    def space(self):
        return FinitePosetSpace(self.poset)

    def row(self, x) -> Dist:
        return Dist(self.P[int(x)])

    def step_batch(self, X, U):
        """Inverse-CDF step along a linear extension (monotone on chains)."""
        X = np.asarray(X, dtype=np.int64)
        idx = (self._cum[X] <= np.asarray(U)[:, None]).sum(axis=1)
        return self._order[np.minimum(idx, self.n - 1)]

    def support_graph(self):
        return [np.flatnonzero(self.P[i] > 0) for i in range(self.n)]

    @classmethod
    def from_json(cls, obj) -> "FiniteKernel":
        if isinstance(obj, str):
            obj = json.loads(obj)
        poset = Poset.from_json(obj["poset"])
        return cls(obj["rows"], poset, obj.get("name"))

    def to_json(self) -> dict:
        out = {"poset": self.poset.to_json(), "rows": self.P.tolist()}
        if self.name:
            out["name"] = self.name
        return out

    def __repr__(self):
        return f"FiniteKernel(n={self.n}, name={self.name!r})"


def _loop_batch(update):
    def batch(X, U):
        return np.array([update(x, u) for x, u in zip(X, U)])

    return batch


@dataclass(frozen=True)
class RecursionKernel:
    """``x_{n+1} = update(x_n, u_n)`` with ``u_n`` uniform on (0, 1).

    ``update_batch`` maps stacked states (first axis = lanes) and a vector of
    uniforms to the next states. ``monotone`` declares that ``update`` is
    nondecreasing in the state for every fixed ``u``; it is property-tested,
    never assumed silently. ``breakpoints`` (sorted, inside (0, 1)) declare the
    update piecewise constant in ``u`` and enable :func:`exactify`.
    """

    name: str
    space: OrderedSpace
    update: Callable
    update_batch: Callable | None = None
    monotone: bool = False
    breakpoints: tuple | None = None
    pair_tracker: object | None = field(default=None, compare=False)
    params: dict = field(default_factory=dict, compare=False)

    def step_batch(self, X, U):
        fn = self.update_batch or _loop_batch(self.update)
        return fn(X, U)


def sample_step(k: RecursionKernel, x, u: float):
    """One deterministic step of a recursion kernel."""
    if not k.space.contains(x):
        raise DomainError(f"state {x!r} is outside {type(k.space).__name__}")
    if not 0.0 <= u < 1.0:
        raise DomainError(f"driver {u!r} outside [0, 1)")
    return k.update(k.space.as_state(x), u)


def exactify(k: RecursionKernel, states: Sequence, poset: Poset | None = None) -> FiniteKernel:
    """Matrix form of a recursion that is piecewise constant in ``u``.

    ``states`` must be closed under the update; ``poset`` defaults to the
    restriction of the space order to ``states``.
    """
    if k.breakpoints is None:
        raise InvalidKernel(f"recursion {k.name!r} declares no breakpoints")
    cuts = [0.0, *k.breakpoints, 1.0]
    states = [k.space.as_state(s) for s in states]
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    P = np.zeros((n, n))
    for i, s in enumerate(states):
        for a, b in zip(cuts[:-1], cuts[1:]):
            t = k.space.as_state(k.update(s, 0.5 * (a + b)))
            if t not in index:
                raise DomainError(f"update leaves the state list: {s!r} -> {t!r}")
            P[i, index[t]] += b - a
    if poset is None:
        rel = np.array([[k.space.leq(a, b) for b in states] for a in states])
        poset = Poset(rel)
    return FiniteKernel(P, poset, name=k.name)


# ---------------------------------------------------------------------------
# finite analysis


@dataclass(frozen=True)
class MonotonicityResult:
    monotone: bool
    pair: tuple | None = None
    witness: UpSet | None = None

    def __bool__(self):
        return self.monotone


def is_monotone(k: FiniteKernel) -> MonotonicityResult:
    """Check ``row_x <= row_y`` stochastically for every cover pair ``x < y``.

    Dominance is transitive, so cover pairs suffice. On failure the violating
    pair and an up-set with ``P(x, I) > P(y, I)`` are returned.
    """
    for x, y in k.poset.covers:
        ok, witness = dominates(k.P[x], k.P[y], k.poset, with_witness=True)
        if not ok:
            return MonotonicityResult(False, (x, y), witness)
    return MonotonicityResult(True)


def n_step(k: FiniteKernel, n: int) -> FiniteKernel:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return FiniteKernel(np.linalg.matrix_power(k.P, n), k.poset, k.name)


@dataclass(frozen=True)
class StationaryReport:
    closed_classes: list
    stationary_per_class: list
    unique: bool

    def to_json(self):
        return {
            "closed_classes": [list(map(int, c)) for c in self.closed_classes],
            "stationary_per_class": [d.p.tolist() for d in self.stationary_per_class],
            "unique": self.unique,
        }


def _solve_stationary(Q):
    m = Q.shape[0]
    A = Q.T - np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"stationary system is singular: {exc}") from None
    return pi


def stationary_report(k: FiniteKernel) -> StationaryReport:
    """Closed communicating classes and the stationary law carried by each."""
    graph = csr_matrix(k.P > 0)
    ncomp, labels = connected_components(graph, directed=True, connection="strong")
    closed, dists = [], []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(k.n, dtype=bool)
        outside[members] = False
        if (k.P[np.ix_(members, np.flatnonzero(outside))] > 0).any():
            continue
        pi_c = _solve_stationary(k.P[np.ix_(members, members)])
        pi = np.zeros(k.n)
        pi[members] = pi_c
        if pi.min() < -1e-12 or np.abs(pi @ k.P - pi).sum() > STATIONARY_TOL:
            raise SolverFailure(f"stationary solve for class {members.tolist()} is inaccurate")
        closed.append(members.tolist())
        dists.append(Dist(np.clip(pi, 0.0, None)))
    return StationaryReport(closed, dists, len(closed) == 1)


class HittingResult(NamedTuple):
    prob_finite: float
    expected_time: float


def _reach(adj, sources, blocked):
    """States reachable from ``sources`` through non-blocked intermediates."""
    seen = np.zeros(len(adj), dtype=bool)
    queue = deque()
    for s in sources:
        if not seen[s]:
            seen[s] = True
            queue.append(s)
    while queue:
        u = queue.popleft()
        if blocked[u]:
            continue
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def _as_index_mask(target, n):
    if isinstance(target, UpSet):
        members = target.members
    elif isinstance(target, (int, np.integer)):
        members = _members_of(int(target))
    else:
        members = [int(t) for t in target]
    mask = np.zeros(n, dtype=bool)
    mask[list(members)] = True
    return mask


class _HittingSolver:
    """Shared first-entry quantities for one (kernel, target) pair."""

    def __init__(self, k: FiniteKernel, target_mask):
        n = k.n
        P = k.P
        T = target_mask
        adj = k.support_graph()
        radj = [np.flatnonzero(P[:, j] > 0) for j in range(n)]
        can_reach = _reach(radj, np.flatnonzero(T), np.zeros(n, dtype=bool))
        # states with a target-avoiding path into a state that cannot reach T
        bad = self._backward_avoiding(radj, ~can_reach, T)
        h = np.zeros(n)
        h[T] = 1.0
        W = np.flatnonzero(can_reach & ~T)
        if W.size:
            Q = P[np.ix_(W, W)]
            r = P[np.ix_(W, np.flatnonzero(T))].sum(axis=1)
            h[W] = np.linalg.solve(np.eye(W.size) - Q, r)
        good = can_reach & ~bad
        h[good] = 1.0
        h[~can_reach] = 0.0
        self.k, self.T, self.adj, self.h, self.good = k, T, adj, h, good
        self._m = {}

    @staticmethod
    def _backward_avoiding(radj, seeds, T):
        seen = seeds.copy()
        queue = deque(np.flatnonzero(seeds))
        while queue:
            v = queue.popleft()
            for u in radj[v]:
                if not seen[u] and not T[u]:
                    seen[u] = True
                    queue.append(u)
        return seen

    def expected(self, start):
        """Mean first-entry time (n >= 0 convention) from ``start``."""
        T, P = self.T, self.k.P
        if T[start]:
            return 0.0
        if not self.good[start]:
            return np.inf
        if start not in self._m:
            R = np.flatnonzero(_reach(self.adj, [start], T) & ~T)
            Q = P[np.ix_(R, R)]
            rho = np.abs(np.linalg.eigvals(Q)).max() if R.size else 0.0
            if rho >= 1.0 - 1e-12:
                return np.inf
            m = np.linalg.solve(np.eye(R.size) - Q, np.ones(R.size))
            for s, v in zip(R, m):
                self._m[int(s)] = float(v)
        return self._m[start]


def hitting_analysis(
    k: FiniteKernel, target, start: int, first_return: bool = False
) -> HittingResult:
    """Probability of ever hitting ``target`` and the mean hitting time.

    With ``first_return=False`` the hitting time is ``inf{n >= 0: X_n in target}``;
    with ``first_return=True`` it is ``inf{n >= 1: ...}``. Probability one is
    decided on the support graph (every state reachable while avoiding the
    target can still reach it), so it is reported as exactly 1.0.
    """
    T = _as_index_mask(target, k.n)
    if not T.any():
        raise ValueError("target must be nonempty")
    solver = _HittingSolver(k, T)
    start = int(start)
    if not first_return:
        return HittingResult(float(solver.h[start]), float(solver.expected(start)))
    succ = np.flatnonzero(k.P[start] > 0)
    p = k.P[start, succ]
    if all(solver.good[s] or T[s] for s in succ):
        prob = 1.0
        expected = 1.0 + float(sum(pi * solver.expected(int(s)) for s, pi in zip(succ, p)))
    else:
        prob = float(p @ solver.h[succ])
        expected = np.inf
    return HittingResult(prob, expected)


def spectral_radius(Q) -> float:
    Q = np.asarray(Q)
    if Q.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(Q)).max())


def moment_check(
    k: FiniteKernel,
    C,
    alpha: float,
    N: int = 1,
    threshold: float = 1e-14,
    horizon: int = 1_000_000,
) -> tuple[float, bool]:
    """``sup_{x in C} E[tau_x(C)^alpha]`` for the N-skeleton, ``tau >= 1``.

    Finiteness is decided by the spectral radius of the skeleton restricted to
    the complement of ``C``. The value is an exact tail sum, truncated once
    ``(n+1)^alpha P(tau > n)`` drops below ``threshold``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    inC = _as_index_mask(C, k.n)
    if not inC.any():
        raise ValueError("C must be nonempty")
    Q = np.linalg.matrix_power(k.P, N)
    Cidx, Tidx = np.flatnonzero(inC), np.flatnonzero(~inC)
    if Tidx.size == 0:
        return 1.0, True
    QTT = Q[np.ix_(Tidx, Tidx)]
    if spectral_radius(QTT) >= 1.0 - 1e-12:
        return np.inf, False
    v = Q[np.ix_(Cidx, Tidx)]  # P(X_1 = t, tau > 1) rows over x in C
    total = np.ones(Cidx.size)  # n = 0 term: 1^alpha * P(tau > 0)
    n = 1
    while True:
        tail = v.sum(axis=1)
        weight = (n + 1) ** alpha - n**alpha
        total += weight * tail
        if ((n + 1) ** alpha * tail).max() < threshold:
            break
        n += 1
        if n > horizon:
            raise Nonconvergent(f"moment tail above {threshold} after {horizon} steps")
        v = v @ QTT
    return float(total.max()), True


# ---------------------------------------------------------------------------
# recursion DSL (config files)


def _affine(spec):
    a = float(spec.get("x", 0.0))
    b = float(spec.get("u", 0.0))
    c = float(spec.get("c", 0.0))
    return (lambda x, u: a * x + b * u + c), a >= 0


def _expr(spec):
    if "affine" in spec:
        fn, mono = _affine(spec["affine"])
    elif "piecewise_u" in spec:
        table = spec["piecewise_u"]
        cuts = [float(t) for t in table["breakpoints"]]
        parts = [_expr(p) for p in table["pieces"]]
        if len(parts) != len(cuts) + 1:
            raise InvalidKernel("piecewise_u needs len(breakpoints) + 1 pieces")
        fns = [p[0] for p in parts]
        mono = all(p[1] for p in parts)

        def fn(x, u, fns=fns, cuts=cuts):
            return fns[int(np.searchsorted(cuts, u, side="right"))](x, u)

    else:
        raise InvalidKernel(f"unknown recursion expression {sorted(spec)}")
    if "clamp" in spec:
        lo, hi = (float(t) for t in spec["clamp"])
        inner = fn

        def fn(x, u, inner=inner, lo=lo, hi=hi):
            return min(hi, max(lo, inner(x, u)))

    return fn, mono


def recursion_from_config(cfg: dict) -> RecursionKernel:
    """Build a scalar recursion from the config DSL.

    ``{"name": ..., "space": {"interval": [lo, hi]}, "update": <expr>}`` where
    ``<expr>`` is ``{"affine": {"x": a, "u": b, "c": c}}`` or
    ``{"piecewise_u": {"breakpoints": [...], "pieces": [<expr>, ...]}}``,
    optionally with ``"clamp": [lo, hi]``.
    """
    try:
        lo, hi = cfg.get("space", {}).get("interval", [0.0, 1.0])
        fn, mono = _expr(cfg["update"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidKernel(f"bad recursion config: {exc}") from None
    breakpoints = None
    if "piecewise_u" in cfg["update"] and all(
        "affine" in p and float(p["affine"].get("u", 0.0)) == 0.0
        for p in cfg["update"]["piecewise_u"]["pieces"]
    ):
        breakpoints = tuple(float(t) for t in cfg["update"]["piecewise_u"]["breakpoints"])

    def batch(X, U):
        return np.array([fn(float(x), float(u)) for x, u in zip(X, U)])

    return RecursionKernel(
        name=cfg.get("name", "custom"),
        space=RealInterval(float(lo), float(hi)),
        update=fn,
        update_batch=batch,
        monotone=mono,
        breakpoints=breakpoints,
    )
