"""Named example chains, each carrying the verdicts it is expected to produce.

Every verdict name maps to a checker in :data:`VERDICTS`, so a fixture's
expectations are executable: ``check_fixture(build(name))`` re-derives them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
import sympy
from scipy import integrate, special, stats

from .certify import RateCertificate, SplitCertificate, uniqueness_certificate, verify_rate
from .coupling import (
    CommonNoise,
    Independent,
    PairIn,
    Switched,
    estimate_tau,
    exact_tau_tail,
    order_pairs,
    pathwise_order_check,
    run_replications,
    simulate_pair,
)
from .errors import UnknownFixture
from .kernel import FiniteKernel, RecursionKernel, is_monotone, stationary_report
from .order import Poset, order_distance
from .regeneration import RegenSpec, check_pr, monotone_iteration, pi_minus_exact, pi_plus_exact
from .regeneration import restarted_stationary
from .rng import COORD_X, stream_keys, uniforms
from .spaces import IntLattice, Layered, OrderedSpace, RealInterval, layer_gap_float


@dataclass(frozen=True)
class Approx:
    value: object
    tol: float = 1e-9

    def matches(self, actual):
        return bool(np.allclose(np.asarray(actual, float), np.asarray(self.value, float), atol=self.tol, rtol=0))

    def to_json(self):
        return {"approx": np.asarray(self.value, float).tolist(), "tol": self.tol}


@dataclass(frozen=True)
class AtLeast:
    value: float

    def matches(self, actual):
        return actual >= self.value

    def to_json(self):
        return {"at_least": self.value}


@dataclass(frozen=True)
class AtMost:
    value: float

    def matches(self, actual):
        return actual <= self.value

    def to_json(self):
        return {"at_most": self.value}


@dataclass(frozen=True)
class Fixture:
    name: str
    description: str
    space: OrderedSpace
    kernel: object
    expected: dict
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict, compare=False, repr=False)

    def to_json(self):
        if isinstance(self.kernel, FiniteKernel):
            kernel = {"type": "finite", **self.kernel.to_json()}
        else:
            kernel = {"type": "recursion", "name": self.kernel.name, "params": self.kernel.params}
        expected = {
            k: v.to_json() if hasattr(v, "to_json") else v for k, v in sorted(self.expected.items())
        }
        return {
            "name": self.name,
            "description": self.description,
            "params": self.params,
            "space": self.space.describe(),
            "kernel": kernel,
            "expected": expected,
        }


# ---------------------------------------------------------------------------
# constructors

_BUILDERS: dict[str, Callable] = {}


def _register(fn):
    _BUILDERS[fn.__name__.removeprefix("_build_")] = fn
    return fn


def list_fixtures() -> list[str]:
    return sorted(_BUILDERS)


def build(name: str, **params) -> Fixture:
    try:
        fn = _BUILDERS[name]
    except KeyError:
        raise UnknownFixture(f"unknown fixture {name!r}; known: {', '.join(list_fixtures())}") from None
    return fn(**params)


def export(name: str, **params) -> dict:
    return build(name, **params).to_json()


@_register
def _build_flip_chain():
    poset = Poset.antichain(2)
    k = FiniteKernel([[0.0, 1.0], [1.0, 0.0]], poset, "flip_chain")
    return Fixture(
        "flip_chain",
        "two states swapped every step; trivial order",
        k.space,
        k,
        {
            "monotone": True,
            "stationary_count": 1,
            "stationary_law": Approx([0.5, 0.5], 1e-12),
            "compressibility_fails": True,
            "m_achievable_independent": False,
            "unique_certificate": True,
        },
        extras={"distinct_pair": (0, 1)},
    )


@_register
def _build_identity01(points: int = 11):
    poset = Poset.chain(points)
    k = FiniteKernel(np.eye(points), poset, "identity01")
    return Fixture(
        "identity01",
        f"identity kernel on {points} grid points of [0, 1], total order",
        k.space,
        k,
        {
            "monotone": True,
            "stationary_count": points,
            "pr_holds": True,
            "unique_certificate": False,
        },
        params={"points": points},
        extras={"anchors": (0, points - 1), "values": np.linspace(0.0, 1.0, points)},
    )


def birth_death_kernel(n=5, up=0.3, down=0.5):
    P = np.zeros((n, n))
    for i in range(n):
        if i < n - 1:
            P[i, i + 1] = up
        if i > 0:
            P[i, i - 1] = down
        P[i, i] = 1.0 - P[i].sum()
    return FiniteKernel(P, Poset.chain(n), "birth_death")


@_register
def _build_birth_death(n: int = 5, up: float = 0.3, down: float = 0.5):
    k = birth_death_kernel(n, up, down)
    return Fixture(
        "birth_death",
        "birth-death chain, boundary holding mass kept in place",
        k.space,
        k,
        {
            "monotone": True,
            "stationary_count": 1,
            "pr_holds": True,
            "regeneration_matches_restart": True,
            "iteration_reaches_stationary": True,
            "unique_certificate": True,
        },
        params={"n": n, "up": up, "down": down},
        extras={"anchors": (1, 3)},
    )


def average_update(x, u):
    return 0.5 * (x + u)


def average_kernel():
    return RecursionKernel(
        name="average_chain",
        space=RealInterval(0.0, 1.0),
        update=average_update,
        update_batch=lambda X, U: 0.5 * (np.asarray(X, float) + np.asarray(U)),
        monotone=True,
        params={"f": "(x + u) / 2"},
    )


def average_discretized(m: int = 64) -> FiniteKernel:
    """Cell chain: from cell ``i`` (midpoint ``m_i``) the next point is uniform on
    ``[m_i / 2, (m_i + 1) / 2]``; row ``i`` holds its overlap with each cell."""
    edges = np.arange(m + 1) / m
    mids = (np.arange(m) + 0.5) / m
    lo = mids / 2
    hi = lo + 0.5
    overlap = np.clip(
        np.minimum(hi[:, None], edges[None, 1:]) - np.maximum(lo[:, None], edges[None, :-1]), 0.0, None
    )
    return FiniteKernel(overlap / 0.5, Poset.chain(m), f"average_chain_{m}")


def average_split_quadrature():
    """Two-step split masses at pivot 1/2 from the worst starts, by numerical quadrature.

    From ``x = 1``: ``X_2 = (1 + U1)/4 + U2/2 <= 1/2``; from ``x = 0``:
    ``X_2 = U1/4 + U2/2 >= 1/2``.
    """
    low, _ = integrate.dblquad(
        lambda u2, u1: 1.0, 0.0, 1.0, 0.0, lambda u1: float(np.clip((1.0 - u1) / 2.0, 0.0, 1.0))
    )
    high, _ = integrate.dblquad(
        lambda u2, u1: 1.0, 0.0, 1.0, lambda u1: float(np.clip((2.0 - u1) / 2.0, 0.0, 1.0)), 1.0
    )
    return low, high


def average_certificate(eps: float = 0.25, N: int = 2) -> RateCertificate:
    split = SplitCertificate("full", 0.5, "x <= 0.5", "x >= 0.5", N, eps, {"method": "quadrature"})
    return RateCertificate.from_split(split)


@_register
def _build_average_chain(cells: int = 64):
    k = average_kernel()
    return Fixture(
        "average_chain",
        "X' = (X + U) / 2 on [0, 1]",
        k.space,
        k,
        {
            "monotone": True,
            "pathwise_order": True,
            "split_eps": Approx(0.25, 1e-8),
            "discretized_split_at_least_quarter": True,
            "rate_certificate_verified": True,
        },
        params={"cells": cells, "c": 0.5, "N": 2},
        extras={"discretize": lambda: average_discretized(cells)},
    )


# -- 2D lattice walk


_SRW_STEPS = np.array([(a - 1, b - 1) for a in range(3) for b in range(3)], dtype=np.int64)


def srw_increments(U):
    """Decode ``u`` into two independent ternary increments: ``k = floor(9u)``,
    increments ``(k // 3 - 1, k % 3 - 1)``."""
    return _SRW_STEPS[np.minimum((np.asarray(U) * 9.0).astype(np.int64), 8)]


def srw_kernel():
    return RecursionKernel(
        name="srw2d",
        space=IntLattice(2),
        update=lambda x, u: tuple(int(a) for a in np.asarray(x) + srw_increments(u)),
        update_batch=lambda X, U: np.asarray(X, np.int64) + srw_increments(U),
        monotone=True,
        params={"increments": "each coordinate -1, 0, 1 with probability 1/3"},
    )


def _same(X, Y):
    return np.all(X == Y, axis=-1)


def _both_origin(X, Y):
    return np.all(X == 0, axis=-1) & np.all(Y == 0, axis=-1)


def srw_policy():
    """Independent until the walks meet, then common noise."""
    return Switched.linear([(Independent(), PairIn(_same, "diagonal")), (CommonNoise(), None)])


@_register
def _build_srw2d():
    k = srw_kernel()
    return Fixture(
        "srw2d",
        "simple random walk on Z^2 with independent ternary coordinates",
        k.space,
        k,
        {
            "monotone": True,
            "post_switch_identical": True,
            "switched_success_nondecreasing": True,
        },
        params={"x0": [1, 0], "y0": [0, 2]},
        extras={
            "policy": srw_policy(),
            "H": PairIn(_both_origin, "origin x origin"),
            "pair_sets": {"diagonal": _same, "origin": _both_origin},
            "starts": ((1, 0), (0, 2)),
        },
    )


# -- shift chain


@dataclass(frozen=True)
class ShiftIndexSpace(OrderedSpace):
    """States ``0`` and ``1/k`` stored by index ``k`` (``0`` for the point 0); trivial order."""

    def leq(self, x, y):
        return int(x) == int(y)

    def leq_batch(self, X, Y):
        return np.asarray(X) == np.asarray(Y)

    @staticmethod
    def value(k):
        k = np.asarray(k, float)
        return np.where(k == 0, 0.0, 1.0 / np.maximum(k, 1.0))

    def distance(self, x, y):
        return float(abs(self.value(x) - self.value(y)))

    def contains(self, x):
        try:
            return int(x) == x and x >= 0
        except (TypeError, ValueError):
            return False

    def as_state(self, x):
        return int(x)

    def describe(self):
        return {"type": "shift_index", "values": "0, 1, 1/2, 1/3, ...", "order": "trivial"}


def shift_matrix(depth: int) -> FiniteKernel:
    """Truncation to indices ``0..depth``; the last state absorbs."""
    n = depth + 1
    P = np.zeros((n, n))
    for k in range(n - 1):
        P[k, k] = 0.5
        P[k, k + 1] = 0.5
    P[n - 1, n - 1] = 1.0
    return FiniteKernel(P, Poset.antichain(n), f"shift_chain_{depth}")


def shift_recursion(depth: int):
    space = ShiftIndexSpace()
    return RecursionKernel(
        name="shift_chain",
        space=space,
        update=lambda k, u: min(int(k) + (u >= 0.5), depth),
        update_batch=lambda K, U: np.minimum(np.asarray(K, np.int64) + (np.asarray(U) >= 0.5), depth),
        monotone=True,
        params={"depth": depth},
    )


def shift_distance_to_zero(n: int, reps: int, seed: int, depth: int = 10_000, jobs: int = 1) -> float:
    """Simulated Wasserstein-1 distance of the time-``n`` law from the point mass at 0."""
    k = shift_recursion(depth)

    def block(idx):
        K = np.zeros(idx.size, dtype=np.int64)
        keys = stream_keys(seed, idx, COORD_X)
        for t in range(n):
            K = k.step_batch(K, uniforms(keys, t))
        return ShiftIndexSpace.value(K)

    values = np.concatenate(run_replications(block, reps, jobs))
    return float(values.sum() / reps)


def shift_distance_exact(n: int) -> float:
    """``E[1/K]`` with ``K ~ Binomial(n, 1/2)`` and ``1/0 := 0``."""
    ks = np.arange(1, n + 1)
    return float(np.sum(stats.binom.pmf(ks, n, 0.5) / ks))


@_register
def _build_shift_chain(depth: int = 10_000, exact_depth: int = 200):
    k = shift_recursion(depth)
    return Fixture(
        "shift_chain",
        "0 -> 1 -> 1/2 -> 1/3 -> ..., holding with probability 1/2; trivial order",
        k.space,
        k,
        {
            "monotone": True,
            "no_stationary_symbolic": True,
            "truncated_stationary_at_boundary": True,
            "weak_limit_delta0": True,
        },
        params={"depth": depth, "exact_depth": exact_depth},
        extras={
            "matrix": lambda: shift_matrix(exact_depth),
            "listing": list(range(exact_depth + 1)),
        },
    )


# -- remex chain


def remex_matrix(depth: int) -> tuple[FiniteKernel, np.ndarray]:
    """States ``-1, -1/2, ..., -1/depth, 1/depth, ..., 1`` in increasing order."""
    neg = -1.0 / np.arange(1, depth + 1)
    pos = 1.0 / np.arange(depth, 0, -1)
    values = np.concatenate([neg, pos])
    n = 2 * depth
    P = np.zeros((n, n))
    for i in range(depth):
        P[i, min(i + 1, depth - 1)] = 1.0  # -1/m -> -1/(m+1)
    for i in range(depth, n):
        P[i, max(i - 1, depth)] = 1.0  # 1/m -> 1/(m+1)
    return FiniteKernel(P, Poset.chain(n), f"remex_chain_{depth}"), values


@_register
def _build_remex_chain(depth: int = 200):
    k, values = remex_matrix(depth)
    # interleave 1, -1, 1/2, -1/2, ... for the symbolic balance window
    listing = []
    for m in range(depth):
        listing += [2 * depth - 1 - m, m]
    return Fixture(
        "remex_chain",
        "deterministic 1/n -> 1/(n+1) and -1/n -> -1/(n+1); order of the real line",
        RealInterval(-1.0, 1.0),
        k,
        {
            "monotone": True,
            "bmc_fails": True,
            "pr_holds": True,
            "no_stationary_symbolic": True,
            "truncated_stationary_at_boundary": True,
        },
        params={"depth": depth},
        extras={
            "matrix": lambda: k,
            "listing": listing,
            "values": values,
            "anchors": (0, 2 * depth - 1),
        },
    )


# -- layered chain


def layered_g(x):
    return 0.5 * np.tanh(x)


def _sinhc(d):
    small = np.abs(d) < 1e-4
    safe = np.where(small, 1.0, d)
    return np.where(small, 1.0 + d * d / 6.0, np.sinh(safe) / safe)


class LayeredPairTracker:
    """Tracks a common-noise pair on the layered space without float coalescence.

    State: both layers, the lower chain's position ``x``, the gap ``d = y - x``
    and, across layers, ``r = log2(d / h)`` where ``h`` is the current layer
    threshold. With ``s = sinh(d) / (d cosh x cosh y)`` one step maps
    ``d -> d (1 - s/2)`` and, since ``h`` halves, ``r -> r + log2(2 - s)``.
    Order holds iff ``d >= 0`` within a layer and ``r >= 0`` across layers.
    """

    def init(self, X, Y):
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        L1, L2 = X[:, 0].copy(), Y[:, 0].copy()
        x = X[:, 1].copy()
        d = Y[:, 1] - X[:, 1]
        h = layer_gap_float(L1, L2)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(L1 == L2, np.nan, np.log2(d / np.where(h > 0, h, 1.0)))
        return L1, L2, x, d, r

    def step(self, state, U):
        L1, L2, x, d, r = state
        y = x + d
        s = _sinhc(d) / (np.cosh(x) * np.cosh(y))
        w = special.ndtri(U)
        x2 = x - layered_g(x) + w
        d2 = d * (1.0 - 0.5 * s)
        r2 = r + np.log2(2.0 - s)
        return np.where(L1 == 0, 0.0, L1 + 1), np.where(L2 == 0, 0.0, L2 + 1), x2, d2, r2

    def ordered(self, state):
        L1, L2, _, d, r = state
        return np.where(L1 == L2, d >= 0.0, r >= 0.0)


def layered_update_batch(X, U):
    X = np.asarray(X, float)
    L, x = X[:, 0], X[:, 1]
    x2 = x - layered_g(x) + special.ndtri(U)
    return np.column_stack([np.where(L == 0, 0.0, L + 1.0), x2])


def layered_kernel():
    def update(state, u):
        layer, x = state
        return (0 if layer == 0 else int(layer) + 1, float(x - layered_g(x) + special.ndtri(u)))

    return RecursionKernel(
        name="layered_chain",
        space=Layered(),
        update=update,
        update_batch=layered_update_batch,
        monotone=True,
        pair_tracker=LayeredPairTracker(),
        params={"g": "tanh(x) / 2", "noise": "standard normal"},
    )


def layered_random_starts(count: int, rng: np.random.Generator, max_layer: int = 3):
    """Random ordered pairs ``((i, x), (j, y))`` with a strict margin above the threshold."""
    out = []
    for _ in range(count):
        i, j = (int(v) for v in rng.integers(0, max_layer + 1, size=2))
        x = float(rng.normal())
        if i == j:
            y = x + float(abs(rng.normal()))
        else:
            h = float(layer_gap_float(i, j))
            y = x + h * (1.0 + float(rng.uniform(0.01, 1.0)))
        out.append(((i, x), (j, y)))
    return out


def _low(X, Y):
    return (np.asarray(X)[:, 1] <= -1.0) & (np.asarray(Y)[:, 1] >= 1.0)


@_register
def _build_layered_chain():
    k = layered_kernel()
    return Fixture(
        "layered_chain",
        "layer 0 recurrent, layers j >= 1 drift upward; thresholds h between layers",
        k.space,
        k,
        {
            "order_example": True,
            "noise_monotone": True,
            "pathwise_order": True,
            "transient_layers": True,
            "ab_achievable_empirical": True,
        },
        extras={"AxB": PairIn(_low, "AxB")},
    )


# ---------------------------------------------------------------------------
# verdict checkers

VERDICTS: dict[str, Callable[[Fixture], object]] = {}


def _verdict(fn):
    VERDICTS[fn.__name__.removeprefix("_v_")] = fn
    return fn


@_verdict
def _v_monotone(fx):
    k = fx.kernel
    if isinstance(k, FiniteKernel):
        return is_monotone(k).monotone
    if "matrix" in fx.extras:
        return is_monotone(fx.extras["matrix"]()).monotone
    return sampled_monotone(fx, 2000, seed=1)


def sampled_monotone(fx, samples, seed):
    """``x <= y`` implies ``f(x, u) <= f(y, u)`` on sampled ordered pairs."""
    rng = np.random.default_rng(seed)
    k = fx.kernel
    U = rng.uniform(size=samples)
    if isinstance(k.space, RealInterval):
        a, b = np.sort(rng.uniform(k.space.lo, k.space.hi, size=(2, samples)), axis=0)
        return bool(k.space.leq_batch(k.step_batch(a, U), k.step_batch(b, U)).all())
    if isinstance(k.space, IntLattice):
        a = rng.integers(-5, 6, size=(samples, k.space.d))
        b = a + rng.integers(0, 3, size=(samples, k.space.d))
        return bool(k.space.leq_batch(k.step_batch(a, U), k.step_batch(b, U)).all())
    raise NotImplementedError(type(k.space).__name__)


@_verdict
def _v_stationary_count(fx):
    return len(stationary_report(fx.kernel).closed_classes)


@_verdict
def _v_stationary_law(fx):
    return stationary_report(fx.kernel).stationary_per_class[0].p


@_verdict
def _v_unique_certificate(fx):
    return uniqueness_certificate(fx.kernel).ok


@_verdict
def _v_pr_holds(fx):
    return check_pr(fx.kernel, RegenSpec(*fx.extras["anchors"])).holds


@_verdict
def _v_compressibility_fails(fx, nmax=20):
    from .certify import compressibility_exact

    x, y = fx.extras["distinct_pair"]
    return all(compressibility_exact(fx.kernel, x, y, n) == 1.0 for n in range(nmax + 1))


@_verdict
def _v_m_achievable_independent(fx, nmax=200):
    k = fx.kernel
    M = PairIn(order_pairs(k.poset))
    worst = 0.0
    for x in range(k.n):
        for y in range(k.n):
            worst = max(worst, exact_tau_tail(k, k, Independent(), M, x, y, nmax)[-1])
    return bool(worst < 1e-6)


@_verdict
def _v_regeneration_matches_restart(fx):
    k = fx.kernel
    spec = RegenSpec(*fx.extras["anchors"])
    lo = pi_minus_exact(k, spec).pi.p
    oracle = restarted_stationary(k, spec.x0, spec.lower_restart(k)).p
    return bool(np.abs(lo - oracle).max() <= 1e-10)


@_verdict
def _v_iteration_reaches_stationary(fx):
    k = fx.kernel
    spec = RegenSpec(*fx.extras["anchors"])
    res = monotone_iteration(k, pi_minus_exact(k, spec).pi, pi_plus_exact(k, spec).pi, keep_sequence=False)
    pi = stationary_report(k).stationary_per_class[0].p
    return bool(np.abs(res.limit.p - pi).max() <= 1e-8)


@_verdict
def _v_pathwise_order(fx, steps=200, reps=20, pairs=5, seed=11):
    rng = np.random.default_rng(seed)
    k = fx.kernel
    if isinstance(k.space, Layered):
        starts = layered_random_starts(pairs, rng)
    else:
        starts = [tuple(sorted(rng.uniform(size=2))) for _ in range(pairs)]
    return pathwise_order_check(k, starts, steps, reps, seed).ok


@_verdict
def _v_split_eps(fx):
    low, high = average_split_quadrature()
    return min(low, high)


@_verdict
def _v_discretized_split_at_least_quarter(fx):
    from .certify import find_split

    split = find_split(fx.extras["discretize"](), fx.params["N"])
    return bool(split is not None and split.eps >= 0.25 - 1e-12)


@_verdict
def _v_rate_certificate_verified(fx, nmax=200):
    return verify_rate(fx.extras["discretize"](), average_certificate(), nmax).ok


@_verdict
def _v_post_switch_identical(fx, horizon=300, runs=5):
    k = fx.kernel
    x0, y0 = fx.extras["starts"]
    for rep in range(runs):
        path = simulate_pair(k, k, fx.extras["policy"], x0, y0, horizon, seed=3, rep=rep)
        for x, y, s in zip(path.xs, path.ys, path.stages):
            if s == 1 and x != y:
                return False
    return True


@_verdict
def _v_switched_success_nondecreasing(fx, horizons=(10, 100, 1000), reps=400, seed=5):
    k = fx.kernel
    x0, y0 = fx.extras["starts"]
    est = estimate_tau(k, fx.extras["policy"], fx.extras["H"], x0, y0, max(horizons), reps, seed)
    probs = [est.success_probability(T) for T in horizons]
    return bool(all(a <= b for a, b in zip(probs, probs[1:])) and probs[-1] > 0)


def _rational(x):
    # decimal-entered probabilities must keep exact unit row sums
    return sympy.Rational(Fraction(float(x)).limit_denominator(10**9))


def balance_forces_zero(k: FiniteKernel, listing, window: int = 100) -> bool:
    """Solve ``pi P = pi`` symbolically on the first ``window`` listed states.

    Only balance equations whose inflow comes entirely from the window are used,
    so the conclusion does not depend on the truncation. True iff the solution
    forces every listed mass to 0.
    """
    idx = list(listing[:window])
    pos = {s: i for i, s in enumerate(idx)}
    p = sympy.symbols(f"p0:{len(idx)}")
    eqs = []
    for s in idx:
        inflow = np.flatnonzero(k.P[:, s] > 0)
        if not all(int(i) in pos for i in inflow):
            continue
        rhs = sum(_rational(k.P[i, s]) * p[pos[int(i)]] for i in inflow)
        eqs.append(sympy.Eq(p[pos[s]], rhs))
    sol = sympy.solve(eqs, p, dict=True)
    return len(sol) == 1 and all(sol[0].get(v, v) == 0 for v in p)


@_verdict
def _v_no_stationary_symbolic(fx):
    return balance_forces_zero(fx.extras["matrix"](), fx.extras["listing"], 100)


@_verdict
def _v_truncated_stationary_at_boundary(fx):
    k = fx.extras["matrix"]()
    rep = stationary_report(k)
    boundary = set(np.flatnonzero(np.diag(k.P) == 1.0).tolist())
    return all(len(c) == 1 and c[0] in boundary for c in rep.closed_classes)


@_verdict
def _v_weak_limit_delta0(fx, n=2000, reps=200, seed=2):
    return shift_distance_to_zero(n, reps, seed, fx.params["depth"]) < 0.05


@_verdict
def _v_bmc_fails(fx):
    """``-1/m`` increases, is bounded by every positive state, and its limit 0 is not a state."""
    m = sympy.Symbol("m", positive=True, integer=True)
    seq = -1 / m
    increasing = sympy.simplify(seq.subs(m, m + 1) - seq) > 0
    limit = sympy.limit(seq, m, sympy.oo)
    values = fx.extras["values"]
    return bool(increasing and limit == 0 and not np.any(values == 0.0))


@_verdict
def _v_order_example(fx):
    sp = fx.space
    h = float(layer_gap_float(0, 1))
    return (
        h == 0.5
        and sp.leq((0, 0.0), (1, 0.5))
        and not sp.leq((0, 0.0), (1, 0.5 - 1e-12))
        and sp.leq((1, 0.0), (0, 0.5))
    )


@_verdict
def _v_noise_monotone(fx):
    xs = np.linspace(-20.0, 20.0, 200_001)
    phi = xs - layered_g(xs)
    deriv = 1.0 - 0.5 / np.cosh(xs) ** 2
    return bool(np.all(np.diff(phi) > 0) and deriv.min() >= 0.5)


@_verdict
def _v_transient_layers(fx, steps=50, reps=100, seed=4):
    k = fx.kernel
    X = np.tile([1.0, 0.0], (reps, 1))
    keys = stream_keys(seed, np.arange(reps), COORD_X)
    for t in range(steps):
        X = k.step_batch(X, uniforms(keys, t))
    return bool(np.all(X[:, 0] == 1 + steps))


@_verdict
def _v_ab_achievable_empirical(fx, horizon=200, reps=500, seed=6):
    k = fx.kernel
    est = estimate_tau(k, Independent(), fx.extras["AxB"], (0, 0.0), (1, 0.0), horizon, reps, seed)
    return est.censored_fraction < 0.01


@dataclass
class VerdictResult:
    fixture: str
    verdict: str
    expected: object
    actual: object

    @property
    def ok(self):
        if hasattr(self.expected, "matches"):
            return bool(self.expected.matches(self.actual))
        return bool(self.actual == self.expected)


def check_verdict(fx: Fixture, name: str) -> VerdictResult:
    return VerdictResult(fx.name, name, fx.expected[name], VERDICTS[name](fx))


def check_fixture(fx: Fixture) -> list[VerdictResult]:
    return [check_verdict(fx, v) for v in sorted(fx.expected)]
