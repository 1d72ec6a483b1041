"""Coupling policies for pairs of chains, coupled simulation and coupling-time tails.

A policy is either *basic* (one time-homogeneous joint rule) or :class:`Switched`,
a finite stage machine whose stage index is part of the coupled state; stages
change when an exit predicate fires, which keeps the coupled process Markov.

Randomness follows the counter-based contract in :mod:`monotone_mc.rng`: the
draw used by replication ``r`` for coordinate ``c`` at step ``t`` depends on
``(seed, r, c, t)`` only. ``Independent`` uses the X and Y coordinates,
``CommonNoise`` feeds the X draw to both chains and joint rules (Strassen,
explicit joint matrices) use a third coordinate.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .errors import BadSplit, CapExceeded, PolicyInapplicable
from .kernel import FiniteKernel, RecursionKernel
from .order import Dist, _quantile_coupling, strassen_coupling
from .rng import COORD_JOINT, COORD_X, COORD_Y, stream_keys, uniforms

DEFAULT_PAIR_CAP = 1 << 16
DEFAULT_CHUNK = 4096


# ---------------------------------------------------------------------------
# stopping predicates


class Predicate:
    """Test on the coupled state at time ``n``.

    ``steps`` is the number of steps taken since the current stage was entered,
    which makes "after one step in this stage" expressible without lookahead.
    """

    def __call__(self, X, Y, n, steps) -> np.ndarray:
        raise NotImplementedError

    def exact_mask(self, nx, ny, n, fresh) -> np.ndarray:
        """Pairs on which the predicate fires, for exact product-chain analysis."""
        raise PolicyInapplicable(f"{type(self).__name__} has no exact form")

    def __and__(self, other):
        return Both(self, other)


@dataclass(frozen=True)
class PairIn(Predicate):
    """Pair lies in a set given as a boolean matrix (finite) or a batch test."""

    pairs: object
    name: str = ""

    def __call__(self, X, Y, n, steps):
        if callable(self.pairs):
            return np.asarray(self.pairs(X, Y), dtype=bool)
        return self.pairs[np.asarray(X, int), np.asarray(Y, int)]

    def exact_mask(self, nx, ny, n, fresh):
        if callable(self.pairs):
            raise PolicyInapplicable("PairIn with a callable set has no exact form")
        return np.asarray(self.pairs, dtype=bool)


@dataclass(frozen=True)
class FirstIn(Predicate):
    """First coordinate lies in a set (boolean vector or batch test)."""

    states: object

    def __call__(self, X, Y, n, steps):
        if callable(self.states):
            return np.asarray(self.states(X), dtype=bool)
        return np.asarray(self.states, dtype=bool)[np.asarray(X, int)]

    def exact_mask(self, nx, ny, n, fresh):
        if callable(self.states):
            raise PolicyInapplicable("FirstIn with a callable set has no exact form")
        return np.repeat(np.asarray(self.states, dtype=bool)[:, None], ny, axis=1)


@dataclass(frozen=True)
class TimeAtLeast(Predicate):
    T: int

    def __call__(self, X, Y, n, steps):
        return np.full(len(X), n >= self.T)

    def exact_mask(self, nx, ny, n, fresh):
        return np.full((nx, ny), n >= self.T)


@dataclass(frozen=True)
class StepsInStage(Predicate):
    k: int = 1

    def __call__(self, X, Y, n, steps):
        return np.asarray(steps) >= self.k

    def exact_mask(self, nx, ny, n, fresh):
        if self.k > 1:
            raise PolicyInapplicable("exact analysis supports StepsInStage(0 or 1) only")
        return np.full((nx, ny), self.k == 0 or not fresh)


@dataclass(frozen=True)
class Both(Predicate):
    a: Predicate
    b: Predicate

    def __call__(self, X, Y, n, steps):
        return self.a(X, Y, n, steps) & self.b(X, Y, n, steps)

    def exact_mask(self, nx, ny, n, fresh):
        return self.a.exact_mask(nx, ny, n, fresh) & self.b.exact_mask(nx, ny, n, fresh)


# ---------------------------------------------------------------------------
# pair sets on finite spaces


def diagonal_pairs(n):
    return np.eye(n, dtype=bool)


def order_pairs(poset):
    """The set ``M = {(x, y): x <= y}``."""
    return poset.leq.copy()


def product_pairs(n, A, B):
    a = np.zeros(n, dtype=bool)
    b = np.zeros(n, dtype=bool)
    a[list(A)] = True
    b[list(B)] = True
    return np.outer(a, b)


def all_pairs(n):
    return np.ones((n, n), dtype=bool)


# ---------------------------------------------------------------------------
# policies


class Policy:
    pass


@dataclass(frozen=True)
class Independent(Policy):
    pass


@dataclass(frozen=True)
class CommonNoise(Policy):
    pass


@dataclass(frozen=True)
class StrassenMonotone(Policy):
    """Order-preserving joint step from ordered pairs.

    Finite kernels use a Strassen coupling of the two rows; recursions declared
    monotone in the state use common noise, which is order preserving for them.
    """


@dataclass(frozen=True)
class JointMatrix(Policy):
    """Explicit joint kernel on pairs, rows/cols indexed by ``x * n + y``."""

    J: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Stage:
    policy: Policy
    exits: tuple = ()  # ((Predicate, target_stage), ...), first firing exit wins


@dataclass(frozen=True)
class Switched(Policy):
    stages: tuple

    @classmethod
    def linear(cls, steps: Sequence[tuple]):
        """``[(policy, until), ...]``: run each policy until its predicate fires."""
        stages = []
        for i, (policy, until) in enumerate(steps):
            exits = () if until is None or i == len(steps) - 1 else ((until, i + 1),)
            stages.append(Stage(policy, exits))
        return cls(tuple(stages))


@dataclass(frozen=True)
class TwoClock(Policy):
    """Offset-clock coupling: each chain runs alone until it enters its own set,
    then the pair ``(X_{tau1+m}, Y_{tau2+m})`` moves by a Strassen coupling.

    Not Markovian as a pair process; supported by :func:`simulate_pair` only.
    """

    x_target: np.ndarray
    y_target: np.ndarray


@dataclass(frozen=True)
class LemmaCoupling(Switched):
    """Switched policy built by :func:`build_lemma_coupling`; carries its split data."""

    eps: float = 0.0
    C: tuple = ()
    A: tuple = ()
    B: tuple = ()
    N: int = 1
    inner: Policy = Independent()


def as_switched(policy: Policy) -> Switched:
    if isinstance(policy, Switched):
        return policy
    if isinstance(policy, TwoClock):
        raise PolicyInapplicable("TwoClock is not a Markovian stage policy")
    return Switched((Stage(policy),))


# ---------------------------------------------------------------------------
# joint one-step laws on finite kernels


class _JointLaws:
    """Per-pair joint rows for the finite joint policies (cached)."""

    def __init__(self, kx: FiniteKernel, ky: FiniteKernel):
        self.kx, self.ky = kx, ky
        self._strassen = {}
        self._common = {}

    def strassen(self, x, y):
        key = (x, y)
        if key not in self._strassen:
            if not self.kx.poset.le(x, y):
                raise PolicyInapplicable(f"Strassen step from unordered pair {(x, y)}")
            lam = strassen_coupling(self.kx.P[x], self.ky.P[y], self.kx.poset).lam
            self._strassen[key] = lam
        return self._strassen[key]

    def common(self, x, y):
        key = (x, y)
        if key not in self._common:
            self._common[key] = _quantile_coupling(
                Dist(self.kx.P[x]), Dist(self.ky.P[y]), list(self.kx.poset.linear_extension)
            )
        return self._common[key]

    def row(self, policy, x, y):
        if isinstance(policy, StrassenMonotone):
            return self.strassen(x, y)
        if isinstance(policy, CommonNoise):
            return self.common(x, y)
        if isinstance(policy, Independent):
            return np.outer(self.kx.P[x], self.ky.P[y])
        if isinstance(policy, JointMatrix):
            n = self.ky.n
            return np.asarray(policy.J)[x * n + y].reshape(self.kx.n, n)
        raise PolicyInapplicable(f"no joint law for {type(policy).__name__}")


def joint_step_matrix(policy: Policy, kx: FiniteKernel, ky: FiniteKernel | None = None):
    """Dense joint one-step matrix over pairs (rows ``x * n + y``).

    Rows from which the policy is inapplicable (Strassen from unordered pairs)
    are NaN.
    """
    ky = ky or kx
    laws = _JointLaws(kx, ky)
    nx, ny = kx.n, ky.n
    J = np.full((nx * ny, nx * ny), np.nan)
    for x in range(nx):
        for y in range(ny):
            try:
                J[x * ny + y] = laws.row(policy, x, y).ravel()
            except PolicyInapplicable:
                pass
    return J


# ---------------------------------------------------------------------------
# batch simulation engine


def _is_finite(k):
    return isinstance(k, FiniteKernel)


def _stack_states(k, s, R):
    if _is_finite(k):
        return np.full(R, int(s), dtype=np.int64)
    s = np.asarray(k.space.as_state(s))
    return np.repeat(s[None, ...], R, axis=0)


class _Engine:
    def __init__(self, kx, ky, policy, seed):
        self.kx, self.ky = kx, ky
        self.policy = as_switched(policy)
        self.seed = int(seed)
        self.finite = _is_finite(kx) and _is_finite(ky)
        if _is_finite(kx) != _is_finite(ky):
            raise PolicyInapplicable("kernels must share a representation")
        self.laws = _JointLaws(kx, ky) if self.finite else None
        for st in self.policy.stages:
            p = st.policy
            if isinstance(p, JointMatrix) and not self.finite:
                raise PolicyInapplicable("JointMatrix needs finite kernels")
            if isinstance(p, StrassenMonotone) and not self.finite:
                if not (kx.monotone and ky.monotone):
                    raise PolicyInapplicable("StrassenMonotone on a recursion needs monotone updates")

    def _joint_sample(self, policy, X, Y, U):
        codes = X * self.ky.n + Y
        X2 = np.empty_like(X)
        Y2 = np.empty_like(Y)
        for code in np.unique(codes):
            sel = codes == code
            x, y = divmod(int(code), self.ky.n)
            lam = self.laws.row(policy, x, y).ravel()
            cum = np.cumsum(lam)
            cum[-1] = 1.0
            idx = np.minimum(np.searchsorted(cum, U[sel], side="right"), lam.size - 1)
            X2[sel], Y2[sel] = np.divmod(idx, self.ky.n)
        return X2, Y2

    def _apply(self, policy, X, Y, keys, t):
        kx_keys, ky_keys, kj_keys = keys
        if isinstance(policy, Independent):
            return (
                self.kx.step_batch(X, uniforms(kx_keys, t)),
                self.ky.step_batch(Y, uniforms(ky_keys, t)),
            )
        if isinstance(policy, CommonNoise) or (
            isinstance(policy, StrassenMonotone) and not self.finite
        ):
            U = uniforms(kx_keys, t)
            if isinstance(policy, StrassenMonotone) and not self.kx.space.leq_batch(X, Y).all():
                raise PolicyInapplicable("monotone step from an unordered pair")
            return self.kx.step_batch(X, U), self.ky.step_batch(Y, U)
        if isinstance(policy, (StrassenMonotone, JointMatrix)):
            return self._joint_sample(policy, X, Y, uniforms(kj_keys, t))
        raise PolicyInapplicable(f"cannot simulate {type(policy).__name__}")

    def _cascade(self, X, Y, S, steps, t, fresh_mask):
        stages = self.policy.stages
        pending = np.ones(len(S), dtype=bool)
        for _ in range(len(stages) + 1):
            moved = np.zeros(len(S), dtype=bool)
            for s, st in enumerate(stages):
                if not st.exits:
                    continue
                lanes = np.flatnonzero(pending & (S == s))
                if lanes.size == 0:
                    continue
                undecided = np.ones(lanes.size, dtype=bool)
                for pred, target in st.exits:
                    fire = undecided & pred(X[lanes], Y[lanes], t, steps[lanes])
                    if fire.any():
                        hit = lanes[fire]
                        S[hit] = target
                        steps[hit] = 0
                        moved[hit] = True
                        undecided &= ~fire
            if not moved.any():
                return
            pending = moved
        raise PolicyInapplicable("stage switching does not settle (cyclic exits)")

    def run(self, x0, y0, horizon, reps, H=None, record=False, on_step=None):
        """Simulate lanes ``reps`` (replication indices) for ``horizon`` steps.

        Returns ``tau`` (``horizon + 1`` when censored) and, if ``record``, the
        stacked paths ``(xs, ys, stages)`` with time on the first axis.
        """
        reps = np.asarray(reps, dtype=np.int64)
        R = reps.size
        X = _stack_states(self.kx, x0, R)
        Y = _stack_states(self.ky, y0, R)
        S = np.zeros(R, dtype=np.int64)
        steps = np.zeros(R, dtype=np.int64)
        keys_all = (
            stream_keys(self.seed, reps, COORD_X),
            stream_keys(self.seed, reps, COORD_Y),
            stream_keys(self.seed, reps, COORD_JOINT),
        )
        tau = np.full(R, horizon + 1, dtype=np.int64)
        active = np.arange(R)
        keys = keys_all
        single = len(self.policy.stages) == 1
        xs, ys, ss = [], [], []
        for t in range(horizon + 1):
            if not single:
                self._cascade(X, Y, S, steps, t, None)
            if record:
                xs.append(X.copy())
                ys.append(Y.copy())
                ss.append(S.copy())
            if on_step is not None:
                on_step(t, X, Y, S, active)
            if H is not None:
                hit = np.asarray(H(X, Y, t, steps), dtype=bool)
                if hit.any():
                    tau[active[hit]] = t
                    if not record:
                        keep = ~hit
                        active, X, Y, S, steps = active[keep], X[keep], Y[keep], S[keep], steps[keep]
                        keys = tuple(k[keep] for k in keys)
                        if active.size == 0:
                            break
            if t == horizon:
                break
            if single:
                X, Y = self._apply(self.policy.stages[0].policy, X, Y, keys, t)
            else:
                Xn, Yn = np.empty_like(X), np.empty_like(Y)
                for s in np.unique(S):
                    sel = S == s
                    sub_keys = tuple(k[sel] for k in keys)
                    Xn[sel], Yn[sel] = self._apply(
                        self.policy.stages[s].policy, X[sel], Y[sel], sub_keys, t
                    )
                X, Y = Xn, Yn
            steps += 1
        if record:
            return tau, (np.array(xs), np.array(ys), np.array(ss))
        return tau, None


def _chunks(reps, chunk_size):
    return [np.arange(a, min(a + chunk_size, reps)) for a in range(0, reps, chunk_size)]


def run_replications(fn: Callable, reps: int, jobs: int = 1, chunk_size: int = DEFAULT_CHUNK):
    """Apply ``fn`` to contiguous replication blocks, returning results in block order.

    Blocks have a fixed size independent of ``jobs``, and every replication draws
    from its own counter-based stream, so results do not depend on ``jobs``.
    """
    blocks = _chunks(reps, max(1, int(chunk_size)))
    if jobs <= 1:
        parts = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(fn, blocks))
    return parts


# ---------------------------------------------------------------------------
# public simulation API


@dataclass
class CoupledPath:
    xs: list
    ys: list
    stages: list
    x_offset: int = 0
    y_offset: int = 0

    def __len__(self):
        return len(self.xs)


def _to_py(k, s):
    if _is_finite(k):
        return int(s)
    return k.space.as_state(s.tolist() if hasattr(s, "tolist") else s)


def simulate_pair(kx, ky, policy: Policy, x0, y0, horizon: int, seed: int, rep: int = 0) -> CoupledPath:
    """One coupled path of length ``horizon + 1``, deterministic in ``(inputs, seed, rep)``."""
    ky = ky or kx
    if isinstance(policy, TwoClock):
        return _simulate_two_clock(kx, policy, x0, y0, horizon, seed, rep)
    if isinstance(policy, StrassenMonotone) and not kx.space.leq(x0, y0):
        raise PolicyInapplicable(f"StrassenMonotone from unordered pair {(x0, y0)}")
    eng = _Engine(kx, ky, policy, seed)
    _, (xs, ys, ss) = eng.run(x0, y0, horizon, np.array([rep]), record=True)
    return CoupledPath(
        [_to_py(kx, x[0]) for x in xs],
        [_to_py(ky, y[0]) for y in ys],
        [int(s[0]) for s in ss],
    )


def _simulate_two_clock(k: FiniteKernel, policy: TwoClock, x0, y0, horizon, seed, rep):
    if not _is_finite(k):
        raise PolicyInapplicable("TwoClock needs a finite kernel")
    keys = [stream_keys(seed, np.array([rep]), c) for c in (COORD_X, COORD_Y, COORD_JOINT)]
    A = np.asarray(policy.x_target, dtype=bool)
    B = np.asarray(policy.y_target, dtype=bool)

    def solo(start, target, key):
        path = [int(start)]
        t = 0
        while not target[path[-1]]:
            if t == horizon:
                return path, None
            path.append(int(k.step_batch(np.array([path[-1]]), uniforms(key, t))[0]))
            t += 1
        return path, t

    xp, t1 = solo(x0, A, keys[0])
    yp, t2 = solo(y0, B, keys[1])
    if t1 is None or t2 is None:
        return CoupledPath(xp, yp, [0] * max(len(xp), len(yp)), t1 or -1, t2 or -1)
    laws = _JointLaws(k, k)
    x, y = xp[-1], yp[-1]
    xs, ys = [x], [y]
    for m in range(horizon - max(t1, t2)):
        lam = laws.strassen(x, y).ravel()
        cum = np.cumsum(lam)
        cum[-1] = 1.0
        u = uniforms(keys[2], m)[0]
        x, y = divmod(int(min(np.searchsorted(cum, u, side="right"), lam.size - 1)), k.n)
        xs.append(x)
        ys.append(y)
    return CoupledPath(xs, ys, [1] * len(xs), t1, t2)


@dataclass
class TailEstimate:
    """Empirical tail of a coupling time with right-censoring at ``horizon``."""

    horizon: int
    reps: int
    counts: np.ndarray  # counts[n] = #{tau > n}, n = 0..horizon
    seed: int

    @property
    def tail(self):
        return self.counts / self.reps

    @property
    def censored_fraction(self):
        return float(self.counts[-1] / self.reps)

    @property
    def halfwidth(self):
        p = self.tail
        return 3.0 * np.sqrt(p * (1.0 - p) / self.reps)

    def success_probability(self, T):
        return 1.0 - float(self.counts[T] / self.reps)

    def to_json(self):
        return {
            "horizon": self.horizon,
            "reps": self.reps,
            "seed": self.seed,
            "censored_fraction": self.censored_fraction,
            "tail_counts": self.counts.tolist(),
        }

    def to_csv(self):
        lines = ["n,tail,halfwidth"]
        for n, (p, h) in enumerate(zip(self.tail, self.halfwidth)):
            lines.append(f"{n},{float(p)!r},{float(h)!r}")
        return "\n".join(lines) + "\n"


def hitting_times(
    kx, policy, H: Predicate, x0, y0, horizon, reps, seed, jobs=1, ky=None, chunk_size=DEFAULT_CHUNK
):
    """Per-replication hitting times of ``H`` (``horizon + 1`` when censored)."""
    ky = ky or kx
    eng = _Engine(kx, ky, policy, seed)

    def block(idx):
        return eng.run(x0, y0, horizon, idx, H=H)[0]

    return np.concatenate(run_replications(block, reps, jobs, chunk_size))


def estimate_tau(
    k,
    policy,
    H: Predicate,
    x0,
    y0,
    horizon: int,
    reps: int,
    seed: int,
    jobs: int = 1,
    ky=None,
    chunk_size: int = DEFAULT_CHUNK,
) -> TailEstimate:
    """Monte Carlo tail of ``tau = inf{n >= 0: (X_n, Y_n) in H}`` with censoring."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    tau = hitting_times(k, policy, H, x0, y0, horizon, reps, seed, jobs, ky, chunk_size)
    hist = np.bincount(tau, minlength=horizon + 2)
    counts = reps - np.cumsum(hist)[: horizon + 1]
    return TailEstimate(horizon, reps, counts.astype(np.int64), int(seed))


# ---------------------------------------------------------------------------
# pathwise order preservation


class _PlainTracker:
    def __init__(self, kernel):
        self.k = kernel

    def init(self, X, Y):
        return X, Y

    def step(self, state, U):
        X, Y = state
        return self.k.step_batch(X, U), self.k.step_batch(Y, U)

    def ordered(self, state):
        return self.k.space.leq_batch(*state)


@dataclass
class OrderCheck:
    steps: int
    reps: int
    pairs: int
    violations: int
    first_violation: tuple | None
    digest: str

    @property
    def ok(self):
        return self.violations == 0


def pathwise_order_check(
    kernel, starts, steps: int, reps: int, seed: int, jobs: int = 1, chunk_size: int = DEFAULT_CHUNK
) -> OrderCheck:
    """Run common-noise pairs from each ordered start and test the order every step.

    ``starts`` is a list of ``(x0, y0)`` with ``x0 <= y0``. Lane ``p * reps + r``
    uses replication stream ``p * reps + r``.
    """
    tracker = getattr(kernel, "pair_tracker", None) or _PlainTracker(kernel)
    for x0, y0 in starts:
        if not kernel.space.leq(x0, y0):
            raise PolicyInapplicable(f"start pair {(x0, y0)} is not ordered")
    total = len(starts) * reps

    def block(idx):
        pair_of = idx // reps
        X = np.array([np.asarray(kernel.space.as_state(starts[p][0])) for p in pair_of])
        Y = np.array([np.asarray(kernel.space.as_state(starts[p][1])) for p in pair_of])
        keys = stream_keys(seed, idx, COORD_X)
        st = tracker.init(X, Y)
        bad, first = 0, None
        for t in range(steps):
            st = tracker.step(st, uniforms(keys, t))
            ok = tracker.ordered(st)
            if not ok.all():
                bad += int((~ok).sum())
                if first is None:
                    first = (int(idx[np.flatnonzero(~ok)[0]]), t + 1)
        return bad, first, st

    parts = run_replications(block, total, jobs, chunk_size)
    firsts = [p[1] for p in parts if p[1] is not None]
    h = hashlib.sha256()
    for i in range(len(parts[0][2])):
        h.update(np.ascontiguousarray(np.concatenate([p[2][i] for p in parts])).tobytes())
    h = h.hexdigest()
    return OrderCheck(steps, reps, len(starts), sum(p[0] for p in parts), firsts[0] if firsts else None, h)


# ---------------------------------------------------------------------------
# exact product-chain analysis


class _ExactStepper:
    def __init__(self, kx: FiniteKernel, ky: FiniteKernel):
        self.kx, self.ky = kx, ky
        self.laws = _JointLaws(kx, ky)
        self._sparse = {}

    def _joint_sparse(self, policy):
        key = id(policy), type(policy)
        if key not in self._sparse:
            nx, ny = self.kx.n, self.ky.n
            rows, cols, vals = [], [], []
            bad = np.zeros((nx, ny), dtype=bool)
            for x in range(nx):
                for y in range(ny):
                    try:
                        lam = self.laws.row(policy, x, y).ravel()
                    except PolicyInapplicable:
                        bad[x, y] = True
                        continue
                    nz = np.flatnonzero(lam)
                    rows.extend([x * ny + y] * nz.size)
                    cols.extend(nz.tolist())
                    vals.extend(lam[nz].tolist())
            J = sparse.csr_matrix((vals, (rows, cols)), shape=(nx * ny, nx * ny))
            self._sparse[key] = (J, bad)
        return self._sparse[key]

    def apply(self, policy, V):
        if not V.any():
            return V
        if isinstance(policy, Independent):
            return self.kx.P.T @ V @ self.ky.P
        J, bad = self._joint_sparse(policy)
        if (V[bad] > 0).any():
            raise PolicyInapplicable(f"{type(policy).__name__} reached an inapplicable pair")
        return (J.T @ V.ravel()).reshape(V.shape)


def _as_pair_mask(H, nx, ny, t=0):
    if isinstance(H, Predicate):
        return H.exact_mask(nx, ny, t, False)
    return np.asarray(H, dtype=bool)


def exact_tau_tail(
    kx: FiniteKernel,
    ky: FiniteKernel | None,
    policy: Policy,
    H,
    x0: int,
    y0: int,
    nmax: int,
    cap: int = DEFAULT_PAIR_CAP,
) -> np.ndarray:
    """Exact ``P(tau > n)`` for ``n = 0..nmax`` where ``tau = inf{n >= 0: pair in H}``.

    Mass lives on (stage, x, y); each step applies the stage's joint law, then
    stage exits are resolved, then mass inside ``H`` is absorbed.
    """
    ky = ky or kx
    nx, ny = kx.n, ky.n
    sw = as_switched(policy)
    S = len(sw.stages)
    if S * nx * ny > cap:
        raise CapExceeded(f"{S * nx * ny} augmented states exceed cap {cap}")
    stepper = _ExactStepper(kx, ky)
    stepped = np.zeros((S, nx, ny))
    fresh = np.zeros((S, nx, ny))
    fresh[0, x0, y0] = 1.0
    tail = np.empty(nmax + 1)
    for t in range(nmax + 1):
        _exact_cascade(sw, stepped, fresh, t)
        total = stepped + fresh
        total[:, _as_pair_mask(H, nx, ny, t)] = 0.0
        tail[t] = total.sum()
        if t == nmax:
            break
        stepped = np.stack([stepper.apply(sw.stages[s].policy, total[s]) for s in range(S)])
        fresh = np.zeros_like(stepped)
    return np.minimum(tail, 1.0)


def _exact_cascade(sw: Switched, stepped, fresh, t):
    S, nx, ny = stepped.shape
    # stepped mass: evaluate exits once with fresh=False
    for s, st in enumerate(sw.stages):
        remaining = np.ones((nx, ny), dtype=bool)
        for pred, target in st.exits:
            fire = remaining & pred.exact_mask(nx, ny, t, False)
            fresh[target][fire] += stepped[s][fire]
            stepped[s][fire] = 0.0
            remaining &= ~fire
    for _ in range(S + 1):
        moved = False
        new = np.zeros_like(fresh)
        for s, st in enumerate(sw.stages):
            remaining = np.ones((nx, ny), dtype=bool)
            for pred, target in st.exits:
                fire = remaining & pred.exact_mask(nx, ny, t, True)
                mass = np.where(fire, fresh[s], 0.0)
                if mass.any():
                    new[target] += mass
                    fresh[s][fire] = 0.0
                    moved = True
                remaining &= ~fire
        fresh += new
        if not moved:
            return
    raise PolicyInapplicable("stage switching does not settle (cyclic exits)")


# ---------------------------------------------------------------------------
# the achievability-lemma coupling


def _mask(n, members):
    m = np.zeros(n, dtype=bool)
    m[list(members)] = True
    return m


def split_epsilon(k: FiniteKernel, C, A, B, N: int) -> float:
    PN = np.linalg.matrix_power(k.P, N)
    c = list(C)
    pa = PN[np.ix_(c, list(A))].sum(axis=1)
    pb = PN[np.ix_(c, list(B))].sum(axis=1)
    return float(min(pa.min(), pb.min()))


def build_lemma_coupling(
    k: FiniteKernel, C, A, B, N: int, inner: Policy | None = None
) -> LemmaCoupling:
    """Switched coupling from the achievability lemma.

    Stage 0 runs ``inner`` (default independent) until the pair is in ``C x C``;
    stages ``1..N`` take independent steps; if the pair then lies in ``A x B``
    the policy switches for good to a Strassen monotone coupling, otherwise it
    returns to stage 0.
    """
    inner = inner or Independent()
    C, A, B = (tuple(sorted(int(i) for i in s)) for s in (C, A, B))
    if N < 1 or not C or not A or not B:
        raise BadSplit("C, A, B must be nonempty and N >= 1")
    for a in A:
        for b in B:
            if not k.poset.le(a, b):
                raise BadSplit(f"A is not below B: {a} !<= {b}")
    eps = split_epsilon(k, C, A, B, N)
    if eps <= 0.0:
        raise BadSplit(f"no positive split mass from C into A and B at N={N}")
    n = k.n
    CC = PairIn(product_pairs(n, C, C), "CxC")
    AB = PairIn(product_pairs(n, A, B), "AxB")
    after_step = StepsInStage(1)
    stages = [Stage(inner, ((CC, 1),))]
    for i in range(1, N + 1):
        if i < N:
            stages.append(Stage(Independent(), ((after_step, i + 1),)))
        else:
            stages.append(Stage(Independent(), ((Both(after_step, AB), N + 1), (after_step, 0))))
    stages.append(Stage(StrassenMonotone()))
    return LemmaCoupling(tuple(stages), eps=eps, C=C, A=A, B=B, N=N, inner=inner)


def lemma_attempt_tail(k: FiniteKernel, lemma: LemmaCoupling, x0: int, y0: int, kmax: int) -> np.ndarray:
    """Exact ``P(attempts > j)``, ``j = 0..kmax``, for the lemma coupling from ``(x0, y0)``.

    An attempt is one block of ``N`` independent steps started inside ``C x C``.
    Entry into ``C x C`` under the inner policy is solved as an absorbing chain.
    """
    n = k.n
    CC = product_pairs(n, lemma.C, lemma.C).ravel()
    AB = product_pairs(n, lemma.A, lemma.B).ravel()
    J = joint_step_matrix(lemma.inner, k)
    if np.isnan(J[~CC]).any():
        raise PolicyInapplicable("inner policy undefined off C x C")
    out = np.flatnonzero(~CC)
    inn = np.flatnonzero(CC)
    # entry[p, c] = P(first visit to C x C is at c | start p), n >= 0 convention
    entry = np.zeros((n * n, n * n))
    entry[inn, inn] = 1.0
    if out.size:
        Q = J[np.ix_(out, out)]
        Rm = J[np.ix_(out, inn)]
        entry[np.ix_(out, inn)] = np.linalg.solve(np.eye(out.size) - Q, Rm)
    PN = np.linalg.matrix_power(k.P, lemma.N)
    block = np.kron(PN, PN)
    fail = block * (~AB)[None, :]
    v = entry[x0 * n + y0].copy()
    tail = np.empty(kmax + 1)
    tail[0] = 1.0
    for j in range(1, kmax + 1):
        v = (v @ fail) @ entry
        tail[j] = v.sum()
    return np.minimum(tail, 1.0)
