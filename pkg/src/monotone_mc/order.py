"""Finite partial orders, up-sets, stochastic dominance and Strassen couplings.

On a finite poset the increasing sets play the role of the whole class of bounded
monotone test functions: every such function is a positive combination of up-set
indicators, so a supremum over monotone functions is a maximum over up-sets.
Maximising a modular weight over up-sets is a closure problem and is solved by a
min cut; exhaustive enumeration is kept as an independent oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from ._flow import INF, FlowNetwork
from .errors import (
    CapExceeded,
    DimensionMismatch,
    InvalidDistribution,
    InvalidPoset,
    NotDominated,
)

MARGINAL_TOL = 1e-9
SUPPORT_TOL = 1e-12
DEFAULT_UPSET_CAP = 2**20


def _mask_of(indices):
    m = 0
    for i in indices:
        m |= 1 << int(i)
    return m


def _members_of(mask):
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


class Poset:
    """A finite partial order on ``{0, ..., n-1}``.

    Parameters
    ----------
    leq : (n, n) array_like of bool
        ``leq[i, j]`` is True iff ``i`` precedes-or-equals ``j``. Must already be
        reflexive, antisymmetric and transitive; use :meth:`from_pairs` to build
        one from generating pairs.
    labels : sequence of str, optional
        Display names.
    """

    def __init__(self, leq, labels: Sequence[str] | None = None):
        leq = np.array(leq, dtype=bool)
        if leq.ndim != 2 or leq.shape[0] != leq.shape[1]:
            raise InvalidPoset(f"relation must be square, got shape {leq.shape}")
        n = leq.shape[0]
        if not leq.diagonal().all():
            raise InvalidPoset("relation is not reflexive")
        off = leq & leq.T
        np.fill_diagonal(off, False)
        if off.any():
            i, j = map(int, np.argwhere(off)[0])
            raise InvalidPoset(f"relation is not antisymmetric: {i} <= {j} <= {i}")
        li = leq.astype(np.int64)
        if ((li @ li > 0) & ~leq).any():
            raise InvalidPoset("relation is not transitive")
        if labels is not None and len(labels) != n:
            raise InvalidPoset("labels length does not match n")
        leq.setflags(write=False)
        self.n = n
        self.leq = leq
        self.labels = tuple(labels) if labels is not None else None
        self.up_masks = tuple(_mask_of(np.flatnonzero(leq[i])) for i in range(n))
        self.down_masks = tuple(_mask_of(np.flatnonzero(leq[:, i])) for i in range(n))
        below = leq.sum(axis=0)
        self.linear_extension = tuple(int(i) for i in np.argsort(below, kind="stable"))
        self.is_chain = bool((leq | leq.T).all())
        strict = leq.copy()
        np.fill_diagonal(strict, False)
        si = strict.astype(np.int64)
        cover = strict & ~(si @ si > 0)
        self.covers = tuple((int(i), int(j)) for i, j in np.argwhere(cover))

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Sequence[int]], labels=None) -> "Poset":
        """Reflexive-transitive closure of the given pairs."""
        rel = np.eye(n, dtype=bool)
        for pair in pairs:
            i, j = int(pair[0]), int(pair[1])
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidPoset(f"pair {(i, j)} out of range for n={n}")
            rel[i, j] = True
        for k in range(n):
            rel |= rel[:, k : k + 1] & rel[k : k + 1, :]
        return cls(rel, labels)

    @classmethod
    def chain(cls, n: int) -> "Poset":
        return cls(np.triu(np.ones((n, n), dtype=bool)))

    @classmethod
    def antichain(cls, n: int) -> "Poset":
        return cls(np.eye(n, dtype=bool))

    @classmethod
    def from_json(cls, obj) -> "Poset":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            n = int(obj["n"])
            pairs = obj.get("leq_pairs", [])
        except (KeyError, TypeError) as exc:
            raise InvalidPoset(f"malformed poset object: {exc}") from None
        return cls.from_pairs(n, pairs, obj.get("labels"))

    def to_json(self) -> dict:
        out = {"n": self.n, "leq_pairs": [list(c) for c in self.covers]}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    # -- queries ------------------------------------------------------------

    def le(self, i: int, j: int) -> bool:
        return bool(self.leq[i, j])

    def up_set(self, i: int) -> "UpSet":
        """``{j : i <= j}``."""
        return UpSet(self.up_masks[i], self.n)

    def down_mask(self, i: int) -> int:
        return self.down_masks[i]

    def up_closure(self, members) -> "UpSet":
        m = 0
        for i in _members_of(_as_mask(members)):
            m |= self.up_masks[i]
        return UpSet(m, self.n)

    def full(self) -> "UpSet":
        return UpSet((1 << self.n) - 1, self.n)

    def __eq__(self, other):
        return isinstance(other, Poset) and np.array_equal(self.leq, other.leq)

    def __hash__(self):
        return hash(self.leq.tobytes())

    def __repr__(self):
        kind = "chain" if self.is_chain else "poset"
        return f"Poset(n={self.n}, {kind}, covers={len(self.covers)})"


def _as_mask(s) -> int:
    if isinstance(s, UpSet):
        return s.mask
    if isinstance(s, (int, np.integer)):
        return int(s)
    return _mask_of(s)


@dataclass(frozen=True)
class UpSet:
    """Subset of the ground set stored as a bitmask (Python ints are unbounded)."""

    mask: int
    n: int

    @classmethod
    def from_members(cls, members, n):
        return cls(_mask_of(members), n)

    @property
    def members(self) -> tuple:
        return _members_of(self.mask)

    def indicator(self) -> np.ndarray:
        v = np.zeros(self.n, dtype=bool)
        v[list(self.members)] = True
        return v

    def __contains__(self, i):
        return bool((self.mask >> int(i)) & 1)

    def __len__(self):
        return bin(self.mask).count("1")


class Dist:
    """Probability vector on a finite ground set.

    Entries in ``[-tol, 0)`` are clamped to zero and the vector is renormalised;
    anything further off raises :class:`InvalidDistribution`.
    """

    __slots__ = ("p", "tol")

    def __init__(self, p, tol: float = MARGINAL_TOL):
        p = np.array(p, dtype=float).ravel()
        if p.size == 0 or not np.all(np.isfinite(p)):
            raise InvalidDistribution("distribution must be a nonempty finite vector")
        if p.min() < -tol:
            raise InvalidDistribution(f"negative weight {p.min():.3e}")
        p = np.clip(p, 0.0, None)
        s = p.sum()
        if abs(s - 1.0) > tol:
            raise InvalidDistribution(f"weights sum to {s!r}, not 1")
        p = p / s
        p.setflags(write=False)
        self.p = p
        self.tol = tol

    @classmethod
    def point(cls, n, i):
        p = np.zeros(n)
        p[i] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self):
        return self.p.size

    def mass(self, s) -> float:
        idx = list(_members_of(_as_mask(s)))
        return float(self.p[idx].sum()) if idx else 0.0

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)

    def __repr__(self):
        return f"Dist({np.array2string(self.p, precision=4)})"


def as_dist(mu, tol=MARGINAL_TOL) -> Dist:
    return mu if isinstance(mu, Dist) else Dist(mu, tol)


@dataclass(frozen=True)
class Coupling:
    """Joint law on pairs; ``lam[i, j]`` is the mass of ``(i, j)``."""

    lam: np.ndarray = field(repr=False)

    @property
    def first_marginal(self):
        return self.lam.sum(axis=1)

    @property
    def second_marginal(self):
        return self.lam.sum(axis=0)

    def marginal_error(self, mu1, mu2) -> float:
        return float(
            max(
                np.abs(self.first_marginal - np.asarray(mu1)).max(),
                np.abs(self.second_marginal - np.asarray(mu2)).max(),
            )
        )

    def off_order_mass(self, poset: Poset) -> float:
        return float(self.lam[~poset.leq].sum())


# ---------------------------------------------------------------------------


def is_up_set(poset: Poset, s) -> bool:
    mask = _as_mask(s)
    if mask >> poset.n:
        raise DimensionMismatch("subset has elements outside the ground set")
    for i in _members_of(mask):
        if poset.up_masks[i] & ~mask:
            return False
    return True


def enumerate_up_sets(poset: Poset, cap: int = DEFAULT_UPSET_CAP) -> Iterator[UpSet]:
    """Yield every up-set exactly once (including the empty and the full set).

    Elements are decided from the top of a linear extension downward; an element
    may join only if everything strictly above it already has, so no branch is
    ever a dead end. Raises :class:`CapExceeded` once more than ``cap`` sets
    have been produced.
    """
    order = poset.linear_extension[::-1]
    strict_up = [poset.up_masks[i] & ~(1 << i) for i in range(poset.n)]
    count = 0
    stack = [(0, 0)]
    while stack:
        pos, mask = stack.pop()
        if pos == len(order):
            count += 1
            if count > cap:
                raise CapExceeded(f"more than {cap} up-sets")
            yield UpSet(mask, poset.n)
            continue
        e = order[pos]
        stack.append((pos + 1, mask))
        if strict_up[e] & ~mask == 0:
            stack.append((pos + 1, mask | (1 << e)))


def upset_matrix(poset: Poset, cap: int = DEFAULT_UPSET_CAP) -> np.ndarray:
    """All up-set indicators stacked as rows (oracle helper)."""
    rows = [u.indicator() for u in enumerate_up_sets(poset, cap)]
    return np.array(rows, dtype=float)


def _check_dims(poset, *dists):
    for d in dists:
        if d.n != poset.n:
            raise DimensionMismatch(f"distribution has {d.n} entries, poset has {poset.n}")


def max_weight_up_set(poset: Poset, w) -> tuple[float, UpSet]:
    """Maximise ``sum(w[I])`` over up-sets ``I`` via a min cut (closure problem)."""
    w = np.asarray(w, dtype=float)
    n = poset.n
    if poset.is_chain:
        order = np.array(poset.linear_extension)
        suffix = np.concatenate([np.cumsum(w[order][::-1])[::-1], [0.0]])
        k = int(np.argmax(suffix))
        return float(suffix[k]), UpSet.from_members(order[k:], n)
    s, t = n, n + 1
    net = FlowNetwork(n + 2)
    for i in range(n):
        if w[i] > 0:
            net.add_arc(s, i, w[i])
        elif w[i] < 0:
            net.add_arc(i, t, -w[i])
    for i, j in poset.covers:
        net.add_arc(i, j, INF)
    net.max_flow(s, t)
    seen = net.reachable(s)
    members = [i for i in range(n) if seen[i]]
    value = float(w[members].sum()) if members else 0.0
    return value, UpSet.from_members(members, n)


def _chain_check(mu1, mu2, poset, tol):
    value, witness = max_weight_up_set(poset, mu1.p - mu2.p)
    return value <= tol, value, witness


def _bipartite_flow(mu1: Dist, mu2: Dist, poset: Poset):
    n = poset.n
    s, t = 2 * n, 2 * n + 1
    net = FlowNetwork(2 * n + 2)
    for i in range(n):
        net.add_arc(s, i, mu1.p[i])
    arcs = {}
    for i in range(n):
        for j in np.flatnonzero(poset.leq[i]):
            arcs[(i, int(j))] = net.add_arc(i, n + int(j), INF)
    for j in range(n):
        net.add_arc(n + j, t, mu2.p[j])
    value = net.max_flow(s, t)
    return net, arcs, value


def _witness_from_cut(net, n):
    seen = net.reachable(2 * n)
    return UpSet.from_members([j for j in range(n) if seen[n + j]], n)


def dominates(mu1, mu2, poset: Poset, tol: float = MARGINAL_TOL, with_witness: bool = False):
    """True iff ``mu1`` is stochastically smaller than ``mu2``.

    Decided by Strassen feasibility: the bipartite network with arcs ``i -> j``
    for ``i <= j`` carries a unit flow. With ``with_witness`` a pair
    ``(verdict, witness_up_set_or_None)`` is returned.
    """
    mu1, mu2 = as_dist(mu1), as_dist(mu2)
    _check_dims(poset, mu1, mu2)
    if poset.is_chain:
        ok, _, witness = _chain_check(mu1, mu2, poset, tol)
    else:
        net, _, value = _bipartite_flow(mu1, mu2, poset)
        ok = value >= 1.0 - tol
        witness = None if ok else _witness_from_cut(net, poset.n)
    if with_witness:
        return ok, (None if ok else witness)
    return ok


def _quantile_coupling(mu1: Dist, mu2: Dist, order):
    """North-west corner coupling along a linear order."""
    n = len(order)
    lam = np.zeros((n, n))
    a = mu1.p[order].copy()
    b = mu2.p[order].copy()
    i = j = 0
    while i < n and j < n:
        m = min(a[i], b[j])
        lam[order[i], order[j]] += m
        a[i] -= m
        b[j] -= m
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return lam


def strassen_coupling(mu1, mu2, poset: Poset, tol: float = MARGINAL_TOL) -> Coupling:
    """A coupling of ``mu1`` and ``mu2`` supported on ``{(i, j): i <= j}``.

    Raises :class:`NotDominated` (carrying a violated up-set from the min cut)
    when no such coupling exists.
    """
    mu1, mu2 = as_dist(mu1), as_dist(mu2)
    _check_dims(poset, mu1, mu2)
    if poset.is_chain:
        ok, value, witness = _chain_check(mu1, mu2, poset, tol)
        if not ok:
            raise NotDominated(witness, value)
        lam = _quantile_coupling(mu1, mu2, list(poset.linear_extension))
        # rounding in the corner walk can leave ~1e-17 off the order; drop it
        lam[~poset.leq] = 0.0
        return Coupling(lam)
    net, arcs, value = _bipartite_flow(mu1, mu2, poset)
    if value < 1.0 - tol:
        witness = _witness_from_cut(net, poset.n)
        raise NotDominated(witness, mu1.mass(witness) - mu2.mass(witness))
    lam = np.zeros((poset.n, poset.n))
    for (i, j), arc in arcs.items():
        lam[i, j] = net.flow(arc)
    return Coupling(lam)


def order_distance(mu1, mu2, poset: Poset) -> float:
    """``max_I |mu1(I) - mu2(I)|`` over up-sets ``I``, via two closure problems."""
    mu1, mu2 = as_dist(mu1), as_dist(mu2)
    _check_dims(poset, mu1, mu2)
    w = mu1.p - mu2.p
    up, _ = max_weight_up_set(poset, w)
    down, _ = max_weight_up_set(poset, -w)
    return float(min(1.0, max(up, down, 0.0)))


def chain_distance_rows(rows: np.ndarray, target: np.ndarray, poset: Poset) -> np.ndarray:
    """Row-wise order distance to ``target`` on a chain (vectorised Kolmogorov metric)."""
    if not poset.is_chain:
        raise ValueError("chain_distance_rows needs a total order")
    order = np.array(poset.linear_extension)
    diff = np.atleast_2d(rows)[:, order] - np.asarray(target)[order]
    tails = np.cumsum(diff[:, ::-1], axis=1)
    return np.abs(tails).max(axis=1)


def random_poset(n: int, density: float, rng: np.random.Generator) -> Poset:
    """Random order: closure of a random DAG on a shuffled vertex order."""
    perm = rng.permutation(n)
    pairs = [
        (int(perm[i]), int(perm[j]))
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < density
    ]
    return Poset.from_pairs(n, pairs)
