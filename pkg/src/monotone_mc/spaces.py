"""Ordered state spaces used by recursion kernels.

Each space supplies a partial order ``leq`` and a metric ``distance`` on its
states, plus vectorised ``leq_batch`` over stacked states (first axis = lanes).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .order import Poset

_EPS = np.finfo(float).eps


class OrderedSpace(ABC):
    state_shape: tuple = ()

    @abstractmethod
    def leq(self, x, y) -> bool: ...

    @abstractmethod
    def distance(self, x, y) -> float: ...

    @abstractmethod
    def contains(self, x) -> bool: ...

    def leq_batch(self, X, Y) -> np.ndarray:
        return np.array([self.leq(x, y) for x, y in zip(X, Y)], dtype=bool)

    def as_state(self, x):
        return x

    def describe(self) -> dict:
        return {"type": type(self).__name__}


@dataclass(frozen=True)
class FinitePosetSpace(OrderedSpace):
    poset: Poset

    def leq(self, x, y):
        return self.poset.le(int(x), int(y))

    def leq_batch(self, X, Y):
        return self.poset.leq[np.asarray(X, int), np.asarray(Y, int)]

    def distance(self, x, y):
        return 0.0 if int(x) == int(y) else 1.0

    def contains(self, x):
        try:
            return 0 <= int(x) < self.poset.n and int(x) == x
        except (TypeError, ValueError):
            return False

    def as_state(self, x):
        return int(x)

    def describe(self):
        return {"type": "finite_poset", "poset": self.poset.to_json()}


@dataclass(frozen=True)
class RealInterval(OrderedSpace):
    lo: float = 0.0
    hi: float = 1.0
    lo_closed: bool = True
    hi_closed: bool = True

    def leq(self, x, y):
        return float(x) <= float(y)

    def leq_batch(self, X, Y):
        return np.asarray(X) <= np.asarray(Y)

    def distance(self, x, y):
        return abs(float(x) - float(y))

    def contains(self, x):
        try:
            x = float(x)
        except (TypeError, ValueError):
            return False
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return above and below

    def as_state(self, x):
        return float(x)

    def describe(self):
        return {
            "type": "real_interval",
            "lo": self.lo,
            "hi": self.hi,
            "closed": [self.lo_closed, self.hi_closed],
            "normal": "h(t) = t",
        }


@dataclass(frozen=True)
class IntLattice(OrderedSpace):
    """``Z^d`` with the componentwise order."""

    d: int = 2

    @property
    def state_shape(self):
        return (self.d,)

    def leq(self, x, y):
        return all(a <= b for a, b in zip(x, y))

    def leq_batch(self, X, Y):
        return np.all(np.asarray(X) <= np.asarray(Y), axis=-1)

    def distance(self, x, y):
        return math.dist(x, y)

    def contains(self, x):
        try:
            return len(x) == self.d and all(int(a) == a for a in x)
        except TypeError:
            return False

    def as_state(self, x):
        return tuple(int(a) for a in x)

    def describe(self):
        return {"type": "int_lattice", "d": self.d}


@lru_cache(maxsize=4096)
def layer_gap(i: int, j: int) -> Fraction:
    """Exact threshold ``h_{i,j}`` between layers ``i < j``."""
    if not 0 <= i < j:
        raise ValueError("need 0 <= i < j")
    if i == 0:
        return Fraction(1, 2**j)
    return Fraction(1, 2**i) - Fraction(1, 2**j)


def layer_gap_float(i, j):
    """Vectorised float approximation of ``h_{min,max}`` (0 for equal layers)."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    top = np.where(lo == 0, 0.0, np.ldexp(1.0, -np.minimum(lo, 1100)))
    h = top + np.where(lo == 0, 1.0, -1.0) * np.ldexp(1.0, -np.minimum(hi, 1100))
    return np.where(lo == hi, 0.0, h)


@dataclass(frozen=True)
class Layered(OrderedSpace):
    """``N_0 x R``; within a layer the real order, across layers ``y >= x + h``.

    States are pairs ``(layer, x)``. The thresholds are exact dyadic rationals and
    comparisons against them are done in exact arithmetic.
    """

    state_shape = (2,)

    def leq(self, a, b):
        (i, x), (j, y) = a, b
        i, j = int(i), int(j)
        if i == j:
            return float(x) <= float(y)
        h = layer_gap(min(i, j), max(i, j))
        return Fraction(float(y)) >= Fraction(float(x)) + h

    def leq_batch(self, A, B):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        i, x = A[..., 0].astype(np.int64), A[..., 1]
        j, y = B[..., 0].astype(np.int64), B[..., 1]
        same = i == j
        h = layer_gap_float(i, j)
        d = y - x
        out = np.where(same, x <= y, d >= h)
        near = (~same) & (np.abs(d - h) <= 8 * _EPS * np.maximum(np.abs(d), h) + 1e-300)
        for k in np.flatnonzero(near.ravel()):
            idx = np.unravel_index(k, near.shape)
            out[idx] = self.leq((i[idx], x[idx]), (j[idx], y[idx]))
        return out

    def distance(self, a, b):
        return math.hypot(float(a[0]) - float(b[0]), float(a[1]) - float(b[1]))

    def contains(self, a):
        try:
            layer, x = a
            return int(layer) == layer and layer >= 0 and math.isfinite(float(x))
        except (TypeError, ValueError):
            return False

    def as_state(self, a):
        return (int(a[0]), float(a[1]))

    def describe(self):
        return {"type": "layered", "gap": "h_{0,j}=2^-j, h_{i,j}=sum_{k=i+1..j} 2^-k"}
