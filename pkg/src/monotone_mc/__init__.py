"""Monotone Markov chains on partially ordered spaces: dominance, couplings,
regeneration and convergence-rate certificates with exact finite-state oracles."""

from .errors import InvariantViolation, MonotoneMCError
from .kernel import FiniteKernel, RecursionKernel, hitting_analysis, is_monotone, stationary_report
from .order import Coupling, Dist, Poset, UpSet, dominates, order_distance, strassen_coupling

__all__ = [
    "Coupling",
    "Dist",
    "FiniteKernel",
    "InvariantViolation",
    "MonotoneMCError",
    "Poset",
    "RecursionKernel",
    "UpSet",
    "dominates",
    "hitting_analysis",
    "is_monotone",
    "order_distance",
    "stationary_report",
    "strassen_coupling",
]
