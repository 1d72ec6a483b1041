"""Exception hierarchy.

Errors fall in two families: ``MonotoneMCError`` subclasses signal bad input or
an unmet precondition, while ``InvariantViolation`` subclasses signal that a
guaranteed mathematical property failed to hold, i.e. an implementation bug.
The CLI maps the first family to exit code 1 and the second to exit code 2.
"""


class MonotoneMCError(Exception):
    """Base class for recoverable errors."""


class DimensionMismatch(MonotoneMCError, ValueError):
    pass


class InvalidPoset(MonotoneMCError, ValueError):
    pass


class InvalidDistribution(MonotoneMCError, ValueError):
    pass


class InvalidKernel(MonotoneMCError, ValueError):
    pass


class CapExceeded(MonotoneMCError):
    pass


class NotDominated(MonotoneMCError):
    """Raised when no order-respecting coupling exists.

    ``witness`` is an up-set ``I`` with ``mu1(I) > mu2(I)`` taken from the min cut.
    """

    def __init__(self, witness, excess):
        self.witness = witness
        self.excess = excess
        super().__init__(
            f"first measure is not dominated: up-set {list(witness.members)} "
            f"carries excess mass {excess:.3e}"
        )


class DomainError(MonotoneMCError, ValueError):
    pass


class SolverFailure(MonotoneMCError):
    pass


class Nonconvergent(MonotoneMCError):
    pass


class DivergentCycle(MonotoneMCError):
    pass


class NotConverged(MonotoneMCError):
    pass


class PolicyInapplicable(MonotoneMCError):
    pass


class BadSplit(MonotoneMCError):
    pass


class NoSplit(MonotoneMCError):
    pass


class HypothesisFails(MonotoneMCError):
    def __init__(self, bullet, witness=None, detail=""):
        self.bullet = bullet
        self.witness = witness
        super().__init__(f"hypothesis '{bullet}' fails (witness={witness}) {detail}".strip())


class UnknownFixture(MonotoneMCError, KeyError):
    pass


class ConfigError(MonotoneMCError, ValueError):
    pass


class InvariantViolation(Exception):
    """A property guaranteed by theory did not hold."""


class BoundViolated(InvariantViolation):
    def __init__(self, n, lhs, rhs, detail=""):
        self.n = n
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(f"bound violated at n={n}: {lhs!r} > {rhs!r} {detail}".strip())


class MonotoneViolation(InvariantViolation):
    pass
