"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An input is outside the mathematical domain of an operation."""


class ZeroEffect(DomainError):
    """The effect size governing a sample-size calculation is zero."""


class InvalidBracket(DomainError):
    """A root-finding bracket does not enclose a sign change."""


class NoSolution(RuntimeError):
    """No design parameter value satisfies the requested equation."""


class NotFoundWithinBound(NoSolution):
    """A monotone integer search exhausted its upper bound."""


class Infeasible(NoSolution):
    """A detectable-effect query cannot be satisfied at the given design."""


class DegenerateDesign(RuntimeError):
    """A realized randomization leaves an estimator unidentifiable."""


class InsufficientData(RuntimeError):
    """A dataset is too small for the requested estimator."""
