"""Exception types shared by the numerical modules and the CLI."""


class InsulationLabError(Exception):
    """Base class for every error raised by this package."""


class DomainError(InsulationLabError, ValueError):
    """An argument lies outside the supported mathematical domain."""


class UnsupportedDimensionError(DomainError):
    """The requested quantity is only available in a different dimension."""


class ValidationError(InsulationLabError, ValueError):
    """Input data violates a documented invariant (e.g. a negative source)."""


class BracketError(InsulationLabError, ValueError):
    """A root bracket does not contain a sign change."""


class EvaluationError(InsulationLabError, ArithmeticError):
    """A function evaluation returned a non-finite value."""


class RegimeError(InsulationLabError):
    """The requested computation is invalid for this parameter regime."""


class NumericalError(InsulationLabError, ArithmeticError):
    """An iterative solver failed to converge."""


class MeshError(InsulationLabError):
    """The finite-element mesh is degenerate."""


class DegenerateDistributionError(InsulationLabError, ValueError):
    """The boundary trace vanishes identically, so no insulation density exists."""


class VerificationError(InsulationLabError, AssertionError):
    """A built-in consistency check failed."""
