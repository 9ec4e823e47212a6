"""Exception types raised across the package."""


class MPRKError(Exception):
    """Base class for all package errors."""


class InfeasibleParameterError(MPRKError, ValueError):
    """Scheme or controller parameters outside their admissible region."""


class SingularDenominatorError(InfeasibleParameterError):
    """Tableau formula would divide by zero (e.g. alpha = 2/3 or beta = alpha)."""


class SingularSystemError(MPRKError, ArithmeticError):
    """A pivot of the stage matrix fell below the singularity threshold."""


class StepFailure(MPRKError, ArithmeticError):
    """A single MPRK step produced non-finite or non-positive data."""


class EvaluationError(MPRKError, ValueError):
    """A right-hand side component evaluated to a non-finite value."""

    def __init__(self, index, t, value):
        super().__init__(f"component {index} is not finite at t={t!r}: {value!r}")
        self.index = index
        self.t = t
        self.value = value


class ReferenceGenerationError(MPRKError, RuntimeError):
    """The reference integrator aborted before reaching the final time."""


class DomainError(MPRKError, ValueError):
    """Evaluation requested outside the span covered by a reference solution."""
