"""Exception hierarchy shared by all modules."""


class BayesFBLinError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(BayesFBLinError, ValueError):
    """Input vectors or matrices have incompatible shapes."""


class NumericalError(BayesFBLinError, ArithmeticError):
    """Non-finite values or a factorisation that cannot be repaired."""


class OptimizationError(BayesFBLinError):
    """Hyperparameter search could not produce a usable optimum."""


class InvalidObservation(BayesFBLinError, ValueError):
    """An observation outside the support of the model (e.g. b <= 0)."""


class IntegrationError(BayesFBLinError):
    """The ODE solver could not reach the requested end time."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (reached t={t_reached:.6g})")
        self.t_reached = t_reached


class WindowError(BayesFBLinError, ValueError):
    """A sample window is not uniformly spaced."""


class ConditioningError(BayesFBLinError, ArithmeticError):
    """The expected input matrix is too ill-conditioned to invert."""
