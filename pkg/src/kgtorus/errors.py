"""Exception types shared across the package."""


class KgtorusError(Exception):
    """Base class for all package errors."""


class SizeError(KgtorusError, ValueError):
    """Array/grid dimensions do not agree."""


class ModeIndexError(KgtorusError, IndexError):
    """Mode index outside the grid's mode set."""


class ParameterError(KgtorusError, ValueError):
    """Scalar parameter outside its admissible range."""


class ConstructionError(KgtorusError, ValueError):
    """Invalid polynomial data (e.g. a momentum-violating tuple)."""


class RealityError(KgtorusError, ArithmeticError):
    """A supposedly real evaluation came out complex beyond tolerance."""


class BlowUpError(KgtorusError, ArithmeticError):
    """Trajectory left the finite regime."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"state blew up at step {step}")


class ResonantStepError(KgtorusError, ArithmeticError):
    """A phi(ad) eigenvalue is too close to zero to invert."""

    def __init__(self, key, value, message: str | None = None):
        self.key = key
        self.value = value
        super().__init__(
            message or f"resonant time step: |phi| = {abs(value):.3e} on {key}"
        )


class SeriesDivergenceError(KgtorusError, ArithmeticError):
    """The graded exp-ad series failed to converge within the term cap."""


class NonConvergenceError(KgtorusError, ArithmeticError):
    """The adaptive flow integrator could not meet its tolerance."""


class BudgetError(KgtorusError, ValueError):
    """Requested enumeration exceeds the desk-scale budget."""


class ConfigError(KgtorusError, ValueError):
    """Invalid experiment configuration."""
