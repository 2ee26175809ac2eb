"""Exception types shared across the package."""


class PhsyncError(Exception):
    """Base class for all package errors."""


class DimensionError(PhsyncError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class StructureError(PhsyncError, ValueError):
    """A structured matrix violates its pattern (symmetry, mask, diagonal)."""


class ConfigError(PhsyncError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class ParametrizationError(PhsyncError, ValueError):
    """Trainable parameters violate a structural requirement (e.g. rank)."""


class ConvergenceError(PhsyncError, RuntimeError):
    """An iterative routine failed to converge within its iteration budget."""


class NumericError(PhsyncError, RuntimeError):
    """A numeric result left its admissible range (overflow, NaN, ...)."""


class DivergenceError(PhsyncError, RuntimeError):
    """A simulated trajectory became non-finite."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        detail = message or "state became non-finite"
        super().__init__(f"trajectory diverged at step {step}: {detail}")


class CertificateError(PhsyncError, RuntimeError):
    """The gain certificate failed; indicates an implementation bug."""
