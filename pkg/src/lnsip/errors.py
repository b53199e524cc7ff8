"""Exception types shared across the package."""


class LnsError(Exception):
    """Base class for all package errors."""


class DimensionError(LnsError):
    """Vector/matrix shape or length mismatch."""


class ContractError(LnsError):
    """A documented precondition or postcondition was violated."""


class GenerationError(LnsError):
    """Instance generation could not satisfy its structural guarantees."""


class ConfigError(LnsError):
    """Invalid configuration value."""


class AdapterError(LnsError):
    """External solver subprocess failed or produced unusable output.

    The raw solver output (stdout + stderr) is kept on ``raw_output`` for
    diagnosis.
    """

    def __init__(self, message, raw_output=""):
        super().__init__(message)
        self.raw_output = raw_output


class TrainingError(LnsError):
    """Training diverged (NaN loss or gradients)."""
