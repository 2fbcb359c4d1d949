"""Error taxonomy shared across the package.

Exit-code mapping for the CLI lives in neuralofdm.cli; library code raises
these types and never calls sys.exit.
"""


class NeuralOfdmError(Exception):
    """Base class for all package errors."""


class ConfigError(NeuralOfdmError):
    """Invalid or inconsistent configuration (shapes, indices, modes)."""


class FramingError(NeuralOfdmError):
    """Bit/symbol counts do not match the frame layout."""


class NumericError(NeuralOfdmError):
    """Non-finite values or numerically impossible requests."""


class UsageError(NeuralOfdmError):
    """API misuse (wrong call order, non-scalar backward, ...)."""


class DegenerateConstellationError(ConfigError):
    """Constellation collapses under normalization (all points identical)."""


class WeightsFormatError(NeuralOfdmError):
    """Weights bundle is malformed or version-incompatible."""
