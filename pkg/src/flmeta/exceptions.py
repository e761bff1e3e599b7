"""Error types raised across the package.

All inherit ValueError so callers that only care about "bad input" can catch
one base class, while tests can distinguish the failure kind.
"""


class ShapeError(ValueError):
    """An array has the wrong rank, shape, or dtype for the operation."""


class ConfigError(ValueError):
    """A configuration value, level name, or architecture field is invalid."""


class FormatError(ValueError):
    """An on-disk file does not match its declared binary layout."""


class CompositionError(ValueError):
    """Split parts do not come from the same architecture and level."""


class AggregationError(ValueError):
    """Models handed to the averaging step do not share a structure."""
