"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration field is missing, out of range, or inconsistent."""


class TraceError(ValueError):
    """A trace file is malformed; message carries the offending row/column."""


class ShapeError(ValueError):
    """Tensor dimensions do not chain or do not match the declared layout."""


class StateError(RuntimeError):
    """An operation was called on an object in the wrong lifecycle state."""


class MetricError(ValueError):
    """A metric is undefined for the given input (e.g. all-zero allocations)."""


class NumericalError(RuntimeError):
    """A non-finite value appeared mid-computation."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index
