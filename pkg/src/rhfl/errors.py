"""Exception hierarchy shared across the simulator."""


class RHFLError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RHFLError, ValueError):
    """Invalid hyperparameter, unknown config key or violated config invariant."""


class DimensionError(RHFLError, ValueError):
    """Tensor or layer shapes do not line up."""


class NumericError(RHFLError, FloatingPointError):
    """A computation produced NaN or Inf."""


class UsageError(RHFLError, RuntimeError):
    """An API was called in a state where the call makes no sense."""


class DistributionError(RHFLError, ValueError):
    """An array that should hold probability rows does not."""


class PartitionError(RHFLError, RuntimeError):
    """A client partition satisfying the constraints could not be drawn."""


class FormatError(RHFLError, ValueError):
    """A binary container or metrics file is malformed."""
