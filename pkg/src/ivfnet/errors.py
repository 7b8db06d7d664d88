"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An operation received arguments that violate its preconditions."""


class SecondOrderUnsupportedError(RuntimeError):
    """A second-order differentiation pass hit an op that only supports
    first-order gradients."""


class ConfigError(ValueError):
    """A run configuration is malformed (unknown key, bad value)."""


class DataError(RuntimeError):
    """An input file or dataset is missing, corrupt, or empty."""


class CheckpointError(RuntimeError):
    """A checkpoint file is malformed or incompatible with the request."""


class NumericError(RuntimeError):
    """A training run produced a non-finite loss; carries the term name."""
