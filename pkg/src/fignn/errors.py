"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: DataError -> 1, ConfigError -> 2,
ShapeError / InvariantError -> 3.
"""


class FignnError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FignnError):
    """Malformed or inconsistent input data (bad record, bad label, ...)."""


class ConfigError(FignnError):
    """Invalid configuration (bad hyper-parameter, missing field, ...)."""


class ShapeError(FignnError):
    """Tensor shapes incompatible with the requested operation."""


class InvariantError(FignnError):
    """An internal invariant was violated (non-finite value, NaN gradient)."""
