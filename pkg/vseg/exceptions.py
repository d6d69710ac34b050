class VsegError(Exception):
    """Root of every error raised by vseg"""


class ConfigError(VsegError):
    pass


class UsageError(VsegError):
    pass


class DataError(VsegError):
    """Raised for unreadable or inconsistent volumes, slices and checkpoints"""


class MalformedHeaderError(DataError):
    pass


class TruncatedDataError(DataError):
    pass


class UnknownDTypeError(DataError):
    pass


class CheckpointMismatchError(DataError):
    pass


class ShapeError(VsegError, ValueError):
    pass


class DimsMismatchError(DataError, ShapeError):
    """Two volumes that must line up voxel for voxel have different dims"""


class NonFiniteError(VsegError, ArithmeticError):
    def __init__(self, message: str, *, layer: str | None = None, iteration: int | None = None) -> None:
        super().__init__(message)
        self.layer = layer
        self.iteration = iteration


class BackwardWithoutForwardError(VsegError, RuntimeError):
    pass
