"""Exception types raised across the package."""


class StsgtError(Exception):
    """Base class for every error raised deliberately by this package."""

    module = "stsgt"


class DimensionError(StsgtError, ValueError):
    module = "numerics"


class EmptyInputError(StsgtError, ValueError):
    module = "graph"


class DegenerateGeometryError(StsgtError, ValueError):
    module = "graph"


class SchemaError(StsgtError, ValueError):
    module = "data"


class DataFormatError(StsgtError, ValueError):
    module = "data"


class CoverageError(StsgtError, ValueError):
    module = "data"

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class InsufficientDataError(StsgtError, ValueError):
    module = "data"


class TrainingDivergedError(StsgtError, RuntimeError):
    module = "training"


class CheckpointError(StsgtError, ValueError):
    module = "model"


class MissingInputError(StsgtError, FileNotFoundError):
    """A file a command depends on does not exist."""

    module = "cli"

    def __init__(self, message, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module
