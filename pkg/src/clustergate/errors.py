class ClusterGateError(Exception):
    """Base class for every error raised by this package."""


class QuantityError(ClusterGateError, ValueError):
    pass


class ManifestError(ClusterGateError, ValueError):
    """A manifest could not be turned into a model object."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnknownKindError(ManifestError):
    pass


class NotFoundError(ClusterGateError, LookupError):
    pass


class QueryError(ClusterGateError, ValueError):
    pass


class ConstraintLoadError(ClusterGateError, ValueError):
    pass
