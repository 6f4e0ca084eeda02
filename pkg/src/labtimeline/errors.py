"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for engine failures."""


class NotFoundError(EngineError):
    """Requested patient or test does not exist in the dataset."""


class FormatError(EngineError):
    """A persisted file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class VersionError(FormatError):
    """A persisted file was written with an incompatible schema version."""
