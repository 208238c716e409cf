"""Exception types shared across the engine."""


class InvalidInput(ValueError):
    """An operation received arguments that violate its contract."""


class ParseError(ValueError):
    """Expansion-response text is structurally malformed.

    Carries the 1-based ``line`` and ``column`` of the offending token when
    known; both are 0 for errors not tied to a location (e.g. a missing
    required line).
    """

    def __init__(self, message: str, line: int = 0, column: int = 0):
        if line:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class FormatError(ValueError):
    """A binary artifact failed structural validation.

    ``offset`` is the byte position at which the problem was detected, or
    None when the failure is not tied to a specific offset.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
