"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """Invalid argument values (dims, spacing, sizes, ...)."""


class PreconditionError(ValueError):
    """An operation was called outside its documented precondition."""


class FormatError(ValueError):
    """Malformed file contents."""

    def __init__(self, message, offset=None, line=None):
        where = ""
        if offset is not None:
            where = f" (byte offset {offset})"
        elif line is not None:
            where = f" (line {line})"
        super().__init__(message + where)
        self.offset = offset
        self.line = line


class EmptyMeshError(ValueError):
    """No zero crossing, so no surface can be extracted."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
