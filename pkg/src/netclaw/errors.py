"""Exception types shared across the package."""


class DomainError(ValueError):
    """A density, speed or flow value lies outside the admissible range."""


class ValidationError(ValueError):
    """Invalid network or configuration.

    ``code`` is a short machine-readable tag (``syntax``, ``unknown_edge``,
    ``non_stochastic``, ``unsupported_shape``, ...); ``line`` and ``column``
    are 1-based positions in the source document when known.
    """

    def __init__(self, code, message, line=None, column=None):
        self.code = code
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(f"[{code}] {message}{where}")


class InternalError(RuntimeError):
    """A precondition of an internal routine was violated (a caller bug)."""
