"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration and input
problems exit 2, enumeration budget guards exit 3, internal consistency
failures exit 4.
"""


class KstError(Exception):
    """Base class for all library errors."""


class ConstraintViolation(KstError):
    """A parameter set violates one of the construction's inequalities.

    ``inequality`` holds a human-readable rendering of the violated
    constraint, e.g. ``"eta >= (m-n+1)/(n+1)*delta + 2n/(m+1)"``.
    """

    def __init__(self, inequality: str, detail: str = ""):
        self.inequality = inequality
        msg = f"constraint violated: {inequality}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DomainError(KstError):
    """An argument lies outside the mathematical domain of an operation."""


class BudgetError(KstError):
    """An enumeration would exceed the configured desk-scale budget."""


class ExpressionError(KstError):
    """A target expression failed to parse or evaluate.

    ``offset`` is the byte offset of the offending token when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class InternalCheckError(KstError):
    """A construction-time self check failed; indicates a bug."""
