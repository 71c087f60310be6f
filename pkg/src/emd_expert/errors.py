"""Exception and warning types shared across the pipeline.

Every error carries a short machine-readable ``code`` so the CLI and tests can
match on it without parsing messages.
"""


class EmdError(Exception):
    code = "error"

    def __init__(self, code, message=""):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)


class GeometryError(EmdError, ValueError):
    """Raised for geometry that cannot be derived or evaluated."""


class OracleError(EmdError, ArithmeticError):
    pass


class SamplingError(EmdError, ValueError):
    pass


class FitError(EmdError, ValueError):
    """A metamodel could not be fitted or scored."""


class DatabaseError(EmdError, ValueError):
    pass


class QueryError(EmdError, ValueError):
    pass


class EmdWarning(UserWarning):
    """Non-fatal condition; the message starts with its code."""
