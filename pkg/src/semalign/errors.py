"""Exception types shared across the package.

Plain ValueError is used for domain and shape violations; the classes here
exist where the CLI needs a distinct exit code or callers need extra context.
"""


class ConfigurationError(ValueError):
    """Invalid dimensions, counts or settings supplied by the caller."""


class NumericError(RuntimeError):
    """A computation produced a non-finite value and was aborted."""


class TagParseError(ValueError):
    """Malformed tag-delimited transcript. Carries the character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset
