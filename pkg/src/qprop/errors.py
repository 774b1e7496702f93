"""Exception types. Each subclasses ``ValueError`` so callers can catch broadly."""


class QPropError(ValueError):
    pass


class EmptyBox(QPropError):
    pass


class ShapeMismatch(QPropError):
    pass


class InvalidProbability(QPropError):
    pass


class NoPredictions(QPropError):
    pass


class TopKTooLarge(QPropError):
    pass


class BadScript(QPropError):
    pass


class NoSamples(QPropError):
    pass


class ConfigError(QPropError):
    """Invalid run configuration. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        prefix = ""
        if source is not None:
            prefix = f"{source}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)
