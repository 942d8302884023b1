"""Exception hierarchy shared by every laboratory module."""


class DepauwLabError(Exception):
    """Base class for all laboratory errors."""


class DomainError(DepauwLabError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class StageCrossingError(DomainError):
    """A step or a stage flow was asked to cross a dyadic breakpoint."""


class InsufficientSamplesError(DepauwLabError, ValueError):
    """Too few samples for the requested statistic."""


class ResourceLimitError(DepauwLabError):
    """The estimated memory footprint of a run exceeds the configured limit."""


class ConfigError(DepauwLabError):
    """The effective configuration is invalid."""


class CsvFormatError(DepauwLabError):
    """A CSV input does not follow the expected layout."""

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
