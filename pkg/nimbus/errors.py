# nimbus/errors.py
"""Exception hierarchy. Every error knows the CLI exit code it maps to.

Usage errors (exit 2) are click.UsageError and never reach this module.
"""

EXIT_IO = 3
EXIT_VALIDATION = 4


class NimbusError(Exception):
    exit_code = EXIT_VALIDATION

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class ParameterError(NimbusError):
    """An argument lies outside its documented range."""


class DataValidationError(NimbusError):
    """Raster or sample values violate a data invariant (NaN, negative, ...)."""


class FormatError(NimbusError):
    """A file does not follow the RAS1 layout."""


class TruncationError(FormatError):
    pass


class ShapeError(NimbusError):
    """Band counts or raster dimensions do not line up."""


class DomainError(NimbusError):
    """A value outside a function's mathematical domain."""


class DegeneratePairError(DomainError):
    pass


class UndefinedCorrelationError(DomainError):
    pass


class InsufficientDataError(NimbusError):
    pass


class ConfigError(NimbusError):
    pass


class StorageError(NimbusError):
    exit_code = EXIT_IO

    def __init__(self, detail: str, index: int | None = None) -> None:
        if index is not None:
            detail = f"entry {index}: {detail}"
        super().__init__(detail)
        self.index = index
