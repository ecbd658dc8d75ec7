"""
Custom exceptions for the application.

Every exception carries an ``exit_code`` so the command line can map a
failure to a stable, documented process status.
"""


class ApplicationError(Exception):
    """Base class for all application exceptions."""

    exit_code: int = 1


class ValidationError(ApplicationError):
    """Raised when validation of data fails (bad arguments, shape mismatch)."""

    exit_code = 4


class DomainError(ValidationError):
    """Raised when an argument lies outside the mathematical domain of an operation."""

    pass


class ResourceNotFoundError(ApplicationError):
    """Raised when a requested resource (usually an input file) is not found."""

    exit_code = 3


class ConfigurationError(ApplicationError):
    """Raised when there is an issue with configuration."""

    exit_code = 5


class PersistenceError(ApplicationError):
    """Base class for checkpoint and dataset format failures."""

    exit_code = 6


class BadMagicError(PersistenceError):
    """Raised when a file does not start with the expected magic bytes."""

    pass


class VersionMismatchError(PersistenceError):
    """Raised when a file was written with an unsupported format version."""

    pass


class ChecksumError(PersistenceError):
    """Raised when a CRC-32 check fails."""

    def __init__(self, section: str, expected: int, actual: int):
        self.section = section
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"checksum mismatch in section '{section}' "
            f"(expected {expected:08x}, got {actual:08x})"
        )


class TruncatedFileError(PersistenceError):
    """Raised when a file ends before its declared contents do."""

    pass


class UnknownSectionError(PersistenceError):
    """Raised when a checkpoint holds a section this version does not know."""

    pass


class DatasetFormatError(PersistenceError):
    """Raised when a dataset file is malformed (dimensions, K, indices)."""

    pass


class TrainingDivergenceError(ApplicationError):
    """Raised when a training loop produces a loss above the divergence guard."""

    exit_code = 7

    def __init__(self, step: int, loss: float, stage: str):
        self.step = step
        self.loss = loss
        self.stage = stage
        super().__init__(f"{stage} diverged at step {step}: loss={loss:.6g}")


class NonFiniteError(ApplicationError):
    """Raised when a network produces non-finite activations."""

    exit_code = 7

    def __init__(self, layer: str):
        self.layer = layer
        super().__init__(f"non-finite activations in layer '{layer}'")
