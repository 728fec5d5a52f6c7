"""Exception types shared across the simulator."""


class DomainError(ValueError):
    """A physical quantity is outside its valid domain (negative radius, ...)."""


class ConfigError(ValueError):
    """A configuration value or file is inconsistent or missing."""


class ContractError(ValueError):
    """A call violated an interface contract (length/shape mismatch, unmapped layer)."""


class ShapeError(ContractError):
    """Tensor shape does not match what an operator expects."""


class ArchiveError(ValueError):
    """A weights archive could not be parsed.

    ``code`` is a stable machine-readable identifier:
    ``bad_magic``, ``unsupported_version``, ``truncated``, ``duplicate_tensor``,
    ``manifest_invalid`` or ``tensor_mismatch``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class DatasetError(ValueError):
    """An IDX dataset file could not be parsed.

    ``code`` is one of ``bad_magic``, ``truncated``, ``count_mismatch``,
    ``label_range``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
