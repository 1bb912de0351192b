# toimit/errors.py - exception hierarchy shared by every module
from typing import Optional


class ToimitError(Exception):
    """Base class for all errors raised by toimit."""


class ConfigError(ToimitError, ValueError):
    """A document or config file could not be parsed or failed validation."""


class DimensionError(ToimitError, ValueError):
    """Array shapes do not match the robot model."""


class UnknownSiteError(ToimitError, KeyError):
    pass


class UnknownModelError(ToimitError, KeyError):
    pass


class UnknownTaskError(ToimitError, KeyError):
    pass


class NumericError(ToimitError, ArithmeticError):
    """Non-finite values or a numerically singular system."""


class RankDeficientContactError(NumericError):
    pass


class HessianNotPositiveDefiniteError(NumericError):
    pass


class DatasetFormatError(ToimitError, ValueError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class ModelHashMismatchError(DatasetFormatError):
    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(
            f"Model hash mismatch: dataset was generated with model {found}, "
            f"but the loaded model hashes to {expected}"
        )


class TruncatedDatasetError(DatasetFormatError):
    def __init__(self, record_index: int, detail: str):
        self.record_index = record_index
        super().__init__(f"Dataset truncated at record {record_index}: {detail}")


class CheckpointError(ToimitError):
    pass


class EnvFailure(ToimitError):
    """An environment failed while collecting a rollout."""

    def __init__(self, env_index: int, detail: str, cause: Optional[BaseException] = None):
        self.env_index = env_index
        self.cause = cause
        super().__init__(f"Environment {env_index} failed: {detail}")
