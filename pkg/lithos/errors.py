from __future__ import annotations

from typing import ClassVar

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_UNSUPPORTED = 5


class LithosError(Exception):
    """Base class of every error raised on purpose by lithos."""

    exit_code: ClassVar[int] = 1


# configuration


class ConfigError(LithosError, ValueError):
    exit_code = EXIT_CONFIG


class SpecError(ConfigError):
    """An architecture or generator spec violates one of its invariants."""


# tensors


class ShapeError(LithosError, ValueError):
    exit_code = EXIT_CONFIG


class TapeConsumedError(LithosError, RuntimeError):
    pass


class RetentionError(LithosError, RuntimeError):
    pass


class UninitializedStatsError(LithosError, RuntimeError):
    pass


class ProbeError(LithosError, KeyError):
    exit_code = EXIT_CONFIG

    def __str__(self) -> str:
        # KeyError quotes its argument, keep the sentence readable
        return str(self.args[0]) if self.args else ""


class LabelRangeError(LithosError, IndexError):
    exit_code = EXIT_DATA


# data and files


class DataError(LithosError):
    exit_code = EXIT_DATA


class CorpusError(DataError, ValueError):
    pass


class SplitError(DataError, ValueError):
    pass


class GenerationError(DataError, RuntimeError):
    pass


class FormatError(DataError, ValueError):
    def __init__(self, message: str, offset: int | None = None) -> None:
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ImportMismatchError(DataError, ValueError):
    def __init__(self, message: str, offenders: list[str]) -> None:
        self.offenders = offenders
        super().__init__(f"{message}: {', '.join(offenders)}")


# numerics and architectures


class NumericError(LithosError, ArithmeticError):
    exit_code = EXIT_NUMERIC


class UnsupportedArchitectureError(LithosError, TypeError):
    exit_code = EXIT_UNSUPPORTED
