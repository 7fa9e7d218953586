"""Exception hierarchy.

Each family maps to one CLI exit code: configuration problems exit 2,
data problems exit 3 and numeric failures exit 4.
"""
from __future__ import annotations


class LogitProbError(Exception):
    exit_code = 1


class ConfigError(LogitProbError):
    exit_code = 2


class DataError(LogitProbError):
    exit_code = 3


class NumericError(LogitProbError):
    exit_code = 4


class EmptyInput(DataError):
    pass


class MissingLabel(DataError):
    pass


class ClassUnderpopulated(DataError):
    def __init__(self, class_index: int, count: int):
        self.class_index = class_index
        self.count = count
        super().__init__(f"class {class_index} has {count} training samples (need >= 2)")


class ModelArityMismatch(DataError):
    pass


class JoinMismatch(DataError):
    def __init__(self, orphans: list[str]):
        self.orphans = orphans
        shown = ", ".join(orphans[:10])
        more = "" if len(orphans) <= 10 else f" (+{len(orphans) - 10} more)"
        super().__init__(f"sample ids without a match: {shown}{more}")


class ParseError(DataError):
    def __init__(self, path, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class InvalidSpec(ConfigError):
    pass


class DegenerateRange(NumericError):
    pass


class NonPositiveVariance(NumericError):
    pass


class NonPositiveTemperature(NumericError):
    pass


class AllZeroMass(NumericError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message)


class NoPositives(DataError):
    pass
