"""Exception hierarchy for varimorph.

Every error carries a short kind and a process exit code so the CLI can print
one greppable line (``E<exit> <kind>: <message>``) and return a distinct code:

- UsageError    -> 2
- InputError    -> 3 (files, formats)
- NumericError  -> 4 (solver, geometry, parameters)
- StageError    -> exit code of the wrapped cause, message prefixed with the stage
"""
from __future__ import annotations

from typing import Optional


class VarimorphError(RuntimeError):
    exit_code = 1
    kind = "error"

    def line(self) -> str:
        return f"E{self.exit_code} {self.kind}: {self}"


class UsageError(VarimorphError):
    exit_code = 2
    kind = "usage"


class InputError(VarimorphError):
    exit_code = 3
    kind = "io"


class UnsupportedFormatError(InputError):
    pass


class ObjParseError(InputError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyCloudError(InputError):
    pass


class NumericError(VarimorphError):
    exit_code = 4
    kind = "numeric"


class DomainError(NumericError):
    pass


class DimensionMismatchError(NumericError):
    pass


class UnsupportedDimensionError(NumericError):
    pass


class InsufficientConstraintsError(NumericError):
    pass


class TooManyConstraintsError(NumericError):
    pass


class DuplicateCenterError(NumericError):
    pass


class DegenerateConstraintsError(NumericError):
    pass


class SingularSystemError(NumericError):
    def __init__(self, message: str, pivot_index: int):
        super().__init__(message)
        self.pivot_index = pivot_index


class EmptyShapeError(NumericError):
    pass


class BorderError(NumericError):
    pass


class InvalidNormalError(NumericError):
    pass


class InvalidParameterError(NumericError):
    pass


class InvalidFrameError(NumericError):
    pass


class DegeneratePlacementError(NumericError):
    pass


class EvaluationError(NumericError):
    pass


class StageError(VarimorphError):
    """Wraps a failure of one pipeline stage; keeps the cause's exit code."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        if isinstance(cause, VarimorphError):
            self.exit_code = cause.exit_code
            self.kind = cause.kind
