"""Pricer Errors

Typed failures raised by the pricing pipeline. Each class carries a stable
``code`` so callers (and the CLI exit-code mapping) can branch without
parsing messages.

Validation failures (SCHEMA, REJECTED) mean the input was wrong. Numerical
failures (everything under ``NumericalError``) mean the input was accepted
but the discretization or Monte Carlo estimate broke down.
"""

from dataclasses import dataclass
from typing import List, Optional, Any


class PricerError(Exception):
    """Base class for all pricing failures"""

    code = "ERROR"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}


@dataclass(frozen=True)
class SchemaIssue:
    """One schema violation, located by JSON pointer"""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ValidationError(PricerError):
    """Input rejected before any numerics ran"""

    code = "VALIDATION"


class SchemaError(ValidationError):
    """Scenario document does not match the schema"""

    code = "SCHEMA"

    def __init__(self, issues: List[SchemaIssue]):
        self.issues = list(issues)
        summary = "; ".join(str(issue) for issue in self.issues) or "invalid document"
        super().__init__(f"Invalid scenario: {summary}")

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "message": self.message,
            "issues": [{"path": i.path, "message": i.message} for i in self.issues],
        }


class RejectedError(ValidationError):
    """Model violates a standing assumption"""

    code = "REJECTED"

    def __init__(self, condition: str, detail: str = "", report: Optional[Any] = None):
        self.condition = condition
        self.detail = detail
        self.report = report
        message = f"REJECTED({condition})"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class DomainError(PricerError):
    """Coefficient evaluated outside its domain"""

    code = "DOMAIN"


class NumericalError(PricerError):
    """Numerical breakdown during a pipeline stage"""

    code = "NUMERICAL"


class NumericOverflowError(NumericalError):
    code = "NUMERIC_OVERFLOW"


class DegenerateError(NumericalError):
    code = "DEGENERATE"


class GridTooCoarseError(NumericalError):
    code = "GRID_TOO_COARSE"


class RegressionSingularError(NumericalError):
    code = "REGRESSION_SINGULAR"


class DivergedError(NumericalError):
    code = "DIVERGED"


class ZeroVolError(NumericalError):
    code = "ZERO_VOL"


class StageError(PricerError):
    """Wraps a failure with the pipeline stage it came from"""

    code = "STAGE"

    def __init__(self, stage: str, cause: PricerError):
        self.stage = stage
        self.cause = cause
        self.code = cause.code
        super().__init__(f"[{stage}] {cause.message}")

    @property
    def is_validation(self) -> bool:
        return isinstance(self.cause, ValidationError)

    @property
    def is_numerical(self) -> bool:
        return isinstance(self.cause, NumericalError)

    def to_dict(self) -> dict:
        data = self.cause.to_dict()
        data["stage"] = self.stage
        return data
