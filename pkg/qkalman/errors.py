"""
Exception hierarchy shared by the numerical modules and the CLI.

Every error carries the process exit code the CLI should use, an optional
stage name (filled in by the pipeline controller) and the numerical
residuals that triggered it.
"""

from typing import Any, Dict, Optional


class QKalmanError(RuntimeError):
    """Base class for all qkalman errors."""

    exit_code = 2

    def __init__(self, message: str, residuals: Optional[Dict[str, Any]] = None, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.residuals = dict(residuals or {})
        self.stage = stage

    def __str__(self):
        text = self.message
        if self.stage:
            text = f"[{self.stage}] {text}"
        if self.residuals:
            details = ", ".join(f"{k}={_fmt(v)}" for k, v in self.residuals.items())
            text = f"{text} ({details})"
        return text

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": type(self).__name__,
            "message": self.message,
            "stage": self.stage,
            "residuals": {k: _fmt(v) for k, v in self.residuals.items()},
        }


class SpecValidationError(QKalmanError):
    """
    A spec file or an input matrix is invalid.

    Attributes:
        field_path: Dotted/indexed path to the offending field, e.g. ``Cminus[0][2]``
        expected: What the field should have looked like
        found: What was actually found
    """

    exit_code = 1

    def __init__(self, message: str, field_path: Optional[str] = None, expected: Any = None, found: Any = None, residuals: Optional[Dict[str, Any]] = None):
        super().__init__(message, residuals=residuals)
        self.field_path = field_path
        self.expected = expected
        self.found = found

    def __str__(self):
        text = super().__str__()
        if self.field_path:
            text = f"{self.field_path}: {text}"
        if self.expected is not None or self.found is not None:
            text = f"{text} [expected {self.expected}, found {self.found}]"
        return text

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data.update({"field_path": self.field_path, "expected": _fmt(self.expected), "found": _fmt(self.found)})
        return data


class DimensionError(SpecValidationError):
    """Odd or mutually incompatible matrix shapes."""


class PoleProximityError(QKalmanError):
    """A transfer function was evaluated at (or too close to) a pole."""

    exit_code = 1

    def __init__(self, message: str, nearest_eigenvalue: complex, residuals: Optional[Dict[str, Any]] = None):
        super().__init__(message, residuals=residuals)
        self.nearest_eigenvalue = nearest_eigenvalue


class StructureError(QKalmanError):
    """A structural assertion (subspace dimension, group membership, basis exhaustion) failed."""

    exit_code = 2


class ToleranceError(StructureError):
    """A zero pattern or cross-check failed at the configured tolerance."""


class InternalConsistencyError(StructureError):
    """A constructed object violates an identity it satisfies by construction."""


class SpecIOError(QKalmanError):
    """A file could not be read or written."""

    exit_code = 3


class SymmetrizationWarning(UserWarning):
    """An almost-Hermitian input was replaced by its Hermitian part."""


def _fmt(value: Any) -> Any:
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "item") and getattr(value, "shape", None) == ():
        return _fmt(value.item())
    if isinstance(value, float):
        return float(f"{value:.3e}")
    return value
