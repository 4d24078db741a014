from enum import Enum
from typing import Any, Optional

ErrorType = Enum(
    "ErrorType",
    [
        "DomainError",
        "UnsupportedForEmpirical",
        "NumericsError",
        "NoRootError",
        "LayerOrderError",
        "CalibrationError",
        "ImpossibleObservation",
        "DegenerateDataError",
        "ExtensionInfeasible",
        "OmegaOutOfBound",
        "ConfigError",
    ],
)


class ReinsuranceError(Exception):
    """Base class for every error raised by the library."""

    title: str = "Reinsurance error"
    error_type: ErrorType = ErrorType.DomainError

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail

    def extension_attributes(self) -> dict:
        return {}

    def to_payload(self) -> dict:
        return {
            "title": self.title,
            "type": self.error_type.name,
            "detail": self.detail,
            **self.extension_attributes(),
        }


class DomainError(ReinsuranceError):
    title = "Argument outside domain"
    error_type = ErrorType.DomainError


class UnsupportedForEmpirical(ReinsuranceError):
    title = "Operation undefined for empirical severities"
    error_type = ErrorType.UnsupportedForEmpirical


class NumericsError(ReinsuranceError):
    title = "Numerical procedure did not converge"
    error_type = ErrorType.NumericsError

    def __init__(self, detail: str, estimate: Optional[float] = None) -> None:
        super().__init__(detail)
        self.estimate = estimate

    def extension_attributes(self) -> dict:
        return {"estimate": self.estimate}


class NoRootError(NumericsError):
    title = "No root in bracket"
    error_type = ErrorType.NoRootError


class LayerOrderError(ReinsuranceError):
    title = "Layer cut points out of order"
    error_type = ErrorType.LayerOrderError


class CalibrationError(ReinsuranceError):
    title = "Calibration failed"
    error_type = ErrorType.CalibrationError

    def __init__(self, detail: str, best_so_far: Any = None) -> None:
        super().__init__(detail)
        self.best_so_far = best_so_far

    def extension_attributes(self) -> dict:
        best = self.best_so_far
        if hasattr(best, "model_dump"):
            best = best.model_dump(mode="json")
        return {"best_so_far": best}


class ImpossibleObservation(ReinsuranceError):
    title = "Observation outside the contract range"
    error_type = ErrorType.ImpossibleObservation

    def __init__(self, detail: str, value: float) -> None:
        super().__init__(detail)
        self.value = value

    def extension_attributes(self) -> dict:
        return {"value": self.value}


class DegenerateDataError(ReinsuranceError):
    title = "Likelihood vanishes on the whole grid"
    error_type = ErrorType.DegenerateDataError


class ExtensionInfeasible(ReinsuranceError):
    title = "Companion point has no solution"
    error_type = ErrorType.ExtensionInfeasible


class OmegaOutOfBound(ReinsuranceError):
    title = "Convex weight outside the admissible interval"
    error_type = ErrorType.OmegaOutOfBound

    def __init__(self, detail: str, a_min: float = 0.0, a_max: float = 0.0) -> None:
        super().__init__(detail)
        self.a_min = a_min
        self.a_max = a_max

    def extension_attributes(self) -> dict:
        return {"a_min": self.a_min, "a_max": self.a_max}


class ConfigError(ReinsuranceError):
    title = "Invalid configuration"
    error_type = ErrorType.ConfigError
