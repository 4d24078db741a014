from typing import Optional

from pydantic import BaseModel, Field

from src.consts import CalibrationMode, Criterion
from src.reinsurance.contracts import FeasibilityReport


class RiskReportRequest(BaseModel):
    dist: str = Field(description="Severity literal", default="exp(mean=10)")
    contract: str = Field(
        description="stoploss:d, prop:c, layer:a;l or ladder:d;M1;M2",
        default="stoploss:23.0259",
    )
    alpha: float = Field(description="CTE level", default=0.1, gt=0, lt=1)
    omega: float = Field(description="Weight of the ceded variance", default=0.2, ge=0, le=1)
    beta: float = Field(description="Exponential utility coefficient", default=1.0, gt=0)
    premium: Optional[float] = Field(
        description="Reinsurance premium; defaults to the expected ceded loss",
        default=None,
    )


class LadderRequest(BaseModel):
    deductible: float = Field(description="Base deductible d", ge=0)
    cuts: list[float] = Field(description="Cut points M_1 < M_2 < ...", default_factory=list)
    alpha: float = Field(default=0.1, gt=0, lt=1)
    dist: Optional[str] = Field(
        description="Severity used for d_alpha in the feasibility check; "
        "without it the deductible is taken as d_alpha",
        default=None,
    )


class LadderResponse(BaseModel):
    name: str
    breakpoints: list[float]
    slopes: list[float]
    text: str = Field(description="(breakpoint, slope) lines")
    d_alpha: float
    feasibility: FeasibilityReport


class CalibrateRequest(BaseModel):
    dist: str = Field(default="exp(mean=10)")
    criterion: Criterion = Criterion.VARIANCE
    layers: int = Field(default=1, ge=1)
    alpha: float = Field(default=0.1, gt=0, lt=1)
    omega: float = Field(default=0.2, ge=0, le=1)
    beta: float = Field(default=1.0, gt=0)
    mode: CalibrationMode = CalibrationMode.STRICT
