from typing import Any, Optional

from pydantic import BaseModel, Field

from src.consts import Criterion, CalibrationMode, PosteriorMethod
from src.reinsurance.contracts import LadderParams

RISK_REPORT_COLUMNS = (
    "dist",
    "contract_id",
    "alpha",
    "omega",
    "beta",
    "premium",
    "e_ceded",
    "var_ceded",
    "var_retained",
    "var_level",
    "cte_total",
    "cte_ceded",
    "q",
    "u",
)


class RiskReport(BaseModel):
    dist: str = Field(description="Severity literal, e.g. exp(mean=10)")
    contract_id: str
    alpha: float = Field(gt=0, lt=1)
    omega: float = Field(ge=0, le=1)
    beta: float = Field(gt=0)
    premium: float = Field(description="Reinsurance premium paid by the insurer")
    e_ceded: float = Field(ge=0)
    var_ceded: float = Field(ge=0)
    var_retained: float = Field(ge=0)
    var_level: float = Field(description="(1 - alpha)-quantile of X")
    cte_total: float = Field(description="CTE of retained loss plus premium")
    cte_ceded: float
    q_value: float = Field(ge=0)
    u_value: float

    def to_row(self) -> dict[str, Any]:
        values = self.model_dump()
        values["q"] = values.pop("q_value")
        values["u"] = values.pop("u_value")
        return {column: values[column] for column in RISK_REPORT_COLUMNS}


class ProportionalOptimum(BaseModel):
    omega: float
    c_star: float = Field(description="Numerical argmin over proportional shares")
    q_star: float
    closed_form_c: float = Field(description="1 - omega")
    reciprocal_c: float = Field(description="1 / (1 + omega), reported for comparison")
    reciprocal_q: float


class EquivalenceReport(BaseModel):
    premium_rule: str
    cte_stop_loss: float
    cte_contract: float
    diff: float = Field(description="Monte-Carlo CTE(contract) - CTE(stop-loss)")
    standard_error: float
    analytic_diff: float
    passed: bool


class CalibrationResult(BaseModel):
    criterion: Criterion
    mode: CalibrationMode
    params: LadderParams
    report: RiskReport
    objective: float
    stop_loss_objective: float
    target: float = Field(description="Q* for variance, unused for utility")
    premium_gap: float = Field(description="E[stop-loss] - E[ladder]")
    tan_feasible: bool
    collapsed_to_stop_loss: bool = False
    restarts: int = 0
    converged: bool = True


class PosteriorEstimate(BaseModel):
    names: list[str]
    means: list[float]
    variances: list[float]
    trace: list[list[float]] = Field(default_factory=list)
    method: PosteriorMethod = PosteriorMethod.GRID
    diagnostics: dict[str, float] = Field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.means))

    @property
    def standard_deviations(self) -> list[float]:
        return [v**0.5 for v in self.variances]


class VerificationReport(BaseModel):
    rho: str
    value_f: float
    value_g: float
    diff: float
    standard_error: float
    passed: bool
    translative: Optional[bool] = None
