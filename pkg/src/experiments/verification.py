import logging
import math
from typing import Any, Optional

from pydantic import BaseModel

from src.config import Configuration
from src.experiments.base_experiment import BaseExperiment
from src.exceptions import DomainError
from src.reinsurance.contracts import alternating_contract, parse_contract
from src.reinsurance.distributions import parse_distribution
from src.reinsurance.rho_ext import (
    build_convex_extension,
    build_preserving_extension,
    mc_verify_rho,
    parse_risk_measure,
)
from src.reinsurance.risk import expected_ceded

logger = logging.getLogger(__name__)

# flat, slope-1, flat widths as fractions of d_alpha
ADVERSARIAL_WIDTHS = (0.5, 0.25, 0.25)


class VerifyCase(BaseModel):
    cuts: tuple[float, ...] = ()
    adversarial: bool = False

    @property
    def expect_pass(self) -> bool:
        return not self.adversarial

    @property
    def label(self) -> str:
        if self.adversarial:
            return "adversarial"
        return ";".join(f"{c:g}" for c in self.cuts) or "base"


class VerifyExperiment(BaseExperiment):
    """Monte-Carlo check that an extension g keeps rho of the total risk under f."""

    columns = (
        "case",
        "contract",
        "rho",
        "value_f",
        "value_g",
        "diff",
        "standard_error",
        "passed",
        "expected",
        "translative",
        "a_min",
        "a_max",
    )
    retryable = False

    def __init__(
        self,
        settings: Configuration,
        dist: str,
        base: str,
        cut_sets: list[tuple[float, ...]],
        rho: str = "cte:0.1",
        n: Optional[int] = None,
        adversarial: bool = False,
        omega_star: Optional[float] = None,
    ):
        super().__init__(settings)
        self.dist = parse_distribution(dist)
        self.base = parse_contract(base)
        self.rho = parse_risk_measure(rho)
        self.n = n or settings.monte_carlo.n_samples
        self.omega_star = omega_star
        self.cases = [VerifyCase(cuts=tuple(cuts)) for cuts in cut_sets]
        if adversarial:
            self.cases.append(VerifyCase(adversarial=True))

    def items(self) -> list[VerifyCase]:
        return self.cases

    def label(self, item: VerifyCase) -> str:
        return item.label

    def _extension(self, case: VerifyCase):
        if case.adversarial:
            d_alpha = float(self.dist.quantile(1.0 - self.settings.experiment.alpha))
            widths = tuple(w * d_alpha for w in ADVERSARIAL_WIDTHS)
            return alternating_contract(widths, name="adversarial"), math.nan, math.nan
        if self.omega_star is not None:
            return build_convex_extension(self.base, case.cuts, self.omega_star)
        return build_preserving_extension(self.base, case.cuts), math.nan, math.nan

    def run_row(self, item: VerifyCase, budget: int = 1) -> dict[str, Any]:
        seed = self.settings.experiment.seed
        if seed is None:
            raise DomainError("Monte-Carlo verification needs a seed")
        g, a_min, a_max = self._extension(item)
        premium = expected_ceded(self.dist, self.base)
        report = mc_verify_rho(
            self.base,
            g,
            self.dist,
            self.rho,
            premium=premium,
            n=self.n,
            seed=seed,
            batches=self.settings.monte_carlo.batches,
        )
        return {
            "case": item.label,
            "contract": g.name,
            "rho": report.rho,
            "value_f": report.value_f,
            "value_g": report.value_g,
            "diff": report.diff,
            "standard_error": report.standard_error,
            "passed": report.passed,
            "expected": "pass" if item.expect_pass else "fail",
            "translative": report.translative,
            "a_min": a_min,
            "a_max": a_max,
        }

    def check(self, row: dict[str, Any]) -> bool:
        return bool(row["passed"]) == (row["expected"] == "pass")
