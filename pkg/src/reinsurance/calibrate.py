"""Ladder calibration under the variance and exponential-utility criteria.

The search runs over log gap widths log(d_1), ..., log(d_k) so every
candidate is a valid ladder. ``strict`` keeps the base deductible at d_alpha;
``match`` re-solves the deductible so the ladder's expected ceded loss equals
the stop-loss premium at d_alpha.
"""

import logging
import math
from typing import Annotated, Literal, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config import config
from src.consts import CalibrationMode, Criterion
from src.datamodel.reports import CalibrationResult
from src.engine.numerics import find_root, minimize_simplex
from src.exceptions import CalibrationError, NoRootError, ReinsuranceError
from src.reinsurance.contracts import LadderParams, build_ladder, is_feasible
from src.reinsurance.distributions import Distribution
from src.reinsurance.risk import (
    expected_ceded,
    optimal_proportional_q,
    q_combination,
    risk_report,
    utility_combination,
)

logger = logging.getLogger(__name__)

LOG_GAP_BOUND = 40.0
MIN_RELATIVE_GAP = 1e-9


class VarianceCombination(BaseModel):
    kind: Literal[Criterion.VARIANCE] = Criterion.VARIANCE
    omega: float = Field(default=config.experiment.omega, ge=0, le=1)


class UtilityCombination(BaseModel):
    kind: Literal[Criterion.UTILITY] = Criterion.UTILITY
    omega: float = Field(default=config.experiment.omega, ge=0, le=1)
    beta: float = Field(default=config.experiment.beta, gt=0)


CriterionSpec = Annotated[
    Union[VarianceCombination, UtilityCombination], Field(discriminator="kind")
]


class CalibrationProblem(BaseModel):
    model_config = ConfigDict(frozen=True)

    dist: Distribution
    alpha: float = Field(default=config.experiment.alpha, gt=0, lt=1)
    layers: int = Field(default=1, ge=1)
    criterion: CriterionSpec = Field(default_factory=VarianceCombination)
    mode: CalibrationMode = CalibrationMode(config.calibration.mode)
    restarts: int = Field(default=config.calibration.restarts, ge=1)
    xatol: float = Field(default=config.calibration.xatol, gt=0)
    fatol: float = Field(default=config.calibration.fatol, gt=0)
    max_iter: int = Field(default=config.calibration.max_iter, ge=1)

    @property
    def d_alpha(self) -> float:
        return float(self.dist.quantile(1.0 - self.alpha))


def premium_match(
    dist: Distribution, params: LadderParams, target: float
) -> LadderParams:
    """Re-solve the base deductible so E[h(X)] = target, gaps held fixed."""
    mean = dist.mean()
    if not 0.0 < target < mean:
        raise NoRootError(
            f"Target premium {target:.6g} is unattainable: it must lie in (0, {mean:.6g})"
        )
    gaps = params.gaps()

    def residual(d: float) -> float:
        candidate = LadderParams.from_gaps(d, gaps, alpha=params.alpha)
        return expected_ceded(dist, candidate) - target

    upper = float(dist.quantile(1.0 - 1e-9))
    d = find_root(residual, 0.0, upper)
    return LadderParams.from_gaps(d, gaps, alpha=params.alpha)


class _Objective:
    """Criterion value of a ladder, and its distance to the calibration target."""

    def __init__(self, problem: CalibrationProblem):
        self.problem = problem
        self.d_alpha = problem.d_alpha
        self.stop_loss_premium = problem.dist.stop_loss_premium(self.d_alpha)
        self.target = 0.0
        if problem.criterion.kind == Criterion.VARIANCE:
            self.target = optimal_proportional_q(
                problem.criterion.omega, problem.dist.variance()
            ).q_star

    def criterion_value(self, params: LadderParams) -> float:
        criterion = self.problem.criterion
        if criterion.kind == Criterion.VARIANCE:
            return q_combination(self.problem.dist, params, criterion.omega)
        return utility_combination(
            self.problem.dist, params, criterion.omega, criterion.beta
        )

    def of_params(self, params: LadderParams) -> float:
        value = self.criterion_value(params)
        if self.problem.criterion.kind == Criterion.VARIANCE:
            return (value - self.target) ** 2
        return value

    def ladder(self, gaps: Sequence[float]) -> LadderParams:
        params = LadderParams.from_gaps(self.d_alpha, gaps, alpha=self.problem.alpha)
        if self.problem.mode == CalibrationMode.MATCH:
            params = premium_match(self.problem.dist, params, self.stop_loss_premium)
        return params

    def gaps(self, log_gaps: np.ndarray) -> np.ndarray:
        """Gap widths, floored so every cut stays above the previous flat in float64."""
        gaps = np.exp(np.clip(log_gaps, -LOG_GAP_BOUND, LOG_GAP_BOUND))
        return np.maximum(gaps, MIN_RELATIVE_GAP * max(self.d_alpha, 1.0))

    def __call__(self, log_gaps: np.ndarray) -> float:
        gaps = self.gaps(log_gaps)
        try:
            return self.of_params(self.ladder(gaps))
        except (ReinsuranceError, ValueError) as e:
            logger.debug(f"objective undefined at gaps={gaps}: {e}")
            return math.inf


def objective_from_cuts(problem: CalibrationProblem, cuts: Sequence[float]) -> float:
    """The calibration objective for a ladder given by its cut points."""
    objective = _Objective(problem)
    params = LadderParams(
        alpha=problem.alpha, deductible=objective.d_alpha, cuts=tuple(cuts)
    )
    return objective(np.log(params.gaps()))


def objective_from_gaps(problem: CalibrationProblem, gaps: Sequence[float]) -> float:
    return _Objective(problem)(np.log(np.asarray(gaps, dtype=float)))


def _starts(problem: CalibrationProblem, d_alpha: float) -> list[np.ndarray]:
    tail = float(problem.dist.quantile(1.0 - problem.alpha / 2.0)) - d_alpha
    scale = tail if tail > 0 else max(d_alpha, 1.0)
    # gap guesses 0.25, 0.5, 1, 2, 4, ... times the spread of the upper tail
    return [
        np.full(problem.layers, math.log(scale * 2.0 ** (i - 2)))
        for i in range(problem.restarts)
    ]


def _result(
    problem: CalibrationProblem,
    objective: _Objective,
    params: LadderParams,
    value: float,
    stop_loss_value: float,
    collapsed: bool,
    restarts: int,
    converged: bool,
) -> CalibrationResult:
    criterion = problem.criterion
    contract = build_ladder(params)
    report = risk_report(
        problem.dist,
        params,
        alpha=problem.alpha,
        omega=criterion.omega,
        beta=getattr(criterion, "beta", config.experiment.beta),
        contract_id=contract.name,
    )
    return CalibrationResult(
        criterion=criterion.kind,
        mode=problem.mode,
        params=params,
        report=report,
        objective=value,
        stop_loss_objective=stop_loss_value,
        target=objective.target,
        premium_gap=objective.stop_loss_premium - report.e_ceded,
        tan_feasible=is_feasible(contract, objective.d_alpha, dist=problem.dist).feasible,
        collapsed_to_stop_loss=collapsed,
        restarts=restarts,
        converged=converged,
    )


def calibrate(problem: CalibrationProblem) -> CalibrationResult:
    """Multi-start simplex search; the stop-loss (gaps to infinity) is always a candidate."""
    objective = _Objective(problem)
    stop_loss_params = LadderParams(alpha=problem.alpha, deductible=objective.d_alpha)
    stop_loss_value = objective.of_params(stop_loss_params)

    starts = _starts(problem, objective.d_alpha)
    best = minimize_simplex(
        objective,
        starts,
        xatol=problem.xatol,
        fatol=problem.fatol,
        max_iter=problem.max_iter,
    )
    gaps = objective.gaps(best.x)

    if not math.isfinite(best.value) or stop_loss_value <= best.value:
        logger.info(
            f"{problem.dist.label}: no ladder beats the stop-loss "
            f"(objective {stop_loss_value:.6g})"
        )
        return _result(
            problem,
            objective,
            stop_loss_params,
            stop_loss_value,
            stop_loss_value,
            collapsed=True,
            restarts=len(starts),
            converged=best.converged,
        )

    params = objective.ladder(gaps)
    result = _result(
        problem,
        objective,
        params,
        best.value,
        stop_loss_value,
        collapsed=False,
        restarts=len(starts),
        converged=best.converged,
    )
    if not best.converged:
        raise CalibrationError(
            f"Simplex search did not converge after {len(starts)} starts "
            f"and {problem.max_iter} iterations",
            best_so_far=result,
        )
    logger.info(
        f"{problem.dist.label}: d={params.deductible:.4f} cuts="
        f"{tuple(round(c, 4) for c in params.cuts)} objective {best.value:.6g} "
        f"(stop-loss {stop_loss_value:.6g})"
    )
    return result


def calibrate_variance(problem: CalibrationProblem) -> CalibrationResult:
    if problem.criterion.kind != Criterion.VARIANCE:
        raise CalibrationError("calibrate_variance needs a variance criterion")
    return calibrate(problem)


def calibrate_utility(problem: CalibrationProblem) -> CalibrationResult:
    if problem.criterion.kind != Criterion.UTILITY:
        raise CalibrationError("calibrate_utility needs a utility criterion")
    return calibrate(problem)


def stop_loss_criterion(problem: CalibrationProblem) -> float:
    """Criterion value (Q or U, not the squared distance) of the stop-loss at d_alpha."""
    objective = _Objective(problem)
    return objective.criterion_value(
        LadderParams(alpha=problem.alpha, deductible=objective.d_alpha)
    )


def with_budget(problem: CalibrationProblem, factor: int) -> CalibrationProblem:
    """Same problem with ``factor`` times the iteration budget."""
    return problem.model_copy(update={"max_iter": problem.max_iter * factor})

