import math

import pytest

from src.consts import CalibrationMode, Criterion
from src.exceptions import CalibrationError, LayerOrderError, NoRootError
from src.reinsurance.calibrate import (
    CalibrationProblem,
    UtilityCombination,
    VarianceCombination,
    calibrate,
    calibrate_utility,
    calibrate_variance,
    objective_from_cuts,
    objective_from_gaps,
    premium_match,
    stop_loss_criterion,
    with_budget,
)
from src.reinsurance.contracts import LadderParams
from src.reinsurance.distributions import Exponential, parse_distribution
from src.reinsurance.risk import expected_ceded


@pytest.fixture
def problem():
    return CalibrationProblem(
        dist=Exponential(mean=10), layers=1, restarts=2, max_iter=1000, fatol=1e-6
    )


class TestObjective:
    """Objective evaluation outside the search."""

    def test_stop_loss_criterion(self, problem):
        assert stop_loss_criterion(problem) == pytest.approx(46.1586, abs=1e-3)

    def test_target_distance(self, problem):
        """Wide gaps behave like the stop-loss: (Q_SL - Q*)^2 with Q* = 16."""
        value = objective_from_gaps(problem, [1e6])
        assert value == pytest.approx((46.1586 - 16.0) ** 2, rel=1e-4)

    def test_cuts_and_gaps_agree(self, problem):
        d = problem.d_alpha
        assert objective_from_cuts(problem, [d + 2.0]) == pytest.approx(
            objective_from_gaps(problem, [2.0])
        )

    def test_utility_uses_raw_value(self):
        problem = CalibrationProblem(
            dist=Exponential(mean=10), criterion=UtilityCombination(omega=0.2, beta=1.0)
        )
        assert objective_from_gaps(problem, [1e6]) == pytest.approx(
            stop_loss_criterion(problem), rel=1e-6
        )


class TestPremiumMatch:
    """Deductible re-solve under the match mode."""

    def test_matches_target(self):
        dist = Exponential(mean=10)
        params = LadderParams(deductible=23.0259, cuts=(25.0,))
        matched = premium_match(dist, params, 1.0)
        assert expected_ceded(dist, matched) == pytest.approx(1.0, abs=1e-8)
        assert matched.deductible < params.deductible
        assert matched.gaps() == pytest.approx(params.gaps())

    def test_unattainable(self):
        with pytest.raises(NoRootError):
            premium_match(Exponential(mean=10), LadderParams(deductible=1.0), 20.0)


class TestCalibrate:
    """End-to-end ladder calibration."""

    def test_never_worse_than_stop_loss(self, problem):
        result = calibrate(problem)
        assert result.objective <= result.stop_loss_objective + 1e-12
        assert result.params.deductible == pytest.approx(problem.d_alpha)
        assert result.criterion == Criterion.VARIANCE
        if not result.collapsed_to_stop_loss:
            assert result.tan_feasible

    def test_match_mode_keeps_premium(self):
        problem = CalibrationProblem(
            dist=Exponential(mean=10),
            layers=1,
            restarts=2,
            max_iter=1000,
            fatol=1e-6,
            mode=CalibrationMode.MATCH,
        )
        result = calibrate(problem)
        assert result.premium_gap == pytest.approx(0.0, abs=1e-6)

    def test_wrong_criterion(self, problem):
        with pytest.raises(CalibrationError):
            calibrate_utility(problem)
        utility = problem.model_copy(update={"criterion": UtilityCombination()})
        with pytest.raises(CalibrationError):
            calibrate_variance(utility)

    def test_budget_exhausted_carries_best(self, problem):
        tight = problem.model_copy(update={"max_iter": 1})
        try:
            result = calibrate(tight)
        except CalibrationError as e:
            assert e.best_so_far is not None
            assert math.isfinite(e.best_so_far.objective)
        else:
            assert result.collapsed_to_stop_loss

    def test_with_budget(self, problem):
        assert with_budget(problem, 4).max_iter == 4000
        assert with_budget(problem, 4).dist == problem.dist

    def test_discriminated_criterion(self):
        problem = CalibrationProblem.model_validate(
            {"dist": Exponential(mean=4), "criterion": {"kind": Criterion.UTILITY}}
        )
        assert isinstance(problem.criterion, UtilityCombination)
        assert isinstance(CalibrationProblem(dist=Exponential(mean=4)).criterion, VarianceCombination)


TABLE_DISTRIBUTIONS = [
    "exp(mean=10)",
    "exp(mean=8)",
    "exp(mean=4)",
    "weibull(scale=1, shape=2)",
    "weibull(scale=3, shape=2)",
]

MATCH_DISTRIBUTIONS = ["exp(mean=10)", "exp(mean=4)", "weibull(scale=1, shape=2)"]


def _best_effort(calibration, problem):
    """The calibrated ladder, or the best point of a search that ran out of budget."""
    try:
        return calibration(problem)
    except CalibrationError as e:
        return e.best_so_far


class TestMatchMode:
    """Premium-matched calibration runs to the end for every severity."""

    @pytest.mark.parametrize("literal", MATCH_DISTRIBUTIONS)
    @pytest.mark.parametrize("layers", [1, 2])
    @pytest.mark.parametrize("criterion", [VarianceCombination(), UtilityCombination()])
    def test_keeps_stop_loss_premium(self, literal, layers, criterion):
        dist = parse_distribution(literal)
        problem = CalibrationProblem(
            dist=dist,
            layers=layers,
            criterion=criterion,
            restarts=2,
            max_iter=1000,
            fatol=1e-6,
            mode=CalibrationMode.MATCH,
        )
        result = _best_effort(calibrate, problem)
        assert result.mode == CalibrationMode.MATCH
        assert result.objective <= result.stop_loss_objective + 1e-12
        assert result.report.e_ceded == pytest.approx(
            dist.stop_loss_premium(problem.d_alpha), abs=1e-6
        )
        assert result.params.deductible <= problem.d_alpha + 1e-9

    def test_vanishing_gap_is_finite(self):
        problem = CalibrationProblem(
            dist=Exponential(mean=10), layers=1, mode=CalibrationMode.MATCH
        )
        assert math.isfinite(objective_from_gaps(problem, [1e-30]))

    def test_gap_floor_keeps_cut_above_deductible(self, problem):
        with pytest.raises(LayerOrderError):
            LadderParams.from_gaps(problem.d_alpha, [1e-30])
        assert math.isfinite(objective_from_gaps(problem, [1e-30]))


class TestTableRows:
    """Two-layer ladders never lose to the stop-loss at d_alpha."""

    @pytest.mark.parametrize("literal", TABLE_DISTRIBUTIONS)
    def test_variance_row(self, literal):
        problem = CalibrationProblem(
            dist=parse_distribution(literal),
            layers=2,
            restarts=2,
            max_iter=2000,
        )
        result = _best_effort(calibrate_variance, problem)
        q_stop_loss = stop_loss_criterion(problem)
        assert result.report.q_value <= q_stop_loss + 1e-9
        assert abs(result.report.q_value - result.target) <= abs(
            q_stop_loss - result.target
        ) + 1e-9
        assert result.report.q_value >= result.target - 1e-9

    @pytest.mark.parametrize("literal", TABLE_DISTRIBUTIONS)
    def test_utility_row(self, literal):
        problem = CalibrationProblem(
            dist=parse_distribution(literal),
            layers=2,
            criterion=UtilityCombination(omega=0.2, beta=1.0),
            restarts=2,
            max_iter=2000,
        )
        result = _best_effort(calibrate_utility, problem)
        assert result.report.u_value <= stop_loss_criterion(problem) + 1e-12
        assert result.objective == pytest.approx(result.report.u_value, rel=1e-9)
        if not result.collapsed_to_stop_loss:
            assert result.objective < result.stop_loss_objective
