import math

import numpy as np
import pytest

from src.consts import EstimationMethod, PremiumRule
from src.datamodel.reports import RISK_REPORT_COLUMNS
from src.exceptions import DomainError
from src.reinsurance.contracts import LadderParams, build_ladder, is_feasible, proportional, stop_loss
from src.reinsurance.distributions import Empirical, Exponential, Weibull
from src.reinsurance.risk import (
    cte_ceded,
    cte_equivalence,
    cte_total,
    estimate_cte,
    expected_ceded,
    exponential_moment,
    ladder_expectation,
    mc_mgf,
    mgf_ceded,
    moments,
    optimal_proportional_q,
    proportional_q,
    q_combination,
    risk_report,
    utility_combination,
    value_at_risk_total,
)

D = 23.0259


@pytest.fixture
def exp10():
    return Exponential(mean=10)


@pytest.fixture
def ladder():
    return LadderParams(deductible=D, cuts=(24.4258, 48.4516))


class TestMoments:
    """Means and variances of the ceded and retained parts."""

    def test_stop_loss_moments(self, exp10):
        m = moments(exp10, stop_loss(D))
        assert m.e_ceded == pytest.approx(1.0, abs=1e-4)
        assert m.var_ceded == pytest.approx(19.0, abs=1e-3)
        assert m.var_retained == pytest.approx(52.948, abs=1e-3)
        assert m.e_ceded + m.e_retained == pytest.approx(10.0)

    def test_stop_loss_q(self, exp10):
        assert q_combination(exp10, stop_loss(D), 0.2) == pytest.approx(46.1586, abs=1e-3)

    def test_proportional_variances(self, exp10):
        m = moments(exp10, proportional(0.8))
        assert m.var_ceded == pytest.approx(64.0, rel=1e-6)
        assert m.var_retained == pytest.approx(4.0, rel=1e-6)

    def test_ladder_expectation_agrees(self, exp10, ladder):
        assert ladder_expectation(ladder, exp10) == pytest.approx(
            expected_ceded(exp10, ladder), rel=1e-8
        )

    def test_empirical_uses_samples(self):
        dist = Empirical(samples=(1.0, 2.0, 3.0, 6.0))
        assert expected_ceded(dist, stop_loss(2.0)) == pytest.approx(1.25)

    def test_omega_domain(self, exp10):
        with pytest.raises(DomainError):
            q_combination(exp10, stop_loss(D), 1.5)


class TestProportionalOptimum:
    """The proportional benchmark for the variance criterion."""

    @pytest.mark.parametrize("omega", [0.0, 0.2, 0.5, 0.9])
    def test_argmin_is_one_minus_omega(self, omega):
        optimum = optimal_proportional_q(omega)
        assert optimum.c_star == pytest.approx(1.0 - omega, abs=1e-6)
        assert optimum.q_star == pytest.approx(omega * (1.0 - omega), abs=1e-9)

    def test_reciprocal_share_is_worse(self):
        optimum = optimal_proportional_q(0.2)
        assert optimum.reciprocal_c == pytest.approx(1.0 / 1.2)
        assert optimum.reciprocal_q > optimum.q_star

    @pytest.mark.parametrize("dist", [Exponential(mean=10), Weibull(scale=3, shape=2)])
    @pytest.mark.parametrize("c", [0.0, 0.3, 0.8, 1.0])
    def test_closed_form_matches_quadrature(self, dist, c):
        assert q_combination(dist, proportional(c), 0.2) == pytest.approx(
            proportional_q(c, 0.2, dist.variance()), rel=1e-7, abs=1e-10
        )


class TestTailMeasures:
    """VaR and CTE of the retained and ceded parts."""

    def test_cte_ceded_of_stop_loss(self, exp10):
        assert cte_ceded(exp10, stop_loss(D), 0.1) == pytest.approx(10.0, abs=1e-3)

    @pytest.mark.parametrize(
        "dist, expected",
        [(Exponential(mean=4), 4.0), (Weibull(scale=1, shape=2), 0.2825)],
    )
    def test_cte_ceded_at_decile(self, dist, expected):
        d = float(dist.quantile(0.9))
        assert cte_ceded(dist, stop_loss(d), 0.1) == pytest.approx(expected, abs=1e-4)

    def test_cte_total_of_stop_loss(self, exp10):
        q = float(exp10.quantile(0.9))
        assert cte_total(exp10, stop_loss(q), 0.1, premium=1.0) == pytest.approx(q + 1.0)
        assert value_at_risk_total(exp10, stop_loss(q), 0.1) == pytest.approx(q)

    def test_monte_carlo_matches_analytic(self, exp10):
        estimate = cte_ceded(
            exp10,
            stop_loss(D),
            0.1,
            method=EstimationMethod.MONTE_CARLO,
            n=500_000,
            seed=11,
        )
        assert estimate == pytest.approx(10.0, abs=0.3)

    def test_monte_carlo_needs_seed(self, exp10):
        with pytest.raises(DomainError):
            cte_ceded(exp10, stop_loss(D), 0.1, method=EstimationMethod.MONTE_CARLO, n=100)

    def test_alpha_domain(self, exp10):
        with pytest.raises(DomainError):
            cte_total(exp10, stop_loss(D), 0.0)

    def test_premium_shifts_cte(self, exp10, ladder):
        base = cte_total(exp10, ladder, 0.1)
        assert cte_total(exp10, ladder, 0.1, premium=2.5) - base == pytest.approx(2.5, abs=1e-12)

    @pytest.mark.parametrize("c", [0.3, 0.8])
    def test_proportional_scales_cte(self, exp10, c):
        cte_x = float(exp10.quantile(0.9)) + 10.0
        expected = (1.0 - c) * cte_x + 1.0
        contract = proportional(c)
        assert cte_total(exp10, contract, 0.1, premium=1.0) == pytest.approx(expected, rel=1e-8)
        estimate = cte_total(
            exp10,
            contract,
            0.1,
            premium=1.0,
            method=EstimationMethod.MONTE_CARLO,
            n=1_000_000,
            seed=13,
        )
        assert estimate == pytest.approx(expected, rel=0.01)

    @pytest.mark.parametrize(
        "more, less",
        [
            (stop_loss(D), LadderParams(deductible=D, cuts=(24.4258, 48.4516))),
            (stop_loss(D), stop_loss(D + 5.0)),
            (proportional(0.8), proportional(0.5)),
        ],
    )
    def test_more_cession_never_raises_cte(self, exp10, more, less):
        common = exp10.sample(400_000, seed=29)
        a = estimate_cte(exp10, more, 0.1, samples=common)
        b = estimate_cte(exp10, less, 0.1, samples=common)
        assert a.value <= b.value + 3.0 * max(a.standard_error, b.standard_error) + 1e-12
        assert cte_total(exp10, more, 0.1) <= cte_total(exp10, less, 0.1) + 1e-9


class TestCteEquivalence:
    """Ladders and the stop-loss share the CTE of total risk."""

    def test_loaded_premium(self, exp10, ladder):
        report = cte_equivalence(exp10, ladder, 0.1, PremiumRule.LOADED, n=100_000, seed=3)
        assert report.analytic_diff == pytest.approx(0.0, abs=1e-6)
        assert report.passed

    def test_stop_loss_against_itself(self, exp10):
        q = float(exp10.quantile(0.9))
        report = cte_equivalence(exp10, stop_loss(q), 0.1, n=10_000, seed=3)
        assert report.diff == pytest.approx(0.0, abs=1e-9)


class TestUtility:
    """Exponential-utility criterion."""

    def test_closed_form_stop_loss(self, exp10):
        q = float(exp10.quantile(0.9))
        ceded = 0.9 + 0.1 / 11.0
        retained = (1.0 - math.exp(-1.1 * q)) / 11.0 + 0.1 * math.exp(-q)
        expected = 0.2 * ceded + 0.8 * retained
        assert utility_combination(exp10, stop_loss(q), 0.2, 1.0) == pytest.approx(expected)

    def test_mgf_paths_agree(self, exp10, ladder):
        assert mgf_ceded(ladder, exp10, -0.5) == pytest.approx(
            exponential_moment(exp10, ladder, -0.5), rel=1e-8
        )

    @pytest.mark.parametrize("t", [-0.02, -0.01, 0.01, 0.02])
    def test_mgf_matches_monte_carlo(self, exp10, ladder, t):
        mean, standard_error = mc_mgf(exp10, ladder, t, n=1_000_000, seed=17)
        analytic = mgf_ceded(ladder, exp10, t)
        assert analytic == pytest.approx(mean, rel=0.01)
        assert abs(analytic - mean) <= 4.0 * standard_error

    @pytest.mark.parametrize(
        "dist, h", [(Exponential(mean=10), 1e-5), (Weibull(scale=3, shape=2), 1e-3)]
    )
    def test_mgf_normalization_and_slope(self, dist, h):
        d = float(dist.quantile(0.9))
        params = LadderParams.from_gaps(d, [0.5 * d, 0.8 * d])
        assert mgf_ceded(params, dist, 0.0) == pytest.approx(1.0, abs=1e-10)
        slope = (mgf_ceded(params, dist, h) - mgf_ceded(params, dist, -h)) / (2.0 * h)
        assert slope == pytest.approx(expected_ceded(dist, params), abs=1e-4)

    def test_weibull_quadrature(self):
        dist = Weibull(scale=3, shape=2)
        params = LadderParams(deductible=float(dist.quantile(0.9)), cuts=(5.0, 10.0))
        assert mgf_ceded(params, dist, -1.0) == pytest.approx(
            exponential_moment(dist, params, -1.0), rel=1e-6
        )

    def test_beta_domain(self, exp10):
        with pytest.raises(DomainError):
            utility_combination(exp10, stop_loss(D), 0.2, 0.0)


class TestRiskReport:
    """The combined report."""

    def test_row(self, exp10, ladder):
        report = risk_report(exp10, ladder)
        row = report.to_row()
        assert tuple(row) == RISK_REPORT_COLUMNS
        assert row["contract_id"] == build_ladder(ladder).name
        assert row["premium"] == pytest.approx(report.e_ceded)
        assert row["var_level"] == pytest.approx(D, abs=1e-4)


def _random_feasible_ladders(d_alpha: float, count: int, seed: int) -> list[LadderParams]:
    rng = np.random.default_rng(seed)
    return [
        LadderParams.from_gaps(d_alpha, rng.uniform(0.02, 1.0, size=rng.integers(1, 3)) * d_alpha)
        for _ in range(count)
    ]


class TestRandomLadderEquivalence:
    """CTE of total risk over random ladders attached at d_alpha."""

    @pytest.mark.parametrize("dist", [Exponential(mean=10), Weibull(scale=3, shape=2)])
    def test_twenty_ladders(self, dist):
        d_alpha = float(dist.quantile(0.9))
        ladders = _random_feasible_ladders(d_alpha, 20, seed=41)
        e_stop_loss = dist.stop_loss_premium(d_alpha)
        loaded_passes, fixed_matches = 0, 0
        for i, params in enumerate(ladders):
            assert is_feasible(build_ladder(params), d_alpha, dist=dist).feasible

            loaded = cte_equivalence(dist, params, 0.1, PremiumRule.LOADED, n=1_000_000, seed=100 + i)
            assert loaded.analytic_diff == pytest.approx(0.0, abs=1e-6)
            loaded_passes += loaded.passed

            fixed = cte_equivalence(dist, params, 0.1, PremiumRule.FIXED, n=1_000_000, seed=100 + i)
            gap = (e_stop_loss - expected_ceded(dist, params)) / 0.1
            assert fixed.analytic_diff == pytest.approx(gap, rel=1e-6, abs=1e-9)
            fixed_matches += abs(fixed.diff - fixed.analytic_diff) <= 3.0 * fixed.standard_error + 1e-12
        assert loaded_passes >= 19
        assert fixed_matches >= 19
