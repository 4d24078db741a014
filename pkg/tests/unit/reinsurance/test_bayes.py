import math

import numpy as np
import pytest

from src.consts import PosteriorMethod
from src.exceptions import DomainError, ImpossibleObservation, UnsupportedForEmpirical
from src.reinsurance.bayes import (
    ExponentialPrior,
    GammaPrior,
    PriorSpec,
    SeverityFamily,
    censored_loglik,
    grid_loglik,
    grid_posterior,
    iterate_estimation,
    metropolis_posterior,
    parse_prior,
    pinned_heights,
    posterior_mean,
    run_repetitions,
)
from src.engine.numerics import integrate
from src.reinsurance.contracts import alternating_contract, stop_loss
from src.reinsurance.distributions import Empirical, Exponential


@pytest.fixture
def exp1():
    return Exponential(mean=1)


@pytest.fixture
def family(exp1):
    return SeverityFamily.from_distribution(exp1)


@pytest.fixture
def censored_claims(exp1):
    """Exp(1) claims ceded through a stop-loss at 0.5."""
    claims = exp1.sample(2000, seed=21)
    return stop_loss(0.5).ceded(claims)


class TestPriors:
    """Prior parsing and the prior box."""

    def test_parse(self):
        assert parse_prior("exp(1)") == ExponentialPrior(mean=1)
        assert parse_prior("exp(mean=2)").mean() == pytest.approx(2.0)
        assert parse_prior("gamma(2, 3)").mean() == pytest.approx(2.0 / 3.0)

    @pytest.mark.parametrize("text", ["gamma(2)", "lognormal(1, 2)", "exp(x)"])
    def test_invalid(self, text):
        with pytest.raises(DomainError):
            parse_prior(text)

    def test_names_and_box(self):
        prior = PriorSpec(priors=[parse_prior("exp(1)")] * 2, theta_prior=GammaPrior(shape=2, rate=2))
        assert prior.names == ["d0", "d1", "theta"]
        lo, hi = prior.box()[0]
        assert lo == pytest.approx(-math.log(1 - 0.0005))
        assert hi == pytest.approx(-math.log(0.0005))

    def test_empirical_family(self):
        with pytest.raises(UnsupportedForEmpirical):
            SeverityFamily.from_distribution(Empirical(samples=(1.0, 2.0)))


class TestLikelihood:
    """Mixed atom/density likelihood of ceded values."""

    def test_layer_terms(self, exp1):
        """Flat [0, 1), band [1, 3), flat at height 2 from 3 on."""
        y = [0.0, 0.5, 2.0]
        expected = math.log(1.0 - math.exp(-1.0)) - 1.5 - 3.0
        assert censored_loglik(y, (1.0, 2.0), exp1) == pytest.approx(expected)

    def test_repeated_values_count(self, exp1):
        single = censored_loglik([0.5], (1.0, 2.0), exp1)
        assert censored_loglik([0.5, 0.5, 0.5], (1.0, 2.0), exp1) == pytest.approx(3 * single)

    def test_impossible_observation(self, exp1):
        with pytest.raises(ImpossibleObservation) as e:
            censored_loglik([5.0], (1.0, 2.0), exp1)
        assert e.value.value == 5.0
        assert censored_loglik([5.0], (1.0, 2.0), exp1, strict=False) == -math.inf

    def test_grid_matches_scalar(self, exp1, family):
        y = [0.0, 0.0, 0.5, 1.2, 2.0]
        points = np.array([[1.0, 2.0], [0.5, 3.0]])
        values = grid_loglik(y, points, family, n_widths=2)
        assert values[0] == pytest.approx(censored_loglik(y, (1.0, 2.0), exp1))
        assert values[1] == pytest.approx(censored_loglik(y, (0.5, 3.0), exp1))

    def test_grid_marks_impossible_points(self, family):
        values = grid_loglik([2.5], np.array([[1.0, 2.0]]), family, n_widths=2)
        assert values[0] == -np.inf

    def test_mass_sums_to_one(self, exp1):
        """Atoms at 0 and 2 plus the band density over (0, 2)."""
        widths = (1.0, 2.0)
        atoms = sum(math.exp(censored_loglik([v], widths, exp1)) for v in (0.0, 2.0))
        band = integrate(lambda v: math.exp(censored_loglik([v], widths, exp1)), 0.0, 2.0)
        assert atoms + band == pytest.approx(1.0, abs=1e-8)

    def test_pinned_value_is_never_a_band_density(self, exp1):
        assert math.isfinite(censored_loglik([0.5], (1.0, 2.0), exp1))
        assert censored_loglik([0.5], (1.0, 2.0), exp1, strict=False, pinned=[0.5]) == -math.inf
        assert censored_loglik([2.0], (1.0, 2.0), exp1, pinned=[2.0]) == pytest.approx(
            censored_loglik([2.0], (1.0, 2.0), exp1)
        )

    def test_grid_matches_scalar_with_pinned_heights(self, exp1, family):
        y = [0.0, 0.4, 0.4, 1.0]
        pinned = pinned_heights(y)
        points = np.array([[0.5, 0.4, 1.0], [0.5, 0.3, 1.0]])
        values = grid_loglik(y, points, family, n_widths=3, pinned=pinned)
        assert values[0] == pytest.approx(
            censored_loglik(y, (0.5, 0.4, 1.0), exp1, pinned=pinned)
        )
        assert values[1] == -np.inf
        assert censored_loglik(y, (0.5, 0.3, 1.0), exp1, strict=False, pinned=pinned) == -math.inf


class TestPinnedHeights:
    """Ceded values that can only sit on a flat."""

    def test_ties(self):
        assert pinned_heights([0.0, 0.0, 0.3, 0.3, 0.5, 0.7]) == (0.3,)

    def test_known_heights_need_an_observation(self):
        assert pinned_heights([0.0, 0.5, 0.7], atom_heights=[0.0, 0.5]) == (0.5,)
        assert pinned_heights([0.2, 0.7], atom_heights=[0.5]) == ()

    def test_grid_lands_on_flat_height(self, exp1, family):
        contract = alternating_contract((0.3, 0.4, 0.2))
        y = contract.ceded(exp1.sample(2000, seed=3))
        prior = PriorSpec(priors=[ExponentialPrior(mean=1)] * 3)
        estimate = grid_posterior(
            y,
            prior,
            family,
            grid_points=24,
            atom_heights=[atom.height for atom in contract.atoms()],
        )
        assert estimate.means[1] == pytest.approx(0.4, abs=1e-9)
        assert estimate.variances[1] < 1e-12
        assert estimate.diagnostics["pinned_heights"] >= 1.0
        assert estimate.means[0] == pytest.approx(0.3, abs=0.05)


class TestPosterior:
    """Grid and Metropolis posterior means."""

    @pytest.fixture
    def prior(self):
        return PriorSpec(priors=[ExponentialPrior(mean=1)])

    def test_no_data_returns_prior(self, prior, family):
        estimate = grid_posterior([], prior, family)
        assert estimate.means[0] == pytest.approx(1.0, rel=0.05)
        assert estimate.method == PosteriorMethod.GRID

    def test_recovers_deductible(self, prior, family, censored_claims):
        estimate = grid_posterior(censored_claims, prior, family)
        assert estimate.means[0] == pytest.approx(0.5, abs=0.1)
        assert estimate.standard_deviations[0] < 0.1
        assert 0.99 < estimate.diagnostics["grid_mass"] <= 1.0 + 1e-9

    def test_metropolis_agrees_with_grid(self, prior, family, censored_claims):
        y = censored_claims[:50]
        grid = grid_posterior(y, prior, family)
        chain = metropolis_posterior(y, prior, family, seed=5, samples=1500, burn_in=500)
        assert chain.means[0] == pytest.approx(grid.means[0], abs=0.15)
        assert 0.0 < chain.diagnostics["acceptance_rate"] < 1.0

    def test_metropolis_needs_seed(self, prior, family):
        with pytest.raises(DomainError):
            metropolis_posterior([0.0], prior, family, seed=None)

    def test_theta_prior_must_match_family(self, prior, exp1):
        free = SeverityFamily.from_distribution(exp1, free="mean")
        with pytest.raises(DomainError):
            posterior_mean([0.0], prior, free)


class TestIteration:
    """Re-censoring rounds and repetitions."""

    @pytest.fixture
    def prior(self):
        return PriorSpec(priors=[ExponentialPrior(mean=1)])

    def test_trace(self, prior, family, exp1):
        claims = exp1.sample(300, seed=8)
        estimate = iterate_estimation(claims, prior, family, init=[0.5], rounds=3)
        assert 1 <= len(estimate.trace) <= 3
        assert estimate.diagnostics["rounds"] == float(len(estimate.trace))
        assert estimate.means == estimate.trace[-1]

    @pytest.mark.parametrize("init, rounds", [([0.5, 0.5], 2), ([-1.0], 2), ([0.5], 0)])
    def test_invalid_arguments(self, prior, family, init, rounds):
        with pytest.raises(DomainError):
            iterate_estimation([1.0, 2.0], prior, family, init=init, rounds=rounds)

    def test_repetitions_are_reproducible(self, prior, family):
        first = run_repetitions(family, prior, n=50, reps=2, seed=4, init=[0.5], rounds=1)
        second = run_repetitions(family, prior, n=50, reps=2, seed=4, init=[0.5], rounds=1)
        assert len(first) == 2
        assert [e.means for e in first] == [e.means for e in second]
        assert first[0].means != first[1].means

    def test_three_width_self_consistency(self, family):
        """Exp(1) claims censored at (0.20, 0.15, 0.02), n=100, 64^3 grid, 20 reps."""
        truth = (0.20, 0.15, 0.02)
        prior = PriorSpec(priors=[ExponentialPrior(mean=1)] * 3)
        estimates = run_repetitions(
            family, prior, n=100, reps=20, seed=2024, init=truth, rounds=1, grid_points=64
        )
        assert len(estimates) == 20
        for j, true_width in enumerate(truth):
            within = [
                abs(e.means[j] - true_width) <= 2.0 * math.sqrt(e.variances[j]) + 1e-9
                for e in estimates
            ]
            assert sum(within) >= 18, f"width {j}: {sum(within)} of 20 within 2 sd"
            assert math.isfinite(float(np.std([e.means[j] for e in estimates], ddof=1)))

        pinned = [e for e in estimates if e.diagnostics["pinned_heights"] > 0]
        assert len(pinned) >= 10
        assert all(e.means[1] == pytest.approx(0.15, abs=1e-9) for e in pinned)
