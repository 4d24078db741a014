import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from src.exceptions import ConfigError, DomainError, LayerOrderError
from src.reinsurance.contracts import (
    Contract,
    LadderParams,
    alternating_contract,
    atom_masses,
    build_ladder,
    ceded_cdf,
    extend_one_layer,
    is_feasible,
    ladder_cdf,
    layer,
    parse_contract,
    proportional,
    stop_loss,
)
from src.reinsurance.distributions import Exponential, Weibull

D = 23.0259
M1, M2 = 24.4258, 48.4516


class TestContract:
    """Construction and evaluation of piecewise-linear contracts."""

    def test_stop_loss(self):
        contract = stop_loss(10.0)
        assert contract.ceded(5.0) == 0.0
        assert contract.ceded(15.0) == pytest.approx(5.0)
        assert contract.retained(15.0) == pytest.approx(10.0)

    def test_proportional(self):
        contract = proportional(0.8)
        assert contract(10.0) == pytest.approx(8.0)
        assert contract.max_ceded == math.inf

    def test_layer_is_capped(self):
        contract = layer(5.0, 3.0)
        np.testing.assert_allclose(contract.ceded(np.array([4.0, 6.0, 100.0])), [0.0, 1.0, 3.0])
        assert contract.max_ceded == pytest.approx(3.0)

    def test_canonical_form_merges_equal_slopes(self):
        contract = Contract(breakpoints=(0.0, 1.0, 2.0), slopes=(1.0, 1.0, 0.0))
        assert contract.breakpoints == (0.0, 2.0)
        assert contract.slopes == (1.0, 0.0)

    def test_zero_widths_merge(self):
        contract = alternating_contract((0.0, 5.0))
        assert contract.breakpoints == (0.0, 5.0)
        assert contract.slopes == (1.0, 0.0)

    @pytest.mark.parametrize(
        "points, slopes, error",
        [
            ((1.0,), (1.0,), LayerOrderError),
            ((0.0, 2.0, 1.0), (0.0, 1.0, 0.0), LayerOrderError),
            ((0.0,), (1.5,), DomainError),
            ((0.0, 1.0), (0.3, 0.6), DomainError),
            ((0.0, 1.0), (0.0,), DomainError),
        ],
    )
    def test_invalid(self, points, slopes, error):
        with pytest.raises(error):
            Contract(breakpoints=points, slopes=slopes)

    def test_text_round_trip_keeps_pieces(self):
        contract = layer(5.0, 3.0)
        assert Contract.from_text(contract.to_text()).breakpoints == contract.breakpoints

    def test_from_text_reports_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            Contract.from_text("(0, 0)\nnot a pair\n")

    def test_inverse_upper(self):
        contract = layer(5.0, 3.0)
        assert contract.inverse_upper(0.0) == pytest.approx(5.0)
        assert contract.inverse_upper(2.0) == pytest.approx(7.0)
        assert contract.inverse_upper(3.0) == math.inf
        assert contract.inverse_upper(-1.0) == -math.inf

    @given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=7), st.floats(0.0, 500.0))
    def test_both_parts_nondecreasing(self, widths, x):
        contract = alternating_contract(widths)
        eps = 0.5
        assert contract.ceded(x + eps) >= contract.ceded(x) - 1e-9
        assert contract.retained(x + eps) >= contract.retained(x) - 1e-9


class TestLadder:
    """Tests for the ladder family."""

    @pytest.fixture
    def params(self):
        return LadderParams(deductible=D, cuts=(M1, M2))

    def test_widths(self, params):
        widths = params.widths()
        assert widths[0] == D
        assert widths[1] == pytest.approx(M1 - D)
        assert widths[3] == pytest.approx(M2 - M1 - D)
        assert len(widths) == 5

    def test_ceded_inside_first_flat(self, params):
        assert build_ladder(params).ceded(30.0) == pytest.approx(1.3999, abs=1e-4)

    def test_companion_points(self, params):
        assert params.companion_points() == pytest.approx((D, M1, M1 + D, M2, M2 + D))

    def test_from_gaps(self, params):
        rebuilt = LadderParams.from_gaps(D, params.gaps())
        assert rebuilt.cuts == pytest.approx(params.cuts)

    def test_cut_order(self):
        with pytest.raises(LayerOrderError):
            LadderParams(deductible=10.0, cuts=(5.0,))
        with pytest.raises(LayerOrderError):
            LadderParams(deductible=10.0, cuts=(12.0, 20.0))

    def test_extend_one_layer(self):
        f = extend_one_layer(stop_loss(5.0), stop_loss(5.0), 12.0)
        assert f.ceded(14.0) == pytest.approx(7.0)
        assert f.ceded(20.0) == pytest.approx(10.0)
        with pytest.raises(LayerOrderError):
            extend_one_layer(f, stop_loss(5.0), 1.0)

    def test_ladder_is_iterated_extension(self, params):
        extended = stop_loss(D)
        for cut in params.cuts:
            extended = extend_one_layer(extended, stop_loss(D), cut)
        ladder = build_ladder(params)
        x = np.linspace(0.0, 150.0, 3001)
        np.testing.assert_allclose(extended.ceded(x), ladder.ceded(x), atol=1e-9)
        assert extended.breakpoints == pytest.approx(ladder.breakpoints)
        assert extended.slopes == ladder.slopes

    def test_ladder_cdf_matches_generic(self, params):
        dist = Exponential(mean=10)
        for t in (0.0, 0.7, 1.3999, 3.0, 40.0):
            assert ladder_cdf(params, dist, t) == pytest.approx(ceded_cdf(params, dist, t))

    @settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
    def test_ceded_cdf_is_a_cdf(self, params, t, h):
        dist = Exponential(mean=10)
        lower = ceded_cdf(params, dist, t)
        upper = ceded_cdf(params, dist, t + h)
        assert 0.0 <= lower <= upper + 1e-12 <= 1.0 + 1e-12

    def test_atom_masses_sum_below_one(self, params):
        masses = atom_masses(build_ladder(params), Exponential(mean=10))
        assert masses[0] == pytest.approx((0.0, 0.9), abs=1e-5)
        assert sum(mass for _, mass in masses) < 1.0

    @pytest.mark.parametrize("dist", [Exponential(mean=10), Weibull(scale=20, shape=2)])
    def test_atoms_and_bands_carry_all_mass(self, params, dist):
        contract = build_ladder(params)
        atoms = sum(mass for _, mass in atom_masses(contract, dist))
        bands = sum(
            (1.0 if math.isinf(piece.hi) else float(dist.cdf(piece.hi))) - float(dist.cdf(piece.lo))
            for piece in contract.pieces()
            if piece.slope > 0.0
        )
        assert atoms + bands == pytest.approx(1.0, abs=1e-12)


class TestFeasibility:
    """Tests for the admissible-contract check."""

    def test_ladder_is_feasible(self):
        params = LadderParams(deductible=D, cuts=(M1, M2))
        assert is_feasible(build_ladder(params), D).feasible

    def test_lower_deductible_is_not(self):
        report = is_feasible(stop_loss(10.0), D)
        assert not report.feasible
        assert report.first_violation > 10.0

    def test_proportional_is_not(self):
        assert not is_feasible(proportional(0.5), D, dist=Exponential(mean=10)).feasible


class TestParseContract:
    """Tests for contract literals."""

    def test_literals(self):
        assert parse_contract("stoploss:5").ceded(7.0) == pytest.approx(2.0)
        assert parse_contract("prop:0.8").ceded(10.0) == pytest.approx(8.0)
        assert parse_contract("layer:5;3").max_ceded == pytest.approx(3.0)
        assert parse_contract(f"ladder:{D};{M1};{M2}").ceded(30.0) == pytest.approx(1.3999, abs=1e-4)

    def test_file(self, tmp_path):
        path = tmp_path / "custom.txt"
        path.write_text("(0, 0)\n(5, 1)\n")
        contract = parse_contract(str(path))
        assert contract.name == "custom"
        assert contract.ceded(6.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("literal", ["stoploss:x", "nothing:1", "layer:1"])
    def test_invalid(self, literal):
        with pytest.raises(ConfigError):
            parse_contract(literal)
