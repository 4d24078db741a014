"""Risk functionals of a (severity, contract) pair.

Expectations of smooth transforms are computed by integration by parts,
E[phi(g(X))] = phi(0) + sum over pieces of the integral of
phi'(g(x)) g'(x) S(x), where g is the ceded or the retained part of the
contract. VaR and CTE of either part are exact for continuous severities
because both parts are nondecreasing in x.
"""

import logging
import math
from typing import Callable, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel

from src.config import config
from src.consts import EstimationMethod, PremiumRule
from src.datamodel.reports import EquivalenceReport, ProportionalOptimum, RiskReport
from src.engine.monte_carlo import TailEstimate, split_streams, tail_expectation
from src.engine.numerics import golden_section, integrate
from src.exceptions import DomainError
from src.reinsurance.contracts import (
    Contract,
    LadderParams,
    as_contract,
    atom_masses,
    stop_loss,
)
from src.reinsurance.distributions import ClaimDistribution, Exponential, Weibull

logger = logging.getLogger(__name__)

Part = Literal["ceded", "retained"]


class Moments(BaseModel):
    e_ceded: float
    var_ceded: float
    e_retained: float
    var_retained: float


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _check_omega(omega: float) -> None:
    if not 0.0 <= omega <= 1.0:
        raise DomainError(f"omega must lie in [0, 1], got {omega}")


def _part_pieces(contract: Contract, part: Part):
    """(lo, hi, slope, value at lo) of the ceded or retained function."""
    for piece in contract.pieces():
        if part == "ceded":
            yield piece.lo, piece.hi, piece.slope, piece.start
        else:
            yield piece.lo, piece.hi, 1.0 - piece.slope, piece.lo - piece.start


def _part_values(contract: Contract, x: np.ndarray, part: Part) -> np.ndarray:
    values = contract.ceded(x) if part == "ceded" else contract.retained(x)
    return np.asarray(values, dtype=float)


def _survival_integral(
    dist: ClaimDistribution, lo: float, hi: float, weight: Callable[[float], float]
) -> float:
    upper = min(hi, dist.upper_limit())
    if upper <= lo:
        return 0.0
    return integrate(lambda x: weight(x) * float(dist.survival(x)), lo, upper)


def transform_expectation(
    dist: ClaimDistribution,
    contract: Contract,
    phi: Callable[[np.ndarray], np.ndarray],
    dphi: Callable[[float], float],
    part: Part = "ceded",
) -> float:
    """E[phi(g(X))] for g the ceded or the retained part of ``contract``."""
    if not dist.is_continuous:
        return float(np.mean(phi(_part_values(contract, dist.sorted_samples, part))))
    total = float(phi(np.asarray(0.0)))
    for lo, hi, slope, start in _part_pieces(contract, part):
        if slope == 0.0:
            continue
        total += slope * _survival_integral(
            dist, lo, hi, lambda x: dphi(start + slope * (x - lo))
        )
    return total


def expected_ceded(
    dist: ClaimDistribution, contract: Union[Contract, LadderParams]
) -> float:
    """Sum over pieces of slope times the tail integral of the piece."""
    contract = as_contract(contract)
    if not dist.is_continuous:
        return float(np.mean(contract.ceded(dist.sorted_samples)))
    return float(
        sum(
            piece.slope * dist.tail_integral(piece.lo, piece.hi)
            for piece in contract.pieces()
            if piece.slope > 0.0
        )
    )


def expected_retained(
    dist: ClaimDistribution, contract: Union[Contract, LadderParams]
) -> float:
    return dist.mean() - expected_ceded(dist, contract)


def moments(
    dist: ClaimDistribution, contract: Union[Contract, LadderParams]
) -> Moments:
    contract = as_contract(contract)
    e_ceded = expected_ceded(dist, contract)
    e_retained = dist.mean() - e_ceded
    square, twice = (lambda v: v**2), (lambda v: 2.0 * v)
    e2_ceded = transform_expectation(dist, contract, square, twice, "ceded")
    e2_retained = transform_expectation(dist, contract, square, twice, "retained")
    return Moments(
        e_ceded=e_ceded,
        var_ceded=max(e2_ceded - e_ceded**2, 0.0),
        e_retained=e_retained,
        var_retained=max(e2_retained - e_retained**2, 0.0),
    )


def _exponential_piece(mean: float, lo: float, hi: float, rate: float) -> float:
    """Integral of exp(rate * (x - lo)) * exp(-x / mean) over [lo, hi]."""
    kappa = 1.0 / mean - rate
    width = hi - lo
    if math.isinf(width):
        if kappa <= 0.0:
            raise DomainError(
                f"Exponential moment diverges: rate {rate:g} >= 1/mean {1.0 / mean:g}"
            )
        return math.exp(-lo / mean) / kappa
    if abs(kappa * width) < 1e-12:
        return math.exp(-lo / mean) * width
    return math.exp(-lo / mean) * (-math.expm1(-kappa * width)) / kappa


def exponential_moment(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    t: float,
    part: Part = "ceded",
) -> float:
    """E[exp(t * g(X))], closed form per piece for exponential severities."""
    contract = as_contract(contract)
    if not dist.is_continuous:
        return float(
            np.mean(np.exp(t * _part_values(contract, dist.sorted_samples, part)))
        )
    pieces = list(_part_pieces(contract, part))
    lo, hi, slope, _ = pieces[-1]
    if t * slope > 0.0 and isinstance(dist, Weibull) and dist.shape < 1.0:
        raise DomainError("Weibull with shape < 1 has no moment generating function")
    if isinstance(dist, Exponential):
        total = 1.0
        for lo, hi, slope, start in pieces:
            if slope == 0.0:
                continue
            total += (
                t
                * slope
                * math.exp(t * start)
                * _exponential_piece(dist.mean_, lo, hi, t * slope)
            )
        return total
    return transform_expectation(
        dist,
        contract,
        lambda v: np.exp(t * v),
        lambda v: t * math.exp(t * v),
        part,
    )


def mgf_ceded(
    params: Union[Contract, LadderParams], dist: ClaimDistribution, t: float
) -> float:
    """Atoms plus shifted bands: sum of P(atom) e^{tH} and the band integrals.

    The sum runs over the pieces of the contract, so any number of layers is
    handled the same way.

    On the slope-1 band starting at ``lo`` with ceded value ``v`` the band
    term is the integral of e^{t(v + x - lo)} f(x); exponential severities use
    the closed form, others quadrature.
    """
    contract = as_contract(params)
    if not contract.is_unit_slope() or not dist.is_continuous:
        return exponential_moment(dist, contract, t, "ceded")
    total = sum(mass * math.exp(t * height) for height, mass in atom_masses(contract, dist))
    for piece in contract.pieces():
        if piece.slope == 0.0:
            continue
        lo, hi, start = piece.lo, piece.hi, piece.start
        if isinstance(dist, Exponential):
            band = _exponential_piece(dist.mean_, lo, hi, t) / dist.mean_
        else:
            if math.isinf(hi) and t > 0.0 and dist.shape < 1.0:
                raise DomainError(
                    "Weibull with shape < 1 has no moment generating function"
                )
            upper = min(hi, dist.upper_limit())
            band = integrate(
                lambda x: math.exp(t * (x - lo)) * float(dist.pdf(x)), lo, upper
            )
        total += math.exp(t * start) * band
    return float(total)


def mgf_retained(
    params: Union[Contract, LadderParams], dist: ClaimDistribution, t: float
) -> float:
    return exponential_moment(dist, as_contract(params), t, "retained")


def mc_mgf(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    t: float,
    n: int,
    seed: int,
    part: Part = "ceded",
) -> tuple[float, float]:
    """Monte-Carlo E[exp(t g(X))] and its standard error."""
    samples = _draw(dist, n, seed)
    values = np.exp(t * _part_values(as_contract(contract), samples, part))
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def ladder_expectation(
    params: Union[Contract, LadderParams], dist: ClaimDistribution
) -> float:
    """E[h(X)] from atom heights and band integrals.

    A band [lo, hi) with ceded value v at lo contributes
    v (F(hi) - F(lo)) - (hi - lo) S(hi) + the tail integral over [lo, hi].
    """
    contract = as_contract(params)
    if not contract.is_unit_slope():
        raise DomainError("The atom/band form needs slopes in {0, 1}")
    total = sum(height * mass for height, mass in atom_masses(contract, dist))
    for piece in contract.pieces():
        if piece.slope == 0.0:
            continue
        lo, hi = piece.lo, piece.hi
        s_hi = 0.0 if math.isinf(hi) else float(dist.survival(hi))
        mass = float(dist.survival(lo)) - s_hi
        boundary = 0.0 if math.isinf(hi) else (hi - lo) * s_hi
        total += piece.start * mass - boundary + dist.tail_integral(lo, hi)
    return float(total)


def _analytic_tail(
    dist: ClaimDistribution, contract: Contract, alpha: float, part: Part
) -> TailEstimate:
    if not dist.is_continuous:
        return tail_expectation(_part_values(contract, dist.sorted_samples, part), alpha)
    q = float(dist.quantile(1.0 - alpha))
    var_level = float(_part_values(contract, np.asarray(q), part))
    excess = sum(
        slope * dist.tail_integral(max(lo, q), hi)
        for lo, hi, slope, _ in _part_pieces(contract, part)
        if slope > 0.0 and hi > q
    )
    return TailEstimate(
        value=var_level + excess / alpha,
        standard_error=0.0,
        var_level=var_level,
        degenerate=excess <= 0.0,
    )


def _draw(dist: ClaimDistribution, n: int, seed: Optional[int]) -> np.ndarray:
    if seed is None:
        raise DomainError("Monte-Carlo estimates need an explicit seed")
    if n is None or n < 2:
        raise DomainError(f"Monte-Carlo sample size must be at least 2, got {n}")
    return split_streams(dist.draw, n, seed, config.monte_carlo.workers)


def estimate_cte(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    alpha: float,
    part: Part = "retained",
    method: EstimationMethod = EstimationMethod.ANALYTIC,
    n: Optional[int] = None,
    seed: Optional[int] = None,
    samples: Optional[np.ndarray] = None,
) -> TailEstimate:
    """CTE of the retained or ceded loss, without premium."""
    _check_alpha(alpha)
    contract = as_contract(contract)
    if method == EstimationMethod.ANALYTIC and samples is None:
        estimate = _analytic_tail(dist, contract, alpha, part)
    else:
        if samples is None:
            samples = _draw(dist, n, seed)
            logger.debug(f"CTE by Monte Carlo: n={n} seed={seed} part={part}")
        estimate = tail_expectation(_part_values(contract, samples, part), alpha)
    if estimate.degenerate:
        logger.debug(f"degenerate tail for {contract.name}: CTE equals VaR")
    return estimate


def value_at_risk_total(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    alpha: float,
    premium: float = 0.0,
) -> float:
    return estimate_cte(dist, contract, alpha, "retained").var_level + premium


def cte_total(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    alpha: float,
    premium: float = 0.0,
    method: EstimationMethod = EstimationMethod.ANALYTIC,
    n: Optional[int] = None,
    seed: Optional[int] = None,
) -> float:
    """CTE of T = retained(X) + premium, with the atom correction."""
    estimate = estimate_cte(dist, contract, alpha, "retained", method, n, seed)
    return estimate.value + premium


def cte_ceded(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    alpha: float,
    method: EstimationMethod = EstimationMethod.ANALYTIC,
    n: Optional[int] = None,
    seed: Optional[int] = None,
) -> float:
    return estimate_cte(dist, contract, alpha, "ceded", method, n, seed).value


def premium_for(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    alpha: float,
    rule: PremiumRule,
    fixed: Optional[float] = None,
) -> float:
    """``fixed`` returns the input constant; ``loaded`` is E[h(X)] / alpha."""
    if PremiumRule(rule) == PremiumRule.LOADED:
        return expected_ceded(dist, contract) / alpha
    if fixed is None:
        raise DomainError("The fixed premium rule needs a premium value")
    return fixed


def cte_equivalence(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    alpha: float,
    rule: PremiumRule = PremiumRule.LOADED,
    n: int = config.monte_carlo.n_samples,
    seed: Optional[int] = None,
    premium: Optional[float] = None,
) -> EquivalenceReport:
    """Compare the CTE of total risk under ``contract`` with the stop-loss at d_alpha.

    Both contracts see the same draws of X. Under the ``fixed`` rule both pay
    ``premium`` (default: the stop-loss premium at d_alpha).
    """
    _check_alpha(alpha)
    contract = as_contract(contract)
    d_alpha = float(dist.quantile(1.0 - alpha))
    reference = stop_loss(d_alpha)
    if PremiumRule(rule) == PremiumRule.FIXED and premium is None:
        premium = dist.stop_loss_premium(d_alpha)
    pi_f = premium_for(dist, reference, alpha, rule, premium)
    pi_g = premium_for(dist, contract, alpha, rule, premium)

    samples = _draw(dist, n, seed)
    t_f = _part_values(reference, samples, "retained") + pi_f
    t_g = _part_values(contract, samples, "retained") + pi_g
    est_f, est_g = tail_expectation(t_f, alpha), tail_expectation(t_g, alpha)
    scores_f = est_f.var_level + np.maximum(t_f - est_f.var_level, 0.0) / alpha
    scores_g = est_g.var_level + np.maximum(t_g - est_g.var_level, 0.0) / alpha
    standard_error = float(np.std(scores_g - scores_f, ddof=1) / math.sqrt(n))

    analytic_diff = cte_total(dist, contract, alpha, pi_g) - cte_total(
        dist, reference, alpha, pi_f
    )
    diff = est_g.value - est_f.value
    return EquivalenceReport(
        premium_rule=PremiumRule(rule).value,
        cte_stop_loss=est_f.value,
        cte_contract=est_g.value,
        diff=diff,
        standard_error=standard_error,
        analytic_diff=analytic_diff,
        passed=abs(diff) <= 3.0 * standard_error + 1e-12,
    )


def q_combination(
    dist: ClaimDistribution, contract: Union[Contract, LadderParams], omega: float
) -> float:
    """omega Var(h(X)) + (1 - omega) Var(X - h(X))."""
    _check_omega(omega)
    m = moments(dist, contract)
    return omega * m.var_ceded + (1.0 - omega) * m.var_retained


def proportional_q(c: float, omega: float, variance: float = 1.0) -> float:
    return (omega * c**2 + (1.0 - omega) * (1.0 - c) ** 2) * variance


def optimal_proportional_q(omega: float, variance: float = 1.0) -> ProportionalOptimum:
    """Golden-section argmin of the proportional objective over c in [0, 1]."""
    _check_omega(omega)
    c_star, q_star = golden_section(
        lambda c: proportional_q(c, omega, variance), 0.0, 1.0, tol=1e-12
    )
    reciprocal_c = 1.0 / (1.0 + omega)
    optimum = ProportionalOptimum(
        omega=omega,
        c_star=c_star,
        q_star=q_star,
        closed_form_c=1.0 - omega,
        reciprocal_c=reciprocal_c,
        reciprocal_q=proportional_q(reciprocal_c, omega, variance),
    )
    if abs(reciprocal_c - c_star) > 1e-6:
        logger.info(
            f"proportional optimum at omega={omega:g}: c*={c_star:.6f} "
            f"(1/(1+omega)={reciprocal_c:.6f} gives Q={optimum.reciprocal_q:.6g} "
            f"against {q_star:.6g})"
        )
    return optimum


def utility_combination(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    omega: float,
    beta: float,
) -> float:
    """omega E[exp(-beta h(X))] + (1 - omega) E[exp(-beta (X - h(X)))]."""
    _check_omega(omega)
    if beta <= 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    contract = as_contract(contract)
    ceded = exponential_moment(dist, contract, -beta, "ceded")
    retained = exponential_moment(dist, contract, -beta, "retained")
    return omega * ceded + (1.0 - omega) * retained


def risk_report(
    dist: ClaimDistribution,
    contract: Union[Contract, LadderParams],
    alpha: float = config.experiment.alpha,
    omega: float = config.experiment.omega,
    beta: float = config.experiment.beta,
    premium: Optional[float] = None,
    contract_id: Optional[str] = None,
    method: EstimationMethod = EstimationMethod.ANALYTIC,
    n: Optional[int] = None,
    seed: Optional[int] = None,
) -> RiskReport:
    """All functionals for one (severity, contract, alpha, omega, beta) tuple.

    The premium defaults to the expectation principle, E[h(X)].
    """
    _check_alpha(alpha)
    contract = as_contract(contract)
    m = moments(dist, contract)
    if premium is None:
        premium = m.e_ceded
    return RiskReport(
        dist=dist.label,
        contract_id=contract_id or contract.name,
        alpha=alpha,
        omega=omega,
        beta=beta,
        premium=premium,
        e_ceded=m.e_ceded,
        var_ceded=m.var_ceded,
        var_retained=m.var_retained,
        var_level=float(dist.quantile(1.0 - alpha)),
        cte_total=cte_total(dist, contract, alpha, premium, method, n, seed),
        cte_ceded=cte_ceded(dist, contract, alpha, method, n, seed),
        q_value=omega * m.var_ceded + (1.0 - omega) * m.var_retained,
        u_value=utility_combination(dist, contract, omega, beta),
    )
