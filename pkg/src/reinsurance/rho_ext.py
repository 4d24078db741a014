"""Multi-layer contracts that keep the risk measure of an optimal contract.

Given an optimal contract f and cut points, the preserving extension g
follows f up to M_1, then alternates slope-1 runs and flats whose ends
M*_i are solved from ``f(M*_i) = g(M_i)``. Since g >= f the insurer keeps
no more than under f. The convex extension inserts slope-1 runs on cut
pairs and returns to f once f catches up, and reports the band
``(0, a_min / (a_min + a_max))`` of admissible weights.

Risk measures are evaluated on samples only; CTE and VaR come built in and
any other translative functional can be plugged in as a callback.
"""

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config import config
from src.datamodel.reports import VerificationReport
from src.engine.monte_carlo import batch_standard_error, tail_expectation, value_at_risk
from src.engine.numerics import find_root, golden_section
from src.exceptions import (
    DomainError,
    ExtensionInfeasible,
    NoRootError,
    OmegaOutOfBound,
)
from src.reinsurance.contracts import Contract
from src.reinsurance.distributions import ClaimDistribution

logger = logging.getLogger(__name__)

EXCURSION_GRID_POINTS = 4096
MAX_BRACKET_DOUBLINGS = 200
PASS_Z = 3.0


class ShiftSolve(BaseModel):
    """Cut points M_i and the solved companions M*_i of an extension."""

    model_config = ConfigDict(frozen=True)

    base: Contract
    cuts: tuple[float, ...]
    companions: tuple[float, ...]

    def residuals(self, levels: Sequence[float]) -> list[float]:
        return [
            abs(float(self.base(point)) - level)
            for point, level in zip(self.companions, levels)
        ]


def _catch_up(f: Contract, start: float, level: float) -> float:
    """Smallest-bracket root of f(x) = level on [start, inf)."""
    if float(f(start)) >= level:
        return start
    if f.max_ceded < level:
        raise ExtensionInfeasible(
            f"The base contract never reaches {level:.6g} (its maximum is {f.max_ceded:.6g})"
        )
    hi, step = start, max(1.0, level)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        hi += step
        if float(f(hi)) >= level:
            break
        step *= 2.0
    else:
        raise ExtensionInfeasible(f"Could not bracket f(x) = {level:.6g} above {start:.6g}")
    try:
        return find_root(lambda x: float(f(x)) - level, start, hi)
    except NoRootError as e:
        raise ExtensionInfeasible(e.detail) from e


def _check_cuts(cuts: Sequence[float]) -> tuple[float, ...]:
    cuts = tuple(float(c) for c in cuts)
    if any(not math.isfinite(c) or c <= 0 for c in cuts):
        raise DomainError(f"Cut points must be finite and positive: {cuts}")
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise DomainError(f"Cut points must be increasing: {cuts}")
    return cuts


def _head(f: Contract, until: float) -> tuple[list[float], list[float]]:
    """f's pieces restricted to [0, until)."""
    points, slopes = [], []
    for point, slope in zip(f.breakpoints, f.slopes):
        if point < until:
            points.append(point)
            slopes.append(slope)
    return points, slopes


def solve_preserving(f: Contract, cuts: Sequence[float]) -> ShiftSolve:
    """Companion points with M*_1 = M_1 and f(M*_i) = M_i - M*_{i-1} + f(M*_{i-1})."""
    cuts = _check_cuts(cuts)
    if not cuts:
        return ShiftSolve(base=f, cuts=(), companions=())
    companions = [cuts[0]]
    for i, cut in enumerate(cuts[1:], start=2):
        previous = companions[-1]
        if cut <= previous:
            raise ExtensionInfeasible(
                f"M_{i}={cut:.6g} must exceed the previous companion M*_{i - 1}={previous:.6g}"
            )
        level = cut - previous + float(f(previous))
        companions.append(_catch_up(f, cut, level))
    return ShiftSolve(base=f, cuts=cuts, companions=tuple(companions))


def build_preserving_extension(f: Contract, cuts: Sequence[float]) -> Contract:
    """f on [0, M_1), then slope 1 with a flat on every [M_i, M*_i)."""
    solved = solve_preserving(f, cuts)
    if not solved.cuts:
        return f
    points, slopes = _head(f, solved.cuts[0])
    points.append(solved.cuts[0])
    slopes.append(1.0)
    for cut, companion in zip(solved.cuts[1:], solved.companions[1:]):
        points.extend([cut, companion])
        slopes.extend([0.0, 1.0])
    logger.debug(f"preserving extension of {f.name}: companions {solved.companions}")
    name = f"{f.name}|" + ";".join(f"{c:g}" for c in solved.cuts)
    return Contract(breakpoints=tuple(points), slopes=tuple(slopes), name=name)


def solve_convex(f: Contract, cuts: Sequence[float]) -> ShiftSolve:
    """Companions M*_2j where f catches up with the slope-1 run on [M_2j-1, M_2j)."""
    cuts = _check_cuts(cuts)
    if not cuts:
        raise ExtensionInfeasible("The convex extension needs at least one cut pair")
    if len(cuts) % 2:
        raise DomainError(f"Cut points come in pairs, got {len(cuts)}")
    companions: list[float] = []
    for j in range(0, len(cuts), 2):
        start, stop = cuts[j], cuts[j + 1]
        if companions and start < companions[-1]:
            raise ExtensionInfeasible(
                f"M_{j + 1}={start:.6g} must not precede M*_{j}={companions[-1]:.6g}"
            )
        level = float(f(start)) + stop - start
        companions.append(_catch_up(f, stop, level))
    return ShiftSolve(base=f, cuts=cuts, companions=tuple(companions))


def excursion_set(solved: ShiftSolve) -> list[tuple[float, float]]:
    """A = union of [M_2j-1, M*_2j]."""
    return [
        (solved.cuts[2 * j], companion) for j, companion in enumerate(solved.companions)
    ]


def bounds_on(
    f: Contract,
    intervals: Sequence[tuple[float, float]],
    points: int = EXCURSION_GRID_POINTS,
) -> tuple[float, float]:
    """min and max of |2 f(x) - x| over the intervals, grid plus golden refinement."""
    if not intervals:
        raise ExtensionInfeasible("a_min and a_max are undefined on an empty set")

    def gap(x: float) -> float:
        return abs(2.0 * float(f(x)) - x)

    a_min, a_max = math.inf, -math.inf
    for lo, hi in intervals:
        inner = [b for b in f.breakpoints if lo < b < hi]
        grid = np.unique(np.concatenate((np.linspace(lo, hi, points), inner)))
        values = np.abs(2.0 * np.asarray(f(grid)) - grid)
        for index, sign in ((int(np.argmin(values)), 1.0), (int(np.argmax(values)), -1.0)):
            left = grid[max(index - 1, 0)]
            right = grid[min(index + 1, grid.size - 1)]
            best = float(values[index])
            if right > left:
                _, refined = golden_section(lambda x: sign * gap(x), left, right)
                best = min(best, sign * refined) if sign > 0 else max(best, sign * refined)
            if sign > 0:
                a_min = min(a_min, best)
            else:
                a_max = max(a_max, best)
    return float(a_min), float(a_max)


def excursion_bounds(
    f: Contract, cuts: Sequence[float], points: int = EXCURSION_GRID_POINTS
) -> tuple[float, float]:
    """a_min and a_max of the convex extension of f on ``cuts``."""
    return bounds_on(f, excursion_set(solve_convex(f, cuts)), points)


def build_convex_extension(
    f: Contract, cuts: Sequence[float], omega_star: float
) -> tuple[Contract, float, float]:
    """The alternating extension and (a_min, a_max) for a weight ``omega_star``."""
    solved = solve_convex(f, cuts)
    a_min, a_max = bounds_on(f, excursion_set(solved))
    total = a_min + a_max
    bound = a_min / total if total > 0 else 0.0
    if not 0.0 < omega_star < bound:
        raise OmegaOutOfBound(
            f"omega*={omega_star:g} must lie in (0, {bound:.6g})", a_min=a_min, a_max=a_max
        )

    points, slopes = _head(f, solved.cuts[0])
    for j, companion in enumerate(solved.companions):
        start, stop = solved.cuts[2 * j], solved.cuts[2 * j + 1]
        points.extend([start, stop])
        slopes.extend([1.0, 0.0])
        following = solved.cuts[2 * j + 2] if 2 * j + 2 < len(solved.cuts) else math.inf
        # back on f between M*_2j and the next pair
        for point, slope in zip(f.breakpoints, f.slopes):
            if companion < point < following:
                points.append(point)
                slopes.append(slope)
        points.append(companion)
        slopes.append(float(f.slopes[np.searchsorted(f.breakpoints, companion, side="right") - 1]))
    ordered = sorted(zip(points, slopes), key=lambda item: item[0])
    g = Contract(
        breakpoints=tuple(p for p, _ in ordered),
        slopes=tuple(s for _, s in ordered),
        name=f"{f.name}|convex:" + ";".join(f"{c:g}" for c in solved.cuts),
    )
    logger.info(f"convex extension of {f.name}: a_min={a_min:.6g} a_max={a_max:.6g}")
    return g, a_min, a_max


class RiskMeasure(BaseModel):
    """A risk functional estimated from a sample of the total loss."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    label: str
    params: dict[str, float] = Field(default_factory=dict)
    estimate: Callable[[np.ndarray], float]

    def __call__(self, samples: np.ndarray) -> float:
        return float(self.estimate(np.asarray(samples, dtype=float)))


def cte_measure(alpha: float) -> RiskMeasure:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return RiskMeasure(
        label=f"cte:{alpha:g}",
        params={"alpha": alpha},
        estimate=lambda samples: tail_expectation(samples, alpha).value,
    )


def var_measure(alpha: float) -> RiskMeasure:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return RiskMeasure(
        label=f"var:{alpha:g}",
        params={"alpha": alpha},
        estimate=lambda samples: value_at_risk(samples, alpha),
    )


def parse_risk_measure(literal: str) -> RiskMeasure:
    """``cte:0.1`` or ``var:0.05``."""
    name, _, value = literal.strip().partition(":")
    builders = {"cte": cte_measure, "var": var_measure}
    if name.lower() not in builders:
        raise DomainError(f"Unknown risk measure '{literal}', expected cte:<alpha> or var:<alpha>")
    try:
        alpha = float(value) if value else config.experiment.alpha
    except ValueError as e:
        raise DomainError(f"Cannot parse risk measure '{literal}': {e}") from e
    return builders[name.lower()](alpha)


def check_translativity(
    rho: RiskMeasure, samples: np.ndarray, shift: float = 1.0, tol: float = 1e-9
) -> bool:
    """Spot-check rho(T + c) = rho(T) + c on a sample."""
    samples = np.asarray(samples, dtype=float)
    base = rho(samples)
    shifted = rho(samples + shift)
    return abs(shifted - base - shift) <= tol * max(1.0, abs(base), abs(shift))


def mc_verify_rho(
    f: Contract,
    g: Contract,
    dist: ClaimDistribution,
    rho: RiskMeasure,
    premium: float = 0.0,
    n: int = config.monte_carlo.n_samples,
    seed: Optional[int] = config.experiment.seed,
    premium_g: Optional[float] = None,
    batches: int = config.monte_carlo.batches,
    z: float = PASS_Z,
) -> VerificationReport:
    """Compare rho(X - f(X) + premium) with rho(X - g(X) + premium) on one sample.

    PASS iff the difference is within ``z`` paired standard errors.
    """
    if seed is None:
        raise DomainError("Monte-Carlo verification needs a seed")
    samples = dist.sample(n, seed)
    premium_g = premium if premium_g is None else premium_g
    total_f = np.asarray(f.retained(samples)) + premium
    total_g = np.asarray(g.retained(samples)) + premium_g
    value_f, value_g = rho(total_f), rho(total_g)
    diff = value_g - value_f
    standard_error = batch_standard_error(total_g, total_f, rho, batches=batches)
    passed = abs(diff) <= z * standard_error
    logger.info(
        f"{rho.label} on {dist.label}: f={value_f:.6g} g={value_g:.6g} "
        f"diff={diff:.3g} se={standard_error:.3g} -> {'PASS' if passed else 'FAIL'}"
    )
    return VerificationReport(
        rho=rho.label,
        value_f=value_f,
        value_g=value_g,
        diff=diff,
        standard_error=standard_error,
        passed=passed,
        translative=check_translativity(rho, total_f),
    )
