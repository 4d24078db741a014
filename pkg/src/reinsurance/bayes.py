"""Bayesian estimation of ladder widths from ceded claims.

The ceded loss of an alternating contract is a mixed variable: each flat
piece [lo, hi] of X maps to one value (an atom with mass F(hi) - F(lo)) and
each slope-1 band maps X one-to-one onto an interval of ceded values (a
shifted density). Posterior means under squared-error loss come from a
two-pass tensor grid for up to three parameters, and from random-walk
Metropolis in log-parameters beyond that.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special, stats

from src.config import config
from src.consts import DistributionKind, PosteriorMethod
from src.datamodel.reports import PosteriorEstimate
from src.engine.numerics import rng_stream
from src.exceptions import (
    DegenerateDataError,
    DomainError,
    ImpossibleObservation,
    UnsupportedForEmpirical,
)
from src.reinsurance.contracts import (
    Contract,
    LadderParams,
    alternating_contract,
    build_ladder,
)
from src.reinsurance.distributions import ClaimDistribution, Exponential, Weibull

logger = logging.getLogger(__name__)

WIDTH_NAMES = ("d0", "d1", "d2", "d3", "d4", "d5", "d6", "d7")
REFINE_SDS = 6.0
MAX_GRID_DIMS = 3


class Prior(BaseModel, ABC):
    model_config = ConfigDict(frozen=True)

    @abstractmethod
    def _frozen(self): ...

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        return self._frozen().logpdf(x)

    def ppf(self, p: float) -> float:
        return float(self._frozen().ppf(p))

    def mean(self) -> float:
        return float(self._frozen().mean())

    def variance(self) -> float:
        return float(self._frozen().var())


class ExponentialPrior(Prior):
    kind: Literal["exp"] = "exp"
    mean_: float = Field(alias="mean", gt=0)

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    def _frozen(self):
        return stats.expon(scale=self.mean_)


class GammaPrior(Prior):
    kind: Literal["gamma"] = "gamma"
    shape: float = Field(gt=0)
    rate: float = Field(gt=0)

    def _frozen(self):
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)


class PriorSpec(BaseModel):
    """Independent priors on the widths (d0, d1, ...) and optionally on theta."""

    priors: list[Union[ExponentialPrior, GammaPrior]] = Field(min_length=1)
    theta_prior: Optional[Union[ExponentialPrior, GammaPrior]] = None

    @property
    def n_widths(self) -> int:
        return len(self.priors)

    @property
    def names(self) -> list[str]:
        names = list(WIDTH_NAMES[: self.n_widths])
        return names + ["theta"] if self.theta_prior is not None else names

    @property
    def all_priors(self) -> list[Prior]:
        extra = [self.theta_prior] if self.theta_prior is not None else []
        return list(self.priors) + extra

    def log_density(self, points: np.ndarray) -> np.ndarray:
        return sum(
            prior.logpdf(points[:, i]) for i, prior in enumerate(self.all_priors)
        )

    def box(
        self, low: float = config.bayes.prior_box[0], high: float = config.bayes.prior_box[1]
    ) -> list[tuple[float, float]]:
        return [(prior.ppf(low), prior.ppf(high)) for prior in self.all_priors]


def parse_prior(text: str) -> Prior:
    """``exp(1)``, ``exp(mean=1)`` or ``gamma(shape, rate)``."""
    name, _, rest = text.strip().partition("(")
    values = [v.split("=")[-1] for v in rest.rstrip(")").split(",") if v.strip()]
    try:
        numbers = [float(v) for v in values]
        if name.lower() in ("exp", "exponential"):
            return ExponentialPrior(mean=numbers[0])
        if name.lower() == "gamma":
            return GammaPrior(shape=numbers[0], rate=numbers[1])
    except (IndexError, ValueError) as e:
        raise DomainError(f"Cannot parse prior '{text}': {e}") from e
    raise DomainError(f"Unknown prior '{text}'")


class SeverityFamily(BaseModel):
    """Claim severity with every parameter known, or one of them left free."""

    model_config = ConfigDict(frozen=True)

    kind: DistributionKind
    params: dict[str, float]
    free: Optional[str] = None

    @classmethod
    def from_distribution(
        cls, dist: ClaimDistribution, free: Optional[str] = None
    ) -> "SeverityFamily":
        if isinstance(dist, Exponential):
            return cls(kind=dist.kind, params={"mean": dist.mean_}, free=free)
        if isinstance(dist, Weibull):
            return cls(
                kind=dist.kind,
                params={"scale": dist.scale, "shape": dist.shape},
                free=free,
            )
        raise UnsupportedForEmpirical("The censored likelihood needs a density")

    def _values(self, theta: Optional[np.ndarray]) -> dict:
        values = dict(self.params)
        if self.free is not None:
            if theta is None:
                raise DomainError(f"Free parameter '{self.free}' needs a value")
            values[self.free] = theta
        return values

    def _rv(self, theta: Optional[np.ndarray]):
        values = self._values(theta)
        if self.kind == DistributionKind.EXPONENTIAL:
            return stats.expon(scale=values["mean"])
        if self.kind == DistributionKind.WEIBULL:
            return stats.weibull_min(c=values["shape"], scale=values["scale"])
        raise UnsupportedForEmpirical("The censored likelihood needs a density")

    def distribution(self, theta: Optional[float] = None) -> ClaimDistribution:
        values = self._values(theta)
        if self.kind == DistributionKind.EXPONENTIAL:
            return Exponential(mean=float(values["mean"]))
        return Weibull(scale=float(values["scale"]), shape=float(values["shape"]))

    def cdf(self, x: np.ndarray, theta: Optional[np.ndarray] = None) -> np.ndarray:
        return self._rv(theta).cdf(x)

    def sf(self, x: np.ndarray, theta: Optional[np.ndarray] = None) -> np.ndarray:
        return self._rv(theta).sf(x)

    def logpdf(self, x: np.ndarray, theta: Optional[np.ndarray] = None) -> np.ndarray:
        return self._rv(theta).logpdf(x)


def _as_contract(params: Union[Contract, LadderParams, Sequence[float]]) -> Contract:
    if isinstance(params, Contract):
        return params
    if isinstance(params, LadderParams):
        return build_ladder(params)
    return alternating_contract(tuple(params))


def _group(y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    return np.unique(np.asarray(y, dtype=float), return_counts=True)


def _is_pinned(value: float, pinned: Sequence[float], atom_tol: float) -> bool:
    return value > atom_tol and any(abs(value - p) <= atom_tol for p in pinned)


def pinned_heights(
    y: Sequence[float],
    atom_heights: Sequence[float] = (),
    atom_tol: float = config.bayes.atom_tol,
) -> tuple[float, ...]:
    """Positive ceded values that must sit on a flat.

    A value seen more than once cannot come from a slope-1 band, and a value
    equal to a flat height of the censoring contract is that flat.
    """
    values, counts = _group(y)
    tied = [float(v) for v, c in zip(values, counts) if c > 1 and v > atom_tol]
    known = [
        float(h)
        for h in atom_heights
        if h > atom_tol and np.any(np.abs(values - h) <= atom_tol)
    ]
    return tuple(sorted(set(tied + known)))


def censored_loglik(
    y: Sequence[float],
    params: Union[Contract, LadderParams, Sequence[float]],
    dist: ClaimDistribution,
    atom_tol: float = config.bayes.atom_tol,
    strict: bool = True,
    pinned: Sequence[float] = (),
) -> float:
    """Log-likelihood of ceded values ``y`` under ``params`` and severity ``dist``.

    ``params`` is a contract, ladder parameters, or alternating widths.
    Values listed in ``pinned`` are known flat heights: they only count as
    atoms, never as band densities. Observations the contract cannot produce
    raise ImpossibleObservation when ``strict``; otherwise they contribute -inf.
    """
    if not dist.is_continuous:
        raise UnsupportedForEmpirical("The censored likelihood needs a density")
    contract = _as_contract(params)
    atoms = contract.atoms()
    total = 0.0
    for value, count in zip(*_group(y)):
        term = -math.inf
        atom = next((a for a in atoms if abs(value - a.height) <= atom_tol), None)
        if atom is not None:
            upper = 1.0 if math.isinf(atom.hi) else float(dist.cdf(atom.hi))
            mass = upper - float(dist.cdf(atom.lo))
            term = math.log(mass) if mass > 0.0 else -math.inf
        elif -atom_tol <= value < contract.max_ceded and not _is_pinned(value, pinned, atom_tol):
            x = float(contract.inverse_upper(value))
            slope = contract.slopes[
                int(np.searchsorted(contract.breakpoints, x, side="right")) - 1
            ]
            density = float(dist.pdf(x))
            if slope > 0.0 and density > 0.0:
                term = math.log(density) - math.log(slope)
        if term == -math.inf:
            if strict:
                raise ImpossibleObservation(
                    f"Ceded value {value:.6g} cannot arise from {contract.name}",
                    value=float(value),
                )
            return -math.inf
        total += count * term
    return float(total)


def grid_loglik(
    y: Sequence[float],
    points: np.ndarray,
    family: SeverityFamily,
    n_widths: int,
    atom_tol: float = config.bayes.atom_tol,
    pinned: Sequence[float] = (),
) -> np.ndarray:
    """Log-likelihood at every row of ``points`` (widths, then theta if free).

    Piece ``i`` of the alternating contract starts at X = B_i with ceded value
    V_i; even pieces are flats, odd pieces slope-1 bands. ``pinned`` values are
    treated as in ``censored_loglik``.
    """
    points = np.atleast_2d(points)
    widths = points[:, :n_widths]
    theta = points[:, n_widths] if family.free is not None else None
    starts = np.concatenate(
        (np.zeros((len(points), 1)), np.cumsum(widths, axis=1)), axis=1
    )
    odd = (np.arange(n_widths) % 2 == 1).astype(float)
    heights = np.concatenate(
        (np.zeros((len(points), 1)), np.cumsum(widths * odd, axis=1)), axis=1
    )

    atom_terms = []
    for i in range(0, n_widths + 1, 2):
        with np.errstate(divide="ignore"):
            if i < n_widths:
                mass = family.cdf(starts[:, i + 1], theta) - family.cdf(starts[:, i], theta)
            else:
                mass = family.sf(starts[:, i], theta)
            atom_terms.append((i, np.log(np.maximum(mass, 0.0))))

    total = np.zeros(len(points))
    for value, count in zip(*_group(y)):
        term = np.full(len(points), -np.inf)
        for i, log_mass in atom_terms:
            term = np.where(np.abs(value - heights[:, i]) <= atom_tol, log_mass, term)
        if _is_pinned(value, pinned, atom_tol):
            total = total + count * term
            continue
        for i in range(1, n_widths + 1, 2):
            top = heights[:, i] + widths[:, i] if i < n_widths else np.inf
            inside = (value > heights[:, i] + atom_tol) & (value < top - atom_tol)
            if np.any(inside):
                x = np.maximum(starts[:, i] + value - heights[:, i], 0.0)
                term = np.where(inside, family.logpdf(x, theta), term)
        total = total + count * term
    return total


def _midpoints(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    edges = np.linspace(lo, hi, n + 1)
    return 0.5 * (edges[:-1] + edges[1:]), (hi - lo) / n


def _tensor(axes: list[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _pinned_axis_values(pinned: Sequence[float], lo: float, hi: float) -> np.ndarray:
    """Slope-1 widths that put a flat exactly at a pinned height.

    The first odd width reaches a height on its own; later ones reach the gap
    between two pinned heights.
    """
    heights = sorted(pinned)
    values = set(heights)
    values.update(b - a for i, a in enumerate(heights) for b in heights[i + 1 :])
    return np.array([v for v in values if lo <= v <= hi], dtype=float)


def _grid_pass(y, prior, family, box, grid_points, atom_tol, pinned=()):
    axes, cells = zip(*(_midpoints(lo, hi, grid_points) for lo, hi in box))
    axes = list(axes)
    if pinned:
        for i in range(1, prior.n_widths, 2):
            extra = _pinned_axis_values(pinned, *box[i])
            axes[i] = np.unique(np.concatenate((axes[i], extra)))
    points = _tensor(axes)
    log_weights = prior.log_density(points)
    if len(y):
        log_weights = log_weights + grid_loglik(
            y, points, family, prior.n_widths, atom_tol, pinned
        )
    if not np.any(np.isfinite(log_weights)):
        raise DegenerateDataError(
            "The likelihood vanishes at every grid point of the prior box"
        )
    weights = np.exp(log_weights - special.logsumexp(log_weights))
    means = weights @ points
    variances = np.maximum(weights @ points**2 - means**2, 0.0)
    return points, weights, means, variances, cells


def grid_posterior(
    y: Sequence[float],
    prior: PriorSpec,
    family: SeverityFamily,
    grid_points: int = config.bayes.grid_points,
    atom_tol: float = config.bayes.atom_tol,
    atom_heights: Sequence[float] = (),
) -> PosteriorEstimate:
    """Two passes: the prior box, then a box of six posterior sd around the mean.

    Flat heights revealed by the data (see ``pinned_heights``) are added to
    the axes of the slope-1 widths so the grid can reach them.
    """
    pinned = pinned_heights(y, atom_heights, atom_tol)
    box = prior.box()
    points, weights, means, variances, cells = _grid_pass(
        y, prior, family, box, grid_points, atom_tol, pinned
    )
    refined = []
    for (lo, hi), mean, variance, cell in zip(box, means, variances, cells):
        half = REFINE_SDS * math.sqrt(variance) + 2.0 * cell
        refined.append((max(lo, mean - half), min(hi, mean + half)))
    inside = np.all(
        [(points[:, i] >= lo) & (points[:, i] <= hi) for i, (lo, hi) in enumerate(refined)],
        axis=0,
    )
    grid_mass = float(weights[inside].sum())
    _, _, means, variances, _ = _grid_pass(
        y, prior, family, refined, grid_points, atom_tol, pinned
    )
    logger.debug(f"grid posterior: mass in refined box {grid_mass:.6f}")
    return PosteriorEstimate(
        names=prior.names,
        means=means.tolist(),
        variances=variances.tolist(),
        method=PosteriorMethod.GRID,
        diagnostics={
            "grid_mass": grid_mass,
            "grid_points": float(grid_points),
            "pinned_heights": float(len(pinned)),
        },
    )


def _batch_means_se(chain: np.ndarray, batches: int = config.monte_carlo.batches) -> np.ndarray:
    batches = max(2, min(batches, len(chain) // 2))
    batch_means = np.array([b.mean(axis=0) for b in np.array_split(chain, batches)])
    return batch_means.std(axis=0, ddof=1) / math.sqrt(batches)


def metropolis_posterior(
    y: Sequence[float],
    prior: PriorSpec,
    family: SeverityFamily,
    seed: int,
    samples: int = config.bayes.mh_samples,
    burn_in: int = config.bayes.mh_burn_in,
    step: float = 0.1,
    start: Optional[Sequence[float]] = None,
    atom_tol: float = config.bayes.atom_tol,
) -> PosteriorEstimate:
    """Random-walk Metropolis on log-parameters; the step adapts during burn-in."""
    if seed is None:
        raise DomainError("Metropolis sampling needs an explicit seed")
    rng = rng_stream(seed, 0)
    dims = len(prior.names)

    def log_target(z: np.ndarray) -> float:
        point = np.exp(z)[None, :]
        value = float(prior.log_density(point)[0]) + float(z.sum())
        if len(y) and math.isfinite(value):
            value += float(grid_loglik(y, point, family, prior.n_widths, atom_tol)[0])
        return value

    if start is None:
        start = [p.mean() for p in prior.all_priors]
    z = np.log(np.asarray(start, dtype=float))
    current = log_target(z)
    chain = np.empty((samples, dims))
    accepted, window = 0, 0
    for iteration in range(burn_in + samples):
        proposal = z + step * rng.standard_normal(dims)
        candidate = log_target(proposal)
        if math.log(rng.random()) < candidate - current:
            z, current = proposal, candidate
            window += 1
            if iteration >= burn_in:
                accepted += 1
        if iteration < burn_in and (iteration + 1) % 100 == 0:
            rate = window / 100
            step *= 1.2 if rate > 0.3 else (1 / 1.2 if rate < 0.2 else 1.0)
            window = 0
        if iteration >= burn_in:
            chain[iteration - burn_in] = np.exp(z)
    if not math.isfinite(current):
        raise DegenerateDataError("Metropolis chain never reached positive likelihood")
    standard_errors = _batch_means_se(chain)
    diagnostics = {"acceptance_rate": accepted / samples, "step": step}
    diagnostics.update(
        {f"mc_se_{name}": float(se) for name, se in zip(prior.names, standard_errors)}
    )
    return PosteriorEstimate(
        names=prior.names,
        means=chain.mean(axis=0).tolist(),
        variances=chain.var(axis=0).tolist(),
        method=PosteriorMethod.METROPOLIS,
        diagnostics=diagnostics,
    )


def posterior_mean(
    y: Sequence[float],
    prior: PriorSpec,
    family: SeverityFamily,
    method: Optional[PosteriorMethod] = None,
    grid_points: int = config.bayes.grid_points,
    seed: Optional[int] = None,
    atom_tol: float = config.bayes.atom_tol,
    atom_heights: Sequence[float] = (),
) -> PosteriorEstimate:
    """Posterior means and variances under squared-error loss.

    ``atom_heights`` (flat heights of the censoring contract) pin the grid;
    Metropolis keeps the plain mixed likelihood.
    """
    if (family.free is None) != (prior.theta_prior is None):
        raise DomainError("A free severity parameter needs a theta prior, and vice versa")
    if method is None:
        method = (
            PosteriorMethod.GRID
            if len(prior.names) <= MAX_GRID_DIMS
            else PosteriorMethod.METROPOLIS
        )
    if PosteriorMethod(method) == PosteriorMethod.GRID:
        return grid_posterior(y, prior, family, grid_points, atom_tol, atom_heights)
    return metropolis_posterior(y, prior, family, seed, atom_tol=atom_tol)


def iterate_estimation(
    x_raw: Sequence[float],
    prior: PriorSpec,
    family: SeverityFamily,
    init: Sequence[float],
    rounds: int = config.bayes.rounds,
    rel_change: float = config.bayes.rel_change,
    grid_points: int = config.bayes.grid_points,
    method: Optional[PosteriorMethod] = None,
    seed: Optional[int] = None,
) -> PosteriorEstimate:
    """Re-censor the raw claims through the current estimate and re-estimate.

    Stops after ``rounds`` rounds or once every estimate moves by at most
    ``rel_change`` relative to its previous value.
    """
    if rounds < 1:
        raise DomainError(f"rounds must be at least 1, got {rounds}")
    if len(init) != prior.n_widths or any(v <= 0 for v in init):
        raise DomainError(f"init needs {prior.n_widths} positive widths, got {init}")
    x_raw = np.asarray(x_raw, dtype=float)
    current = np.asarray(init, dtype=float)
    trace: list[list[float]] = []
    estimate = None
    for round_number in range(rounds):
        censoring = alternating_contract(tuple(current))
        y = censoring.ceded(x_raw)
        estimate = posterior_mean(
            np.atleast_1d(y),
            prior,
            family,
            method,
            grid_points,
            seed,
            atom_heights=[atom.height for atom in censoring.atoms()],
        )
        trace.append(estimate.means)
        updated = np.asarray(estimate.means[: prior.n_widths])
        change = float(np.max(np.abs(updated - current) / np.abs(current)))
        logger.debug(f"round {round_number + 1}: {np.round(updated, 6)} change {change:.3g}")
        current = updated
        if change <= rel_change:
            break
    return estimate.model_copy(
        update={
            "trace": trace,
            "diagnostics": {**estimate.diagnostics, "rounds": float(len(trace))},
        }
    )


def run_repetitions(
    family: SeverityFamily,
    prior: PriorSpec,
    n: int,
    reps: int,
    seed: int,
    init: Sequence[float],
    rounds: int = config.bayes.rounds,
    grid_points: int = config.bayes.grid_points,
) -> list[PosteriorEstimate]:
    """Repetition ``r`` draws its claims from ``rng_stream(seed, r)``."""
    theta = None
    if family.free is not None:
        theta = family.params.get(family.free, prior.theta_prior.mean())
    dist = family.distribution(theta)
    estimates = []
    for rep in range(reps):
        claims = dist.sample(n, seed, stream_id=rep)
        estimates.append(
            iterate_estimation(
                claims, prior, family, init, rounds, grid_points=grid_points, seed=seed
            )
        )
    return estimates
