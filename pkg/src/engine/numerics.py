"""Shared numerical kernels: quadrature, root finding, minimisation, RNG streams.

Random streams use numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(stream_id,))``. numpy guarantees the PCG64
stream for a given seed sequence is stable across releases (NEP 19), so
results are reproducible for ``numpy>=1.17``.
"""

import logging
import math
import warnings
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate as sp_integrate
from scipy import optimize as sp_optimize

from src.config import config
from src.exceptions import NoRootError, NumericsError

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64"

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


class Tolerance(BaseModel):
    model_config = ConfigDict(frozen=True)

    abs: float = Field(default=config.numerics.quad_abs, gt=0)
    rel: float = Field(default=config.numerics.quad_rel, gt=0)
    max_iter: int = Field(default=config.numerics.max_iter, ge=1)


DEFAULT_TOLERANCE = Tolerance()


class SimplexResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    value: float
    converged: bool
    n_starts: int
    start_index: int


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> float:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``[a, b]``.

    ``b`` may be ``inf``; quad then maps the half line onto (0, 1].
    """
    if b == a:
        return 0.0
    if b < a:
        return -integrate(f, b, a, tol)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", sp_integrate.IntegrationWarning)
        value, abserr = sp_integrate.quad(
            f,
            a,
            b,
            epsabs=tol.abs,
            epsrel=tol.rel,
            limit=max(config.numerics.quad_limit, tol.max_iter),
        )
    bound = 100.0 * max(tol.abs, tol.rel * abs(value))
    if caught:
        logger.debug(f"quad on [{a}, {b}]: {caught[-1].message}")
        if abserr > bound:
            raise NumericsError(
                f"Quadrature on [{a}, {b}] did not reach tolerance "
                f"(error estimate {abserr:.3e})",
                estimate=value,
            )
    if not math.isfinite(value):
        raise NumericsError(f"Quadrature on [{a}, {b}] is not finite", estimate=value)
    return float(value)


def find_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> float:
    """Brent's bracketing method; requires a sign change on ``[lo, hi]``."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return float(lo)
    if f_hi == 0.0:
        return float(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoRootError(
            f"No sign change on [{lo}, {hi}]: f(lo)={f_lo:.6g}, f(hi)={f_hi:.6g}"
        )
    root, result = sp_optimize.brentq(
        f,
        lo,
        hi,
        xtol=config.numerics.root_tol,
        rtol=4 * np.finfo(float).eps,
        maxiter=tol.max_iter,
        full_output=True,
        disp=False,
    )
    if not result.converged:
        raise NumericsError(
            f"Root finder stopped after {result.iterations} iterations: {result.flag}",
            estimate=root,
        )
    return float(root)


def golden_section(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Golden-section search for a minimum of a unimodal ``f`` on ``[lo, hi]``.

    Returns ``(argmin, min)``. The endpoints are compared at the end so
    minima on the boundary are returned exactly.
    """
    if hi < lo:
        raise ValueError(f"Empty interval [{lo}, {hi}]")
    a, b = lo, hi
    c = b - GOLDEN_RATIO * (b - a)
    d = a + GOLDEN_RATIO * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN_RATIO * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN_RATIO * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    value, x = min(candidates)
    return float(x), float(value)


def minimize_simplex(
    f: Callable[[np.ndarray], float],
    starts: Iterable[Sequence[float]],
    tol: Optional[Tolerance] = None,
    xatol: float = config.calibration.xatol,
    fatol: float = config.calibration.fatol,
    max_iter: int = config.calibration.max_iter,
) -> SimplexResult:
    """Nelder-Mead from every start; the best vertex over all runs wins."""
    if tol is not None:
        max_iter = tol.max_iter
    if max_iter < 1:
        raise NumericsError(f"max_iter must be at least 1, got {max_iter}")
    starts = [np.atleast_1d(np.asarray(s, dtype=float)) for s in starts]
    if not starts:
        raise NumericsError("minimize_simplex needs at least one start")

    best: Optional[SimplexResult] = None
    for index, x0 in enumerate(starts):
        result = sp_optimize.minimize(
            f,
            x0,
            method="Nelder-Mead",
            options={
                "xatol": xatol,
                "fatol": fatol,
                "maxiter": max_iter,
                "maxfev": 2 * max_iter,
            },
        )
        value = float(result.fun)
        logger.debug(
            f"simplex start {index}: x={np.round(result.x, 6)} f={value:.6g} "
            f"converged={result.success} nit={result.nit}"
        )
        if best is None or value < best.value:
            best = SimplexResult(
                x=np.asarray(result.x, dtype=float),
                value=value,
                converged=bool(result.success),
                n_starts=len(starts),
                start_index=index,
            )
    return best


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream_id)``."""
    if seed is None:
        raise ValueError("A seed is required for every stochastic computation")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(sequence))
