"""Sample-based risk functionals shared by the risk and verification code."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np
from pydantic import BaseModel

from src.config import config
from src.engine.numerics import rng_stream

logger = logging.getLogger(__name__)


class TailEstimate(BaseModel):
    value: float
    standard_error: float
    var_level: float
    degenerate: bool = False


def value_at_risk(samples: np.ndarray, alpha: float) -> float:
    """Lower (1 - alpha)-quantile of the empirical distribution."""
    samples = np.asarray(samples, dtype=float)
    return float(np.quantile(samples, 1.0 - alpha, method="inverted_cdf"))


def tail_expectation(samples: np.ndarray, alpha: float) -> TailEstimate:
    """CTE with the atom correction ``VaR + E[(T - VaR)+] / alpha``.

    The standard error comes from the per-sample score
    ``VaR + (T - VaR)+ / alpha`` whose mean is the estimate.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    var_level = value_at_risk(samples, alpha)
    scores = var_level + np.maximum(samples - var_level, 0.0) / alpha
    degenerate = not bool(np.any(samples > var_level))
    if degenerate:
        logger.debug(f"tail above VaR={var_level:.6g} is empty, returning VaR")
    standard_error = float(np.std(scores, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return TailEstimate(
        value=float(np.mean(scores)),
        standard_error=standard_error,
        var_level=var_level,
        degenerate=degenerate,
    )


def batch_standard_error(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    functional: Callable[[np.ndarray], float],
    batches: int = config.monte_carlo.batches,
) -> float:
    """Standard error of ``functional(a) - functional(b)`` on paired samples.

    Both arrays must come from the same draws of X; the batch split keeps
    the pairing so the common noise cancels.
    """
    samples_a = np.asarray(samples_a, dtype=float)
    samples_b = np.asarray(samples_b, dtype=float)
    if samples_a.shape != samples_b.shape:
        raise ValueError("Paired samples must have the same shape")
    batches = max(2, min(batches, samples_a.size // 2))
    diffs = np.array(
        [
            functional(a) - functional(b)
            for a, b in zip(
                np.array_split(samples_a, batches), np.array_split(samples_b, batches)
            )
        ]
    )
    return float(np.std(diffs, ddof=1) / math.sqrt(batches))


def split_streams(
    draw: Callable[[np.random.Generator, int], np.ndarray],
    n: int,
    seed: int,
    workers: int = config.monte_carlo.workers,
) -> np.ndarray:
    """Draw ``n`` samples across ``workers`` independent streams.

    Worker ``i`` draws from ``rng_stream(seed, i)``; chunks are concatenated
    in worker order so the result does not depend on scheduling.
    """
    workers = max(1, int(workers))
    sizes = [len(chunk) for chunk in np.array_split(np.arange(n), workers)]
    logger.debug(f"drawing n={n} seed={seed} over {workers} stream(s)")
    if workers == 1:
        return np.asarray(draw(rng_stream(seed, 0), n), dtype=float)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunks = list(
            pool.map(
                lambda item: draw(rng_stream(seed, item[0]), item[1]),
                enumerate(sizes),
            )
        )
    return np.concatenate(chunks).astype(float)
