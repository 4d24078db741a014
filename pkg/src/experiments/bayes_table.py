import logging
import math
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel

from src.config import Configuration
from src.experiments.base_experiment import BaseExperiment
from src.exceptions import DomainError
from src.reinsurance.bayes import (
    PriorSpec,
    SeverityFamily,
    parse_prior,
    run_repetitions,
)
from src.reinsurance.contracts import stop_loss
from src.reinsurance.distributions import parse_distribution
from src.reinsurance.risk import cte_ceded

logger = logging.getLogger(__name__)


class BayesRow(BaseModel):
    dist: str
    priors: tuple[str, str, str]
    published_means: tuple[float, float, float] = (math.nan, math.nan, math.nan)


TABLE3_ROWS = (
    BayesRow(
        dist="exp(mean=1)",
        priors=("exp(1)", "exp(1)", "exp(1)"),
        published_means=(0.0599, 0.4474, 0.0643),
    ),
    BayesRow(
        dist="exp(mean=4)",
        priors=("gamma(2, 3)", "gamma(3, 2)", "gamma(2, 2)"),
        published_means=(0.0526, 0.6575, 0.0638),
    ),
    BayesRow(
        dist="weibull(scale=1, shape=2)",
        priors=("gamma(2, 2)", "gamma(3, 2)", "gamma(2, 3)"),
        published_means=(0.0746, 0.6575, 0.0798),
    ),
)

WIDTHS = ("d0", "d1", "d2")
DEFAULT_PRIORS = ("exp(1)", "exp(1)", "exp(1)")


def table3_rows(
    claim_dist: Optional[str] = None, priors: Optional[tuple[str, str, str]] = None
) -> tuple[BayesRow, ...]:
    """The published rows, or a single row for the given severity.

    Priors given without a severity replace the priors of every published row,
    which then has no published means to compare against.
    """
    if claim_dist is not None:
        return (BayesRow(dist=claim_dist, priors=priors or DEFAULT_PRIORS),)
    if priors is None:
        return TABLE3_ROWS
    return tuple(BayesRow(dist=row.dist, priors=priors) for row in TABLE3_ROWS)


class Table3Experiment(BaseExperiment):
    """Posterior means of the widths (d0, d1, d2) over repeated samples."""

    columns = (
        ("dist", "prior_d0", "prior_d1", "prior_d2")
        + tuple(f"mean_{w}" for w in WIDTHS)
        + tuple(f"var_{w}" for w in WIDTHS)
        + tuple(f"post_sd_{w}" for w in WIDTHS)
        + ("reps", "rounds", "e_stop_loss", "stop_loss", "cte_ceded")
        + tuple(f"published_mean_{w}" for w in WIDTHS)
    )
    retryable = False

    def __init__(self, settings: Configuration, rows: tuple[BayesRow, ...] = TABLE3_ROWS):
        super().__init__(settings)
        self.rows = rows

    def items(self) -> list[BayesRow]:
        return list(self.rows)

    def label(self, item: BayesRow) -> str:
        return item.dist

    def run_row(self, item: BayesRow, budget: int = 1) -> dict[str, Any]:
        bayes, experiment = self.settings.bayes, self.settings.experiment
        if experiment.seed is None:
            raise DomainError("The Bayes table needs a seed")
        dist = parse_distribution(item.dist)
        prior = PriorSpec(priors=[parse_prior(p) for p in item.priors])
        estimates = run_repetitions(
            SeverityFamily.from_distribution(dist),
            prior,
            n=bayes.sample_size,
            reps=bayes.reps,
            seed=experiment.seed,
            init=bayes.init,
            rounds=bayes.rounds,
            grid_points=bayes.grid_points,
        )
        means = np.array([e.means for e in estimates])
        sds = np.array([e.standard_deviations for e in estimates])
        between = means.var(axis=0, ddof=1) if len(estimates) > 1 else np.zeros(3)
        rounds = np.mean([e.diagnostics.get("rounds", math.nan) for e in estimates])

        d_alpha = float(dist.quantile(1.0 - experiment.alpha))
        logger.info(f"{dist.label}: posterior means {np.round(means.mean(axis=0), 4)}")
        return {
            "dist": dist.label,
            **{f"prior_{w}": p for w, p in zip(WIDTHS, item.priors)},
            **{f"mean_{w}": float(v) for w, v in zip(WIDTHS, means.mean(axis=0))},
            **{f"var_{w}": float(v) for w, v in zip(WIDTHS, between)},
            **{f"post_sd_{w}": float(v) for w, v in zip(WIDTHS, sds.mean(axis=0))},
            "reps": len(estimates),
            "rounds": float(rounds),
            "e_stop_loss": dist.stop_loss_premium(d_alpha),
            "stop_loss": f"(X-{d_alpha:.4f})_+",
            "cte_ceded": cte_ceded(dist, stop_loss(d_alpha), experiment.alpha),
            **{f"published_mean_{w}": v for w, v in zip(WIDTHS, item.published_means)},
        }

    def check(self, row: dict[str, Any]) -> bool:
        keys = [f"{kind}_{w}" for kind in ("mean", "var") for w in WIDTHS]
        return all(math.isfinite(row[k]) for k in keys)
