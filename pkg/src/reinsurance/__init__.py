from src.reinsurance.contracts import (
    Contract,
    LadderParams,
    alternating_contract,
    build_ladder,
    stop_loss,
)
from src.reinsurance.distributions import (
    Empirical,
    Exponential,
    Weibull,
    parse_distribution,
)

__all__ = [
    "Contract",
    "LadderParams",
    "alternating_contract",
    "build_ladder",
    "stop_loss",
    "Exponential",
    "Weibull",
    "Empirical",
    "parse_distribution",
]
