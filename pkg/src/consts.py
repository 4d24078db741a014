from enum import Enum


class RowStatus(str, Enum):
    PENDING = "pending"
    SUCCESS = "success"
    FAILURE = "failure"


class DistributionKind(str, Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    EMPIRICAL = "empirical"


class Criterion(str, Enum):
    VARIANCE = "variance"
    UTILITY = "utility"


class CalibrationMode(str, Enum):
    STRICT = "strict"
    MATCH = "match"


class PremiumRule(str, Enum):
    FIXED = "fixed"
    LOADED = "loaded"


class EstimationMethod(str, Enum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte_carlo"


class PosteriorMethod(str, Enum):
    GRID = "grid"
    METROPOLIS = "metropolis"


class OutputFormat(str, Enum):
    CSV = "csv"
    MD = "md"


# CLI exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
