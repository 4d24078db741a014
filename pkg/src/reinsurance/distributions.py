"""Severity models for the ground-up claim X.

``Exponential`` is mean-parameterised and ``Weibull`` is (scale, shape),
matching the table conventions (``exp(mean=10)`` has its 0.9-quantile at
23.0259). Parametric variants delegate to frozen ``scipy.stats`` objects;
``Empirical`` works on the sorted sample directly.
"""

import logging
import math
import pathlib
import re
from abc import ABC, abstractmethod
from typing import Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError
from scipy import stats

from src.config import config
from src.consts import DistributionKind
from src.engine.numerics import integrate, rng_stream
from src.exceptions import ConfigError, DomainError, UnsupportedForEmpirical
from src.utils import read_samples

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _out(value: Any) -> ArrayLike:
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


class ClaimDistribution(BaseModel, ABC):
    model_config = ConfigDict(frozen=True)

    kind: DistributionKind

    @property
    @abstractmethod
    def label(self) -> str: ...

    @property
    def is_continuous(self) -> bool:
        return True

    @abstractmethod
    def cdf(self, x: ArrayLike) -> ArrayLike: ...

    def survival(self, x: ArrayLike) -> ArrayLike:
        return _out(1.0 - np.asarray(self.cdf(x)))

    @abstractmethod
    def pdf(self, x: ArrayLike) -> ArrayLike: ...

    @abstractmethod
    def _ppf(self, p: np.ndarray) -> np.ndarray: ...

    def quantile(self, p: ArrayLike) -> ArrayLike:
        """inf{x : cdf(x) >= p} for p in [0, 1)."""
        p_arr = np.asarray(p, dtype=float)
        if np.any((p_arr < 0.0) | (p_arr >= 1.0)) or np.any(np.isnan(p_arr)):
            raise DomainError(f"Probability must lie in [0, 1), got {p}")
        return _out(np.where(p_arr == 0.0, 0.0, self._ppf(p_arr)))

    @abstractmethod
    def mean(self) -> float: ...

    @abstractmethod
    def variance(self) -> float: ...

    def upper_limit(self, tail_prob: float = config.numerics.tail_prob) -> float:
        """Truncation point for integrals over [a, inf)."""
        return float(self.quantile(1.0 - tail_prob))

    def tail_integral(self, a: float, b: float = math.inf) -> float:
        """Integral of the survival function over [a, b]."""
        if b <= a:
            return 0.0
        upper = min(b, self.upper_limit())
        if upper <= a:
            return 0.0
        return integrate(self.survival, a, upper)

    def stop_loss_premium(self, deductible: float) -> float:
        """E[(X - deductible)+]."""
        if deductible < 0:
            raise DomainError(f"Deductible must be nonnegative, got {deductible}")
        return self.tail_integral(deductible, math.inf)

    def sample(self, n: int, seed: int, stream_id: int = 0) -> np.ndarray:
        """Inverse-transform draws on ``rng_stream(seed, stream_id)``."""
        if n < 1:
            raise DomainError(f"Sample size must be at least 1, got {n}")
        rng = rng_stream(seed, stream_id)
        return self.draw(rng, n)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self._ppf(rng.random(n)), dtype=float)


class ParametricDistribution(ClaimDistribution, ABC):
    _rv: Any = PrivateAttr(default=None)

    @abstractmethod
    def _frozen(self) -> Any: ...

    def model_post_init(self, __context: Any) -> None:
        self._rv = self._frozen()

    def cdf(self, x: ArrayLike) -> ArrayLike:
        return _out(self._rv.cdf(np.maximum(x, 0.0)))

    def survival(self, x: ArrayLike) -> ArrayLike:
        return _out(self._rv.sf(np.maximum(x, 0.0)))

    def pdf(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        return _out(np.where(x < 0.0, 0.0, self._rv.pdf(np.maximum(x, 0.0))))

    def _ppf(self, p: np.ndarray) -> np.ndarray:
        return self._rv.ppf(p)

    def mean(self) -> float:
        return float(self._rv.mean())

    def variance(self) -> float:
        return float(self._rv.var())


class Exponential(ParametricDistribution):
    kind: Literal[DistributionKind.EXPONENTIAL] = DistributionKind.EXPONENTIAL
    mean_: float = Field(alias="mean", gt=0)

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    def _frozen(self) -> Any:
        return stats.expon(scale=self.mean_)

    @property
    def label(self) -> str:
        return f"exp(mean={self.mean_:g})"

    def tail_integral(self, a: float, b: float = math.inf) -> float:
        if b <= a:
            return 0.0
        a = max(a, 0.0)
        upper = 0.0 if math.isinf(b) else math.exp(-b / self.mean_)
        return self.mean_ * (math.exp(-a / self.mean_) - upper)


class Weibull(ParametricDistribution):
    kind: Literal[DistributionKind.WEIBULL] = DistributionKind.WEIBULL
    scale: float = Field(gt=0)
    shape: float = Field(gt=0)

    def _frozen(self) -> Any:
        return stats.weibull_min(c=self.shape, scale=self.scale)

    @property
    def label(self) -> str:
        return f"weibull(scale={self.scale:g}, shape={self.shape:g})"


class Empirical(ClaimDistribution):
    kind: Literal[DistributionKind.EMPIRICAL] = DistributionKind.EMPIRICAL
    samples: tuple[float, ...] = Field(min_length=1)
    source: str = "inline"

    _sorted: np.ndarray = PrivateAttr(default=None)

    def model_post_init(self, __context: Any) -> None:
        values = np.sort(np.asarray(self.samples, dtype=float))
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise DomainError("Empirical samples must be finite and nonnegative")
        self._sorted = values

    @classmethod
    def from_file(cls, path: str | pathlib.Path) -> "Empirical":
        return cls(samples=tuple(read_samples(path)), source=str(path))

    @property
    def label(self) -> str:
        return f"empirical(path={self.source})"

    @property
    def is_continuous(self) -> bool:
        return False

    @property
    def sorted_samples(self) -> np.ndarray:
        return self._sorted

    def cdf(self, x: ArrayLike) -> ArrayLike:
        positions = np.searchsorted(self._sorted, x, side="right")
        return _out(positions / self._sorted.size)

    def pdf(self, x: ArrayLike) -> ArrayLike:
        raise UnsupportedForEmpirical("An empirical severity has no density")

    def _ppf(self, p: np.ndarray) -> np.ndarray:
        # lower order statistic: smallest x with F(x) >= p
        n = self._sorted.size
        index = np.clip(np.ceil(np.asarray(p) * n - 1e-12).astype(int) - 1, 0, n - 1)
        return self._sorted[index]

    def mean(self) -> float:
        return float(np.mean(self._sorted))

    def variance(self) -> float:
        return float(np.var(self._sorted))

    def upper_limit(self, tail_prob: float = config.numerics.tail_prob) -> float:
        return float(self._sorted[-1])

    def tail_integral(self, a: float, b: float = math.inf) -> float:
        if b <= a:
            return 0.0
        return float(np.mean(np.clip(self._sorted, a, b) - a))


Distribution = Union[Exponential, Weibull, Empirical]

_LITERAL = re.compile(r"^\s*(?P<name>[a-z_]+)\s*\((?P<args>.*)\)\s*$", re.IGNORECASE)


def _parse_arguments(text: str) -> dict[str, str]:
    arguments = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        if "=" not in item:
            raise ConfigError(f"Expected key=value, got '{item}'")
        key, value = (part.strip() for part in item.split("=", 1))
        arguments[key] = value
    return arguments


def parse_distribution(literal: str) -> Distribution:
    """Build a distribution from ``exp(mean=10)``, ``weibull(scale=1, shape=2)``
    or ``empirical(path=claims.txt)``."""
    match = _LITERAL.match(literal)
    if match is None:
        raise ConfigError(f"Cannot parse distribution '{literal}'")
    name = match["name"].lower()
    arguments = _parse_arguments(match["args"])
    try:
        if name in ("exp", "exponential"):
            return Exponential(mean=float(arguments["mean"]))
        if name == "weibull":
            return Weibull(
                scale=float(arguments["scale"]), shape=float(arguments["shape"])
            )
        if name == "empirical":
            return Empirical.from_file(arguments["path"])
    except KeyError as e:
        raise ConfigError(f"Missing parameter {e} in '{literal}'") from e
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"Invalid parameters in '{literal}': {e}") from e
    raise ConfigError(f"Unknown distribution '{name}' in '{literal}'")


def sample(
    dist: ClaimDistribution, n: int, seed: int, stream_id: int = 0
) -> np.ndarray:
    return dist.sample(n, seed, stream_id)
