"""Piecewise-linear ceded-loss functions.

A contract is a continuous, nondecreasing function h with h(0) = 0 whose
pieces have slopes in {0, 1} plus at most one other slope c in (0, 1).
Piece ``i`` applies on ``[breakpoints[i], breakpoints[i + 1])`` and the last
piece runs to infinity. Zero-length pieces are dropped and consecutive pieces
with equal slopes are merged, so every contract has one canonical form.
"""

import logging
import math
import pathlib
from typing import Any, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from src.config import config
from src.exceptions import ConfigError, DomainError, LayerOrderError
from src.reinsurance.distributions import ClaimDistribution

logger = logging.getLogger(__name__)

SLOPE_TOL = 1e-12
FEASIBILITY_GRID_POINTS = 10_000
FEASIBILITY_TAIL_PROB = 1e-6


class Piece(NamedTuple):
    lo: float
    hi: float
    slope: float
    start: float


class Atom(NamedTuple):
    """A flat piece: every x in [lo, hi) is ceded as ``height``."""

    height: float
    lo: float
    hi: float


def _canonical(breakpoints: Sequence[float], slopes: Sequence[float]):
    kept_points: list[float] = []
    kept_slopes: list[float] = []
    for i, (point, slope) in enumerate(zip(breakpoints, slopes)):
        is_last = i == len(breakpoints) - 1
        if not is_last and breakpoints[i + 1] == point:
            continue
        if kept_slopes and abs(kept_slopes[-1] - slope) <= SLOPE_TOL:
            continue
        kept_points.append(float(point))
        kept_slopes.append(float(slope))
    return tuple(kept_points), tuple(kept_slopes)


class Contract(BaseModel):
    model_config = ConfigDict(frozen=True)

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    name: str = Field(default="custom", exclude=True)

    _points: np.ndarray = PrivateAttr(default=None)
    _slopes: np.ndarray = PrivateAttr(default=None)
    _values: np.ndarray = PrivateAttr(default=None)

    @model_validator(mode="before")
    @classmethod
    def _validate_pieces(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        points = [float(b) for b in data.get("breakpoints", ())]
        slopes = [float(s) for s in data.get("slopes", ())]
        if not points or points[0] != 0.0:
            raise LayerOrderError("The first breakpoint must be 0")
        if len(slopes) != len(points):
            raise DomainError(
                f"Need one slope per breakpoint, got {len(slopes)} for {len(points)}"
            )
        if not all(math.isfinite(v) for v in points + slopes):
            raise DomainError("Breakpoints and slopes must be finite")
        if any(b < a for a, b in zip(points, points[1:])):
            raise LayerOrderError(f"Breakpoints must be increasing: {points}")
        if any(s < -SLOPE_TOL or s > 1.0 + SLOPE_TOL for s in slopes):
            raise DomainError(f"Slopes must lie in [0, 1]: {slopes}")
        slopes = [min(max(s, 0.0), 1.0) for s in slopes]
        others = {round(s, 12) for s in slopes if 0.0 < s < 1.0}
        if len(others) > 1:
            raise DomainError(
                f"At most one slope outside {{0, 1}} is allowed, got {sorted(others)}"
            )
        points, slopes = _canonical(points, slopes)
        return {**data, "breakpoints": points, "slopes": slopes}

    def model_post_init(self, __context: Any) -> None:
        self._points = np.asarray(self.breakpoints, dtype=float)
        self._slopes = np.asarray(self.slopes, dtype=float)
        widths = np.diff(self._points)
        self._values = np.concatenate(([0.0], np.cumsum(self._slopes[:-1] * widths)))

    @property
    def ceded_at_breakpoints(self) -> np.ndarray:
        return self._values

    @property
    def max_ceded(self) -> float:
        return float(self._values[-1]) if self._slopes[-1] == 0.0 else math.inf

    @property
    def last_breakpoint(self) -> float:
        return float(self._points[-1])

    def ceded(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        x_arr = np.asarray(x, dtype=float)
        clipped = np.maximum(x_arr, 0.0)
        index = np.searchsorted(self._points, clipped, side="right") - 1
        value = self._values[index] + self._slopes[index] * (
            clipped - self._points[index]
        )
        return float(value) if value.ndim == 0 else value

    def retained(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        x_arr = np.asarray(x, dtype=float)
        value = x_arr - np.asarray(self.ceded(x_arr))
        return float(value) if value.ndim == 0 else value

    def __call__(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self.ceded(x)

    def pieces(self) -> list[Piece]:
        ends = list(self.breakpoints[1:]) + [math.inf]
        return [
            Piece(lo, hi, slope, float(start))
            for lo, hi, slope, start in zip(
                self.breakpoints, ends, self.slopes, self._values
            )
        ]

    def atoms(self) -> list[Atom]:
        return [
            Atom(piece.start, piece.lo, piece.hi)
            for piece in self.pieces()
            if piece.slope == 0.0
        ]

    def is_unit_slope(self) -> bool:
        """True when every slope is 0 or 1."""
        return all(s in (0.0, 1.0) for s in self.slopes)

    def inverse_upper(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """max{x : h(x) <= t}; ``inf`` when h never exceeds t, ``-inf`` for t < 0."""
        t_arr = np.asarray(t, dtype=float)
        index = np.searchsorted(self._values, t_arr, side="right") - 1
        safe = np.maximum(index, 0)
        slope = self._slopes[safe]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(
                slope > 0.0,
                self._points[safe] + (t_arr - self._values[safe]) / np.where(
                    slope > 0.0, slope, 1.0
                ),
                math.inf,
            )
        x = np.where(index < 0, -math.inf, x)
        return float(x) if x.ndim == 0 else x

    def to_text(self) -> str:
        """One ``(breakpoint, slope)`` pair per line."""
        return "".join(
            f"({point:.17g}, {slope:.17g})\n"
            for point, slope in zip(self.breakpoints, self.slopes)
        )

    @classmethod
    def from_text(cls, text: str, name: str = "custom") -> "Contract":
        points, slopes = [], []
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                point, slope = line.strip("()").split(",")
                points.append(float(point))
                slopes.append(float(slope))
            except ValueError as e:
                raise ConfigError(
                    f"line {number}: expected '(breakpoint, slope)', got {line!r}"
                ) from e
        return cls(breakpoints=points, slopes=slopes, name=name)


class LadderParams(BaseModel):
    """Base deductible d and cut points M_1 < ... < M_k.

    The ladder cedes nothing on [0, d), then runs with slope 1 and pauses for
    a width d at every cut point.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=config.experiment.alpha, gt=0, lt=1)
    deductible: float = Field(ge=0)
    cuts: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_order(self) -> "LadderParams":
        previous, gap_needed = self.deductible, 0.0
        for j, cut in enumerate(self.cuts, start=1):
            if not cut > previous + gap_needed:
                raise LayerOrderError(
                    f"M_{j}={cut} must exceed {previous + gap_needed} "
                    f"(previous cut plus deductible)"
                )
            previous, gap_needed = cut, self.deductible
        return self

    @property
    def k(self) -> int:
        return len(self.cuts)

    def gaps(self) -> tuple[float, ...]:
        """d_1 = M_1 - d and d_j = M_j - M_{j-1} - d."""
        starts = (0.0,) + self.cuts[:-1]
        return tuple(
            cut - start - self.deductible for cut, start in zip(self.cuts, starts)
        )

    def widths(self) -> tuple[float, ...]:
        """Alternating flat/slope widths (d, d_1, d, d_2, ..., d)."""
        widths = [self.deductible]
        for gap in self.gaps():
            widths.extend([gap, self.deductible])
        return tuple(widths)

    def companion_points(self) -> tuple[float, ...]:
        """M*_0 = d, M*_1 = M_1, M*_2 = M_1 + d, M*_3 = M_2, ..."""
        points = [self.deductible]
        for cut in self.cuts:
            points.extend([cut, cut + self.deductible])
        return tuple(points)

    @classmethod
    def from_gaps(
        cls,
        deductible: float,
        gaps: Sequence[float],
        alpha: float = config.experiment.alpha,
    ) -> "LadderParams":
        cuts, position = [], 0.0
        for gap in gaps:
            position += deductible + gap
            cuts.append(position)
        return cls(alpha=alpha, deductible=deductible, cuts=tuple(cuts))


def alternating_contract(widths: Sequence[float], name: str = "custom") -> Contract:
    """Pieces alternate flat / slope 1 starting flat at 0.

    An odd number of widths leaves an open top layer, an even number caps the
    last layer. Zero widths are allowed and merge with their neighbours.
    """
    if any(w < 0 or not math.isfinite(w) for w in widths):
        raise LayerOrderError(f"Widths must be finite and nonnegative: {widths}")
    points = np.concatenate(([0.0], np.cumsum(np.asarray(widths, dtype=float))))
    slopes = [float(i % 2) for i in range(len(points))]
    return Contract(breakpoints=tuple(points), slopes=tuple(slopes), name=name)


def stop_loss(deductible: float) -> Contract:
    if deductible < 0:
        raise DomainError(f"Deductible must be nonnegative, got {deductible}")
    return alternating_contract((deductible,), name=f"stoploss:{deductible:g}")


def proportional(c: float) -> Contract:
    if not 0.0 <= c <= 1.0:
        raise DomainError(f"Proportional share must lie in [0, 1], got {c}")
    return Contract(breakpoints=(0.0,), slopes=(c,), name=f"prop:{c:g}")


def layer(attachment: float, limit: float) -> Contract:
    """``min(max(x - attachment, 0), limit)``."""
    return alternating_contract(
        (attachment, limit), name=f"layer:{attachment:g};{limit:g}"
    )


def build_ladder(params: LadderParams) -> Contract:
    label = ";".join(f"{v:g}" for v in (params.deductible,) + params.cuts)
    return alternating_contract(params.widths(), name=f"ladder:{label}")


def extend_one_layer(f_prev: Contract, base: Contract, M: float) -> Contract:
    """``f_prev`` below M, ``f_prev(M) + base(x - M)`` above."""
    if not M > f_prev.last_breakpoint:
        raise LayerOrderError(
            f"Cut point {M} must exceed the last breakpoint {f_prev.last_breakpoint}"
        )
    points = f_prev.breakpoints + tuple(M + b for b in base.breakpoints)
    slopes = f_prev.slopes + base.slopes
    return Contract(breakpoints=points, slopes=slopes, name=f"{f_prev.name}+{M:g}")


def as_contract(contract: Union[Contract, LadderParams]) -> Contract:
    return build_ladder(contract) if isinstance(contract, LadderParams) else contract


def ceded_cdf(
    contract: Union[Contract, LadderParams],
    dist: ClaimDistribution,
    t: Union[float, np.ndarray],
) -> Union[float, np.ndarray]:
    """P(h(X) <= t) = F(max{x : h(x) <= t})."""
    contract = as_contract(contract)
    t_arr = np.asarray(t, dtype=float)
    upper = np.asarray(contract.inverse_upper(t_arr))
    finite = np.isfinite(upper)
    cdf = np.where(
        finite, np.asarray(dist.cdf(np.where(finite, upper, 0.0))), np.where(
            upper > 0, 1.0, 0.0
        )
    )
    return float(cdf) if cdf.ndim == 0 else cdf


def ladder_cdf(
    contract: Union[Contract, LadderParams], dist: ClaimDistribution, t: float
) -> float:
    """Closed-form CDF for unit-slope contracts: atom heights plus shifted bands.

    Between the flat at height H_j (ending at X = e_j) and the next flat, the
    ceded loss is ``x - e_j + H_j``, so P(h(X) <= t) = F(e_j + t - H_j).
    """
    contract = as_contract(contract)
    if not contract.is_unit_slope():
        raise DomainError("Closed-form CDF needs slopes in {0, 1}")
    if t < 0:
        return 0.0
    atoms = contract.atoms()
    if not atoms or atoms[0].height > 0.0:
        # full cession from the origin
        atoms = [Atom(0.0, 0.0, 0.0)] + atoms
    current = atoms[0]
    for atom in atoms[1:]:
        if atom.height > t:
            break
        current = atom
    if math.isinf(current.hi):
        return 1.0
    return float(dist.cdf(current.hi + t - current.height))


def atom_masses(contract: Contract, dist: ClaimDistribution) -> list[tuple[float, float]]:
    """``(height, P(h(X) = height))`` for every flat piece."""
    masses = []
    for atom in contract.atoms():
        upper = 1.0 if math.isinf(atom.hi) else float(dist.cdf(atom.hi))
        lower = float(dist.cdf(atom.lo)) if atom.lo > 0 else 0.0
        masses.append((atom.height, upper - lower))
    return masses


class FeasibilityReport(BaseModel):
    feasible: bool
    first_violation: Optional[float] = None
    reason: str = ""


def is_feasible(
    contract: Contract,
    d_alpha: float,
    upper: Optional[float] = None,
    dist: Optional[ClaimDistribution] = None,
) -> FeasibilityReport:
    """Checks 0 <= h(x) <= max(x - d_alpha, 0) with h and x - h nondecreasing.

    The grid is the union of both functions' breakpoints and a uniform grid up
    to ``upper`` (default: the 1 - 1e-6 quantile of ``dist`` when given).
    """
    if upper is None:
        if dist is not None:
            upper = float(dist.quantile(1.0 - FEASIBILITY_TAIL_PROB))
        else:
            upper = 4.0 * max(contract.last_breakpoint, d_alpha) + 1.0
    upper = max(upper, contract.last_breakpoint, d_alpha) + 1.0
    points = np.asarray(contract.breakpoints)
    grid = np.unique(
        np.concatenate(
            (
                np.linspace(0.0, upper, FEASIBILITY_GRID_POINTS),
                contract.breakpoints,
                [d_alpha],
                0.5 * (points[1:] + points[:-1]),
            )
        )
    )
    ceded = np.asarray(contract.ceded(grid))
    retained = grid - ceded
    bound = np.maximum(grid - d_alpha, 0.0)
    tol = 1e-10 * np.maximum(1.0, grid)

    checks = [
        (ceded < -tol, "ceded loss is negative"),
        (ceded > grid + tol, "ceded loss exceeds the claim"),
        (ceded > bound + tol, f"ceded loss exceeds max(x - {d_alpha:g}, 0)"),
    ]
    for mask, reason in checks:
        if np.any(mask):
            x = float(grid[np.argmax(mask)])
            logger.debug(f"infeasible at x={x:.6g}: {reason}")
            return FeasibilityReport(feasible=False, first_violation=x, reason=reason)
    for values, what in ((ceded, "ceded"), (retained, "retained")):
        drops = np.diff(values) < -1e-10
        if np.any(drops):
            x = float(grid[1:][np.argmax(drops)])
            return FeasibilityReport(
                feasible=False, first_violation=x, reason=f"{what} loss decreases"
            )
    return FeasibilityReport(feasible=True)


def parse_contract(literal: str) -> Contract:
    """``stoploss:d``, ``prop:c``, ``layer:a;l``, ``ladder:d;M1;M2`` or a file path."""
    kind, _, argument = literal.partition(":")
    kind = kind.strip().lower()
    try:
        values = [float(v) for v in argument.replace(",", ";").split(";") if v.strip()]
        if kind in ("stoploss", "sl"):
            return stop_loss(*values)
        if kind in ("prop", "proportional"):
            return proportional(*values)
        if kind == "layer":
            return layer(*values)
        if kind == "ladder":
            deductible, *cuts = values
            return build_ladder(LadderParams(deductible=deductible, cuts=tuple(cuts)))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Cannot parse contract '{literal}': {e}") from e
    path = pathlib.Path(literal)
    if path.exists():
        return Contract.from_text(path.read_text(), name=path.stem)
    raise ConfigError(f"Unknown contract '{literal}'")
