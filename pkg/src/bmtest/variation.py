"""Increments, truncated power variations and cutoff calibration.

Conventions used throughout the package:

* Observations are log-prices on a regular grid of ``step_seconds``.
* A trading day lasts ``SECONDS_PER_DAY`` seconds and a year has
  ``DAYS_PER_YEAR`` trading days.  Model parameters (volatilities, mean
  reversion speeds, jump intensities) are annualized, so the step entering any
  ``Delta ** power`` expression is the step measured in years.
* Increments never straddle a day boundary.  Coarse increments at stride ``k``
  are taken on the single grid that starts at each day's first observation, and
  a trailing partial block is dropped.
* The truncation indicator keeps ``|x| <= u`` and the exceedance count uses
  ``|x| > u``, so the two partition every increment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError, DegenerateCutoffError, EmptySeriesError

SECONDS_PER_DAY = 23_400.0
DAYS_PER_YEAR = 252
SECONDS_PER_YEAR = SECONDS_PER_DAY * DAYS_PER_YEAR


def seconds_to_years(seconds):
    return seconds / SECONDS_PER_YEAR


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Log-prices on a regular grid, split into trading days.

    Parameters
    ----------
    step_seconds : float
        Grid spacing in seconds.
    observations : array_like
        Log-price values, at least two.
    day_offsets : array_like, optional
        Index of the first observation of each day.  Defaults to ``[0]``
        (a single session).
    metadata : dict, optional
        Free-form labels carried along (ground truth, source file, ...).
    """

    step_seconds: float
    observations: np.ndarray
    day_offsets: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        obs = np.ascontiguousarray(self.observations, dtype=float)
        if obs.ndim != 1 or obs.size < 2:
            raise DataError("a path needs at least two observations")
        if not np.all(np.isfinite(obs)):
            raise DataError("observations must be finite")
        if not self.step_seconds > 0:
            raise DataError(f"step_seconds must be positive, got {self.step_seconds}")
        offsets = np.asarray([0] if self.day_offsets is None else self.day_offsets, dtype=np.int64)
        if offsets.ndim != 1 or offsets.size == 0 or offsets[0] != 0:
            raise DataError("day_offsets must start at 0")
        if np.any(np.diff(offsets) <= 0) or offsets[-1] >= obs.size:
            raise DataError("day_offsets must be strictly increasing and inside the path")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "day_offsets", offsets)
        object.__setattr__(self, "step_seconds", float(self.step_seconds))

    @property
    def n_days(self):
        return int(self.day_offsets.size)

    @property
    def step_years(self):
        return seconds_to_years(self.step_seconds)

    @property
    def day_bounds(self):
        """``(start, stop)`` observation indices of each day."""
        stops = np.append(self.day_offsets[1:], self.observations.size)
        return list(zip(self.day_offsets.tolist(), stops.tolist()))

    def day_values(self, day):
        start, stop = self.day_bounds[day]
        return self.observations[start:stop]

    def select_days(self, days):
        """Sub-path made of the given consecutive day range."""
        days = range(len(self.day_bounds))[days] if isinstance(days, slice) else days
        bounds = self.day_bounds
        start, stop = bounds[days[0]][0], bounds[days[-1]][1]
        offsets = [bounds[d][0] - start for d in days]
        return SampledPath(self.step_seconds, self.observations[start:stop], offsets, dict(self.metadata))

    def with_observations(self, observations, **metadata):
        """Same grid and day layout, new values."""
        meta = dict(self.metadata)
        meta.update(metadata)
        return SampledPath(self.step_seconds, observations, self.day_offsets, meta)


@dataclass(frozen=True, eq=False)
class IncrementSeries:
    """Increments at a given stride, with per-day bookkeeping.

    ``day_offsets[d]`` is the position in ``values`` of the first increment of
    day ``d``; days too short for a single block contribute nothing.
    """

    values: np.ndarray
    stride: int
    source_step: float
    day_offsets: np.ndarray

    def __len__(self):
        return int(self.values.size)

    @property
    def day_counts(self):
        return np.diff(np.append(self.day_offsets, self.values.size))

    @property
    def n_days(self):
        return int(self.day_offsets.size)


def increments(path: SampledPath, stride: int = 1) -> IncrementSeries:
    """Non-overlapping block increments of ``path`` at the given stride."""
    stride = int(stride)
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    pieces = []
    for start, stop in path.day_bounds:
        grid = path.observations[start:stop:stride]
        pieces.append(np.diff(grid))
    counts = np.array([p.size for p in pieces], dtype=np.int64)
    if counts.sum() == 0:
        raise EmptySeriesError(f"stride {stride} is longer than every day of the path")
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return IncrementSeries(np.concatenate(pieces), stride, stride * path.step_seconds, offsets)


CutoffLike = Union[float, Sequence[float], np.ndarray]


def _per_increment_cutoff(incs: IncrementSeries, u: CutoffLike) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        if not u > 0:
            raise ConfigError(f"cutoff must be positive, got {float(u)}")
        return u
    if u.shape != (incs.n_days,):
        raise ConfigError(f"expected {incs.n_days} per-day cutoffs, got shape {u.shape}")
    if np.any(~(u > 0)):
        raise ConfigError("per-day cutoffs must be positive")
    return np.repeat(u, incs.day_counts)


def truncated_power_variation(incs: IncrementSeries, p: float, u: CutoffLike) -> float:
    """Sum of ``|x|**p`` over increments with ``|x| <= u``.

    ``u`` may be a scalar or one cutoff per day of the series.
    """
    if not p > 0:
        raise ConfigError(f"power must be positive, got {p}")
    bound = _per_increment_cutoff(incs, u)
    a = np.abs(incs.values)
    keep = a <= bound
    return float(np.sum(a[keep] ** p))


def exceedance_count(incs: IncrementSeries, u: CutoffLike) -> int:
    """Number of increments with ``|x| > u``."""
    bound = _per_increment_cutoff(incs, u)
    return int(np.count_nonzero(np.abs(incs.values) > bound))


def estimate_integrated_volatility(path: SampledPath, alpha: float, varpi: float) -> float:
    """Truncated realized variance with cutoff ``alpha * Delta**varpi``.

    ``Delta`` is the step in years, so the result estimates the integrated
    variance of the continuous part over the path in log-price units.
    """
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    if not 0 < varpi < 0.5:
        raise ConfigError(f"varpi must lie in (0, 1/2), got {varpi}")
    return truncated_power_variation(increments(path, 1), 2.0, alpha * path.step_years ** varpi)


# -- truncation specifications -------------------------------------------------


@dataclass(frozen=True)
class VolMultiple:
    """Cutoff at ``alpha`` estimated standard deviations of the continuous part.

    The integrated variance is first estimated with the pilot cutoff
    ``alpha * Delta**varpi``; ``refine`` further passes re-truncate at the
    current ``alpha``-sigma level, which strips jump residue from the pilot.
    """

    alpha: float
    varpi: float = 0.49
    refine: int = 2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.varpi < 0.5:
            raise ConfigError(f"varpi must lie in (0, 1/2), got {self.varpi}")
        if self.refine < 0:
            raise ConfigError("refine must be nonnegative")


@dataclass(frozen=True)
class Percentile:
    """Cutoff leaving a fraction ``q`` of the increments above it."""

    q: float

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ConfigError(f"q must lie in (0, 1), got {self.q}")


@dataclass(frozen=True)
class Absolute:
    u: float

    def __post_init__(self):
        if not self.u > 0:
            raise ConfigError(f"absolute cutoff must be positive, got {self.u}")


TruncationSpec = Union[VolMultiple, Percentile, Absolute]


class CutoffSpan(NamedTuple):
    days: range
    u: float


def _span_cutoff(path: SampledPath, spec, span: range) -> float:
    sub = path.select_days(span)
    if isinstance(spec, Absolute):
        return spec.u
    try:
        incs = increments(sub, 1)
    except EmptySeriesError:
        raise DegenerateCutoffError("no increments", span=(span.start, span.stop - 1)) from None
    a = np.abs(incs.values)
    if isinstance(spec, Percentile):
        u = float(np.quantile(a, 1.0 - spec.q))
        if not u > 0:
            raise DegenerateCutoffError("percentile cutoff is zero", span=(span.start, span.stop - 1))
        return u
    n = a.size
    iv = estimate_integrated_volatility(sub, spec.alpha, spec.varpi)
    for _ in range(spec.refine):
        if iv <= 0:
            break
        u = spec.alpha * np.sqrt(iv / n)
        iv = float(np.sum(a[a <= u] ** 2))
    if not iv > 0:
        raise DegenerateCutoffError("integrated variance estimate is zero", span=(span.start, span.stop - 1))
    t_span = n * sub.step_years
    return float(spec.alpha * np.sqrt(iv / t_span) * np.sqrt(sub.step_years))


def resolve_cutoff(path: SampledPath, spec: TruncationSpec, per_day: bool = False) -> list:
    """Turn a truncation spec into concrete ``(days, u)`` pairs."""
    if per_day:
        spans = [range(d, d + 1) for d in range(path.n_days)]
    else:
        spans = [range(path.n_days)]
    return [CutoffSpan(span, _span_cutoff(path, spec, span)) for span in spans]


def cutoff_per_day(spans, n_days) -> np.ndarray:
    """Expand ``resolve_cutoff`` output into one cutoff per day."""
    u = np.empty(n_days)
    for span in spans:
        u[span.days.start:span.days.stop] = span.u
    return u
