"""The two tests for a Brownian component.

Test 1 (null: Brownian present) compares truncated ``p``-th power variations
at strides 1 and ``k``; under the null the ratio tends to ``k**(1 - p/2)``.
Test 2 (null: Brownian absent, infinite jump activity) combines truncated
quadratic variations and exceedance counts at cutoffs ``u`` and ``gamma*u``;
under the null the statistic tends to ``gamma**2``.  Both reject when the
statistic falls below its null limit minus ``z_a`` standard errors.

Multi-day paths are handled by summing per-day variations; with a
``VolMultiple`` truncation the cutoff is calibrated separately for each day.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateStatisticError, RateConditionError
from .specialfn import n_factor, normal_quantile
from .variation import (
    Absolute,
    Percentile,
    SampledPath,
    TruncationSpec,
    VolMultiple,
    cutoff_per_day,
    exceedance_count,
    increments,
    resolve_cutoff,
    truncated_power_variation,
)

# -- rate conditions -----------------------------------------------------------


@dataclass(frozen=True)
class RateCheck:
    passed: bool
    explanation: str
    interval: tuple  # admissible (low, high) for varpi

    def __bool__(self):
        return self.passed


def validate_rate_conditions(kind: str, beta0: float, varpi: float, p: Optional[float] = None) -> RateCheck:
    """Check the tuning window for ``u = alpha * Delta**varpi``.

    ``kind`` is ``"test-1"`` (needs ``p``) or ``"test-2"``.
    """
    if kind == "test-1":
        if p is None:
            raise ConfigError("test-1 rate check needs p")
        lo = (p - 1) / (2 * p - 2 * beta0) if p != beta0 else math.inf
        hi = (p - 1) / p
        interval = (lo, hi)
        if not 0 < beta0 < 1:
            return RateCheck(False, f"beta0={beta0} must lie in (0, 1) for test 1", interval)
        if not 2 * beta0 < p < 2:
            return RateCheck(False, f"p={p} must lie in (2*beta0, 2) = ({2 * beta0:g}, 2)", interval)
        if not lo < varpi < hi:
            return RateCheck(False, f"varpi={varpi} outside ({lo:.6g}, {hi:.6g})", interval)
        return RateCheck(True, f"varpi={varpi} inside ({lo:.6g}, {hi:.6g})", interval)
    if kind == "test-2":
        b = beta0
        hi = min(1 / (2 + b), 2 / (5 * b), (2 - b) / (3 * b)) if 0 < b < 2 else 0.0
        interval = (0.0, hi)
        if not 1 <= beta0 < 2:
            return RateCheck(False, f"beta0={beta0} must lie in [1, 2) for test 2", interval)
        if not 0 < varpi < hi:
            return RateCheck(False, f"varpi={varpi} outside (0, {hi:.6g})", interval)
        return RateCheck(True, f"varpi={varpi} inside (0, {hi:.6g})", interval)
    raise ConfigError(f"unknown test kind {kind!r}")


# -- shared plumbing -----------------------------------------------------------


def _cutoffs(path: SampledPath, truncation: TruncationSpec, per_day: Optional[bool]) -> np.ndarray:
    if per_day is None:
        per_day = isinstance(truncation, VolMultiple)
    return cutoff_per_day(resolve_cutoff(path, truncation, per_day), path.n_days)


def _check_level(level):
    if not 0 < level < 1:
        raise ConfigError(f"level must lie in (0, 1), got {level}")


def _rate_varpi(truncation, varpi):
    if varpi is not None:
        return varpi
    if isinstance(truncation, VolMultiple):
        return truncation.varpi
    raise ConfigError("beta0 given but no varpi to validate: set cfg.varpi")


def _u_summary(u):
    u = np.asarray(u, dtype=float)
    return float(u) if u.ndim == 0 else u.tolist()


# -- test 1 --------------------------------------------------------------------


@dataclass(frozen=True)
class BrownianNullConfig:
    p: float = 1.5
    k: int = 2
    truncation: TruncationSpec = field(default_factory=lambda: VolMultiple(7.0))
    level: float = 0.05
    beta0: Optional[float] = None
    varpi: Optional[float] = None
    per_day: Optional[bool] = None
    allow_rate_violation: bool = False

    def __post_init__(self):
        if not 1 < self.p < 2:
            raise ConfigError(f"p must lie in (1, 2), got {self.p}")
        if int(self.k) != self.k or self.k < 2:
            raise ConfigError(f"k must be an integer >= 2, got {self.k}")
        _check_level(self.level)

    def rate_check(self) -> Optional[RateCheck]:
        if self.beta0 is None:
            return None
        return validate_rate_conditions("test-1", self.beta0, _rate_varpi(self.truncation, self.varpi), self.p)


@dataclass
class BrownianNullResult:
    s_n: float
    v_n: float
    null_limit: float
    critical_value: float
    z_score: float
    reject: bool
    level: float
    diagnostics: dict = field(default_factory=dict)

    def recompute_reject(self) -> bool:
        crit = self.null_limit - normal_quantile(self.level) * math.sqrt(self.v_n)
        return self.s_n < crit

    def to_dict(self):
        return asdict(self)


def s_statistic(path: SampledPath, p: float, k: int, u, *, _diag: dict = None) -> float:
    """Ratio of truncated ``p``-variations at strides 1 and ``k``."""
    fine = truncated_power_variation(increments(path, 1), p, u)
    coarse = truncated_power_variation(increments(path, k), p, u)
    if _diag is not None:
        _diag.update(b_fine=fine, b_coarse=coarse)
    if coarse == 0:
        raise DegenerateStatisticError(f"B(p={p}, u, {k}*Delta) is zero", factor="b_coarse")
    if fine == 0:
        raise DegenerateStatisticError(f"B(p={p}, u, Delta) is zero", factor="b_fine")
    return fine / coarse


def v_n(path: SampledPath, p: float, k: int, u, *, _diag: dict = None) -> float:
    """Estimated variance of ``s_statistic``."""
    incs = increments(path, 1)
    bp = truncated_power_variation(incs, p, u)
    if bp == 0:
        raise DegenerateStatisticError(f"B(p={p}, u, Delta) is zero", factor="b_fine")
    b2p = truncated_power_variation(incs, 2 * p, u)
    if _diag is not None:
        _diag.update(b_2p=b2p, n_kept=len(incs) - exceedance_count(incs, u), n_increments=len(incs))
    return n_factor(p, k) * b2p / bp**2


def test_brownian_null(path: SampledPath, cfg: BrownianNullConfig) -> BrownianNullResult:
    """Test ``H0: Brownian present`` against pure-jump infinite activity."""
    check = cfg.rate_check()
    if check is not None and not check and not cfg.allow_rate_violation:
        raise RateConditionError(check)
    u = _cutoffs(path, cfg.truncation, cfg.per_day)
    diag = {"u": _u_summary(u)}
    s = s_statistic(path, cfg.p, cfg.k, u, _diag=diag)
    v = v_n(path, cfg.p, cfg.k, u, _diag=diag)
    if not v > 0:
        raise DegenerateStatisticError("V_n is zero", factor="v_n")
    limit = cfg.k ** (1 - cfg.p / 2)
    crit = limit - normal_quantile(cfg.level) * math.sqrt(v)
    z = (s - limit) / math.sqrt(v)
    if check is not None:
        diag["rate_check"] = check.explanation
    return BrownianNullResult(s, v, limit, crit, z, bool(s < crit), cfg.level, diag)


test_brownian_null.__test__ = False  # keep pytest from collecting it


# -- test 2 --------------------------------------------------------------------


@dataclass(frozen=True)
class NoBrownianNullConfig:
    gamma: float = 2.0
    truncation: TruncationSpec = field(default_factory=lambda: Percentile(0.01))
    level: float = 0.05
    beta0: Optional[float] = None
    varpi: Optional[float] = None
    per_day: Optional[bool] = None
    allow_rate_violation: bool = False

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigError(f"gamma must exceed 1, got {self.gamma}")
        _check_level(self.level)

    def rate_check(self) -> Optional[RateCheck]:
        if self.beta0 is None:
            return None
        return validate_rate_conditions("test-2", self.beta0, _rate_varpi(self.truncation, self.varpi))


@dataclass
class NoBrownianNullResult:
    s_prime_n: float
    v_prime_n: float
    null_limit: float
    critical_value: float
    z_score: float
    reject: bool
    level: float
    diagnostics: dict = field(default_factory=dict)

    def recompute_reject(self) -> bool:
        crit = self.null_limit - normal_quantile(self.level) * math.sqrt(self.v_prime_n)
        return self.s_prime_n < crit

    def to_dict(self):
        return asdict(self)


def _two_level_ingredients(path: SampledPath, gamma: float, u):
    incs = increments(path, 1)
    gu = gamma * np.asarray(u, dtype=float)
    return {
        "b2_u": truncated_power_variation(incs, 2.0, u),
        "b2_gu": truncated_power_variation(incs, 2.0, gu),
        "b4_u": truncated_power_variation(incs, 4.0, u),
        "b4_gu": truncated_power_variation(incs, 4.0, gu),
        "u_u": exceedance_count(incs, u),
        "u_gu": exceedance_count(incs, gu),
    }


def _require_nonzero(ing, names):
    for name in names:
        if ing[name] == 0:
            raise DegenerateStatisticError(f"{name} is zero", factor=name)


def s_prime_statistic(path: SampledPath, gamma: float, u, *, _ing: dict = None) -> float:
    """``B(2, gu) U(u) / (B(2, u) U(gu))`` with ``gu = gamma * u``."""
    ing = _ing if _ing is not None else _two_level_ingredients(path, gamma, u)
    _require_nonzero(ing, ("b2_u", "u_gu"))
    return ing["b2_gu"] * ing["u_u"] / (ing["b2_u"] * ing["u_gu"])


def v_prime_n(path: SampledPath, gamma: float, u, *, _ing: dict = None) -> float:
    """Estimated variance of ``s_prime_statistic``."""
    ing = _ing if _ing is not None else _two_level_ingredients(path, gamma, u)
    _require_nonzero(ing, ("b2_u", "b2_gu", "u_u", "u_gu"))
    low = ing["b4_u"] / ing["b2_u"] ** 2 + 1.0 / ing["u_u"]
    high = ing["b4_gu"] / ing["b2_gu"] ** 2 + 1.0 / ing["u_gu"]
    return gamma**4 * (low + (1.0 - 2.0 / gamma**2) * high)


def test_nobrownian_null(path: SampledPath, cfg: NoBrownianNullConfig) -> NoBrownianNullResult:
    """Test ``H0: no Brownian, infinite activity`` against Brownian present."""
    check = cfg.rate_check()
    if check is not None and not check and not cfg.allow_rate_violation:
        raise RateConditionError(check)
    u = _cutoffs(path, cfg.truncation, cfg.per_day)
    ing = _two_level_ingredients(path, cfg.gamma, u)
    s = s_prime_statistic(path, cfg.gamma, u, _ing=ing)
    v = v_prime_n(path, cfg.gamma, u, _ing=ing)
    if not v > 0:
        raise DegenerateStatisticError("V'_n is not positive", factor="v_prime_n")
    limit = cfg.gamma**2
    crit = limit - normal_quantile(cfg.level) * math.sqrt(v)
    diag = dict(ing, u=_u_summary(u))
    if check is not None:
        diag["rate_check"] = check.explanation
    return NoBrownianNullResult(s, v, limit, crit, (s - limit) / math.sqrt(v), bool(s < crit), cfg.level, diag)


test_nobrownian_null.__test__ = False


def make_truncation(mode: str, value: float, varpi: float = 0.49) -> TruncationSpec:
    """Build a truncation spec from CLI-style ``mode``/``value`` pairs."""
    if mode in ("vol", "vol-multiple"):
        return VolMultiple(value, varpi)
    if mode in ("percentile", "pct"):
        return Percentile(value)
    if mode in ("absolute", "abs"):
        return Absolute(value)
    raise ConfigError(f"unknown truncation mode {mode!r}")
