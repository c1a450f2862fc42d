"""Ground-truth path simulation.

The data generating process is

    dX = sigma_t dW + theta dY + b dt,   sigma_t = sqrt(v_t),
    dv = xi (eta - v) dt + phi sqrt(v) dB + dJ,   corr(dW, dB) = rho,

with ``Y`` a standard symmetric ``beta``-stable Levy process (scale 1 per
year) and ``J`` a compound Poisson process whose jumps, uniform on
``[-bound, bound]``, are applied as ``v <- max(v + jump * eta, 0)``.

Time is measured in years; trading days last ``SECONDS_PER_DAY`` seconds and
follow each other without an overnight gap, so each simulated day holds
``SECONDS_PER_DAY / step + 1`` observations and its open repeats the previous
close.  Variance is discretized by full-truncation Euler on ``substeps``
internal steps per observation; stable increments are drawn exactly at the
observation step.

Each path owns a Philox (counter-based) generator keyed by
``(seed, path_index)``, so a path never depends on which worker drew it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from .errors import CalibrationError, ConfigError
from .hypotheses import HypothesisLabel
from .variation import SECONDS_PER_DAY, SampledPath, seconds_to_years


@dataclass(frozen=True)
class SVJumpModel:
    """Stochastic variance with leverage and variance jumps (annualized)."""

    eta: float = 0.25**2
    xi: float = 5.0
    phi: float = 0.5
    rho: float = -0.5
    vol_jump_intensity: float = 2.0  # per year
    vol_jump_bound: float = 0.30
    v0: Optional[float] = None  # defaults to eta
    x0: float = 1.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.xi < 0 or self.phi < 0 or self.vol_jump_intensity < 0:
            raise ConfigError("xi, phi and vol_jump_intensity must be nonnegative")
        if not -1 <= self.rho <= 1:
            raise ConfigError("rho must lie in [-1, 1]")
        if self.v0 is not None and not self.v0 > 0:
            raise ConfigError("v0 must be positive")

    @property
    def initial_variance(self):
        return self.eta if self.v0 is None else self.v0

    @classmethod
    def constant(cls, sigma: float, x0: float = 1.0) -> "SVJumpModel":
        """Constant volatility ``sigma`` (no mean reversion, no vol jumps)."""
        return cls(eta=sigma**2, xi=0.0, phi=0.0, rho=0.0, vol_jump_intensity=0.0, x0=x0)


@dataclass(frozen=True)
class StableDriver:
    beta: float = 1.0
    theta: float = 1.0
    drift: float = 0.0

    def __post_init__(self):
        if not 0 < self.beta < 2:
            raise ConfigError(f"beta must lie in (0, 2), got {self.beta}")
        if self.theta < 0:
            raise ConfigError("theta must be nonnegative")

    @property
    def intensity(self):
        """Aggregate small-jump intensity ``A`` (per year) of ``theta * Y``.

        The Levy density of ``theta * Y`` on each side is
        ``beta * a / |x|**(1+beta)`` with ``a = C * theta**beta`` and
        ``C = Gamma(beta) sin(pi beta / 2) / pi`` (so ``P(theta Y_1 > x)`` is
        about ``a / x**beta``); ``A`` is the sum of both sides, ``2 a``.
        """
        c = math.gamma(self.beta) * math.sin(math.pi * self.beta / 2) / math.pi
        return 2.0 * c * self.theta**self.beta


@dataclass(frozen=True)
class PathRecipe:
    include_brownian: bool = True
    sv: Optional[SVJumpModel] = None
    stable: Optional[StableDriver] = None
    horizon_days: int = 21
    step_seconds: float = 5.0
    seed: int = 0
    substeps: int = 5

    def __post_init__(self):
        if not (self.include_brownian or self.stable is not None):
            raise ConfigError("a recipe needs a Brownian part, a stable driver, or both")
        if self.horizon_days < 1:
            raise ConfigError("horizon_days must be >= 1")
        steps = SECONDS_PER_DAY / self.step_seconds
        if not self.step_seconds > 0 or abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"step_seconds must divide a {SECONDS_PER_DAY:.0f}s day")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")

    @property
    def model(self) -> SVJumpModel:
        return self.sv if self.sv is not None else SVJumpModel()

    @property
    def steps_per_day(self) -> int:
        return int(round(SECONDS_PER_DAY / self.step_seconds))

    @property
    def n_steps(self) -> int:
        return self.steps_per_day * self.horizon_days

    @property
    def step_years(self) -> float:
        return seconds_to_years(self.step_seconds)

    def label(self) -> HypothesisLabel:
        infinite = self.stable is not None and self.stable.theta > 0
        return HypothesisLabel.build(self.include_brownian, infinite)

    def with_theta(self, theta: float) -> "PathRecipe":
        return replace(self, stable=replace(self.stable or StableDriver(), theta=theta))


@dataclass
class GroundTruth:
    label: HypothesisLabel
    integrated_variance: float
    continuous_qv: float
    jump_qv: float
    abar: float
    theta: float
    beta: Optional[float]
    extra: dict = field(default_factory=dict)

    @property
    def jump_qv_share(self):
        total = self.continuous_qv + self.jump_qv
        return self.jump_qv / total if total > 0 else float("nan")

    def as_dict(self):
        return {
            "label": self.label.names(),
            "integrated_variance": self.integrated_variance,
            "continuous_qv": self.continuous_qv,
            "jump_qv": self.jump_qv,
            "jump_qv_share": self.jump_qv_share,
            "abar": self.abar,
            "theta": self.theta,
            "beta": self.beta,
        }


def path_rng(seed: int, path_index: int = 0) -> np.random.Generator:
    """Counter-based generator for path ``path_index`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_stable(beta: float, scale, size=None, rng: np.random.Generator = None):
    """Symmetric ``beta``-stable draws by Chambers-Mallows-Stuck."""
    if not 0 < beta < 2:
        raise ConfigError(f"beta must lie in (0, 2), got {beta}")
    rng = np.random.default_rng() if rng is None else rng
    v = math.pi * (rng.random(size) - 0.5)
    if beta == 1.0:
        return scale * np.tan(v)
    w = rng.standard_exponential(size)
    x = np.sin(beta * v) / np.cos(v) ** (1.0 / beta) * (np.cos((1.0 - beta) * v) / w) ** ((1.0 - beta) / beta)
    return scale * x


def sample_stable_increment(beta: float, scale: float, rng: np.random.Generator) -> float:
    if not scale > 0:
        raise ConfigError("scale must be positive")
    return float(sample_stable(beta, scale, None, rng))


@njit(cache=True)
def _sv_kernel(zb, zp, n_steps, n_sub, dt, v0, eta, xi, phi, rho, jump_step, jump_size, keep_shocks):
    cont = np.empty(n_steps)
    iv = np.empty(n_steps)
    if keep_shocks:
        dw_out = np.empty(n_steps)
        db_out = np.empty(n_steps)
    else:
        dw_out = np.empty(0)
        db_out = np.empty(0)
    sdt = math.sqrt(dt)
    rho_perp = math.sqrt(max(1.0 - rho * rho, 0.0))
    v = v0
    j = 0
    n_jumps = jump_step.size
    for i in range(n_steps):
        acc = 0.0
        acc_iv = 0.0
        sw = 0.0
        sb = 0.0
        for s in range(n_sub):
            idx = i * n_sub + s
            vp = v if v > 0.0 else 0.0
            sq = math.sqrt(vp)
            db = zb[idx] * sdt
            dw = rho * db + rho_perp * zp[idx] * sdt
            acc += sq * dw
            acc_iv += vp * dt
            sw += dw
            sb += db
            v = v + xi * (eta - vp) * dt + phi * sq * db
        while j < n_jumps and jump_step[j] == i:
            v = v + jump_size[j] * eta
            if v < 0.0:
                v = 0.0
            j += 1
        cont[i] = acc
        iv[i] = acc_iv
        if keep_shocks:
            dw_out[i] = sw
            db_out[i] = sb
    return cont, iv, dw_out, db_out


def _simulate_continuous(recipe: PathRecipe, rng: np.random.Generator, keep_shocks=False):
    m = recipe.model
    n, sub = recipe.n_steps, recipe.substeps
    dt = recipe.step_years / sub
    zb = rng.standard_normal(n * sub)
    zp = rng.standard_normal(n * sub)
    horizon = n * recipe.step_years
    n_jumps = rng.poisson(m.vol_jump_intensity * horizon) if m.vol_jump_intensity > 0 else 0
    jump_step = np.sort(rng.integers(0, n, size=n_jumps)).astype(np.int64)
    jump_size = rng.uniform(-m.vol_jump_bound, m.vol_jump_bound, size=n_jumps)
    return _sv_kernel(zb, zp, n, sub, dt, m.initial_variance, m.eta, m.xi, m.phi, m.rho,
                      jump_step, jump_size, keep_shocks)


def _layout(recipe: PathRecipe, step_increments: np.ndarray, x0: float):
    """Cumulate increments and repeat each close as the next day's open."""
    spd = recipe.steps_per_day
    days = step_increments.reshape(recipe.horizon_days, spd)
    levels = x0 + np.cumsum(days.ravel()).reshape(days.shape)
    opens = np.concatenate(([x0], levels[:-1, -1]))
    obs = np.concatenate((opens[:, None], levels), axis=1).ravel()
    offsets = np.arange(recipe.horizon_days) * (spd + 1)
    return obs, offsets


def simulate_path(recipe: PathRecipe, path_index: int = 0, *, keep_shocks: bool = False):
    """Simulate one path; returns ``(SampledPath, GroundTruth)``."""
    rng = path_rng(recipe.seed, path_index)
    n = recipe.n_steps
    total = np.zeros(n)
    cont_qv = iv_total = 0.0
    extra = {}
    if recipe.include_brownian:
        cont, iv, dw, db = _simulate_continuous(recipe, rng, keep_shocks)
        total += cont
        cont_qv = float(np.dot(cont, cont))
        iv_total = float(iv.sum())
        if keep_shocks:
            extra.update(dw=dw, db=db)
    jump_qv = abar = 0.0
    theta, beta = 0.0, None
    if recipe.stable is not None:
        st = recipe.stable
        theta, beta = st.theta, st.beta
        if st.theta > 0:
            scale = st.theta * recipe.step_years ** (1.0 / st.beta)
            jumps = sample_stable(st.beta, scale, n, rng)
            total += jumps
            jump_qv = float(np.dot(jumps, jumps))
            abar = st.intensity * n * recipe.step_years
        if st.drift:
            total += st.drift * recipe.step_years
    obs, offsets = _layout(recipe, total, recipe.model.x0)
    truth = GroundTruth(recipe.label(), iv_total, cont_qv, jump_qv, abar, theta, beta, extra)
    path = SampledPath(recipe.step_seconds, obs, offsets,
                       {"path_index": path_index, "seed": recipe.seed, "truth": truth.as_dict()})
    return path, truth


def add_noise(path: SampledPath, scale: float, rng: np.random.Generator) -> SampledPath:
    """Observed = path + iid N(0, scale**2) noise at every grid point."""
    noisy = path.observations + scale * rng.standard_normal(path.observations.size)
    return path.with_observations(noisy, noise_scale=scale)


# -- jump scale calibration ----------------------------------------------------


def _stable_upper_quantile(beta: float, prob: float) -> float:
    """``x`` with ``P(|S| > x) = prob`` for a standard symmetric stable ``S``."""
    if beta == 1.0:
        return math.tan(math.pi * (1.0 - prob) / 2.0)
    from scipy.stats import levy_stable

    x = float(levy_stable.isf(prob / 2.0, beta, 0.0))
    if not np.isfinite(x) or x <= 0:
        raise CalibrationError(f"stable quantile unavailable for beta={beta}, P={prob}")
    return x


def calibrate_theta_tail(target_P: float, eta: float, step_seconds: float, beta: float = 1.0) -> float:
    """``theta`` with ``P(|theta dY| >= 4 sqrt(eta) sqrt(Delta)) = target_P``.

    ``dY`` is the stable increment over one observation step.
    """
    if not 0 < target_P < 1:
        raise CalibrationError(f"target tail probability must lie in (0, 1), got {target_P}")
    delta = seconds_to_years(step_seconds)
    threshold = 4.0 * math.sqrt(eta) * math.sqrt(delta)
    x = _stable_upper_quantile(beta, target_P)
    if not x > 0:
        raise CalibrationError(f"no theta reaches tail probability {target_P}")
    return threshold / (delta ** (1.0 / beta) * x)


def stable_tail_probability(theta: float, eta: float, step_seconds: float, beta: float = 1.0) -> float:
    delta = seconds_to_years(step_seconds)
    threshold = 4.0 * math.sqrt(eta) * math.sqrt(delta)
    x = threshold / (theta * delta ** (1.0 / beta))
    if beta == 1.0:
        return 1.0 - 2.0 / math.pi * math.atan(x)
    from scipy.stats import levy_stable

    return float(2.0 * levy_stable.sf(x, beta, 0.0))


@dataclass
class QVShareSample:
    """Per-path ingredients of the jump share of realized QV at unit ``theta``."""

    continuous_qv: np.ndarray
    unit_jump_qv: np.ndarray

    def share(self, theta: float) -> float:
        j = theta**2 * self.unit_jump_qv
        return float(np.mean(j / (j + self.continuous_qv)))


def qv_share_sample(model: SVJumpModel, beta: float, horizon_days: int, step_seconds: float,
                    n_paths: int = 200, seed: int = 20_100) -> QVShareSample:
    base = PathRecipe(True, model, StableDriver(beta, 1.0), horizon_days, step_seconds, seed)
    cont = np.empty(n_paths)
    unit = np.empty(n_paths)
    for i in range(n_paths):
        _, truth = simulate_path(base, i)
        cont[i] = truth.continuous_qv
        unit[i] = truth.jump_qv
    return QVShareSample(cont, unit)


def calibrate_theta_qv_share(target_share: float, model: SVJumpModel, beta: float = 1.0,
                             horizon_days: int = 21, step_seconds: float = 5.0, *,
                             n_paths: int = 200, seed: int = 20_100,
                             sample: QVShareSample = None) -> float:
    """``theta`` whose ensemble-mean jump share of realized QV hits the target.

    The share is measured at the observation step with common random numbers,
    so the map ``theta -> share`` is deterministic and increasing.
    """
    if not 0 < target_share < 1:
        raise CalibrationError(f"target share must lie in (0, 1), got {target_share}")
    from scipy.optimize import brentq

    if sample is None:
        sample = qv_share_sample(model, beta, horizon_days, step_seconds, n_paths, seed)
    f = lambda log_theta: sample.share(math.exp(log_theta)) - target_share  # noqa: E731
    lo, hi = -20.0, 20.0
    if not f(lo) < 0 < f(hi):
        raise CalibrationError(f"share {target_share} is not bracketed by theta in [e^{lo}, e^{hi}]")
    return math.exp(brentq(f, lo, hi, xtol=1e-12))
