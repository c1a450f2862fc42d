"""Monte Carlo experiments: rejection tables, limit curves, standardized samples.

An experiment simulates ``n_paths`` paths from a recipe and evaluates one of
the two tests at every point of a parameter grid.  Each path is simulated once
and reused for all grid points.  Paths are seeded by ``(recipe.seed,
path_index)`` and aggregated in index order, so results do not depend on how
many worker processes share the work.

Grid keys understood by the sweep:

``p``, ``k``
    power and stride of test 1.
``gamma``
    cutoff ratio of test 2.
``alpha``
    absolute cutoff ``alpha * sqrt(eta) * sqrt(Delta)`` with ``eta`` the
    long-run variance of the recipe's volatility model.
``vol_alpha``
    data-driven ``VolMultiple(vol_alpha)`` cutoff.
``q``
    ``Percentile(q)`` cutoff.

Powers of test 1 outside ``(1, 2)`` have no standardization; such grid points
report the statistic only.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import platform
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import stats

from .errors import ConfigError, DegenerateStatisticError
from .inference import (
    BrownianNullConfig,
    NoBrownianNullConfig,
    s_statistic,
    test_brownian_null,
    test_nobrownian_null,
)
from .simlab import PathRecipe, add_noise, simulate_path
from .specialfn import normal_quantile
from .variation import Absolute, Percentile, VolMultiple, cutoff_per_day, resolve_cutoff, seconds_to_years

SCHEMA_VERSION = 1
DEGENERATE_WARN_FRACTION = 0.10
GRID_KEYS = ("p", "k", "gamma", "alpha", "vol_alpha", "q")


@dataclass(frozen=True)
class Profile:
    horizon_days: int
    n_paths: int


PROFILES = {"quick": Profile(5, 300), "paper": Profile(21, 1000)}


def alpha_cutoff(alpha: float, eta: float, step_seconds: float) -> Absolute:
    """Absolute cutoff ``alpha * sqrt(eta) * sqrt(Delta)`` (``Delta`` in years)."""
    return Absolute(alpha * math.sqrt(eta) * math.sqrt(seconds_to_years(step_seconds)))


TestConfig = Union[BrownianNullConfig, NoBrownianNullConfig]


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment.

    Parameters
    ----------
    recipe : PathRecipe
        Data generating process; ``recipe.seed`` is the master seed.
    test : BrownianNullConfig or NoBrownianNullConfig
        Template; grid values override its fields.
    n_paths : int
    sweep : mapping
        Grid axes, e.g. ``{"p": [1.25, 1.5], "alpha": [5, 7]}``.  The grid is
        the Cartesian product in insertion order.  An empty sweep evaluates
        the template once.
    levels : sequence of float
        Nominal levels tabulated in the rejection table.
    noise_scale : float
        Standard deviation of an additive iid noise overlay (0 disables it).
    workers : int
        Worker processes; 1 runs inline.
    """

    recipe: PathRecipe
    test: TestConfig = field(default_factory=BrownianNullConfig)
    n_paths: int = 1000
    sweep: Mapping[str, Sequence] = field(default_factory=dict)
    levels: Sequence[float] = (0.05, 0.10)
    noise_scale: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if not isinstance(self.test, (BrownianNullConfig, NoBrownianNullConfig)):
            raise ConfigError("test must be a BrownianNullConfig or NoBrownianNullConfig")
        unknown = set(self.sweep) - set(GRID_KEYS)
        if unknown:
            raise ConfigError(f"unknown sweep keys {sorted(unknown)}; expected a subset of {GRID_KEYS}")
        for key, values in self.sweep.items():
            if len(values) == 0:
                raise ConfigError(f"sweep axis {key!r} is empty")
        if sum(k in self.sweep for k in ("alpha", "vol_alpha", "q")) > 1:
            raise ConfigError("sweep at most one of alpha, vol_alpha, q")
        if not self.levels or any(not 0 < a < 1 for a in self.levels):
            raise ConfigError("levels must be a non-empty list of values in (0, 1)")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.is_test1 and "gamma" in self.sweep:
            raise ConfigError("gamma belongs to test 2")
        if not self.is_test1 and ({"p", "k"} & set(self.sweep)):
            raise ConfigError("p and k belong to test 1")

    @property
    def is_test1(self) -> bool:
        return isinstance(self.test, BrownianNullConfig)

    def grid(self) -> list:
        keys = list(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    @classmethod
    def from_profile(cls, profile: str, recipe: PathRecipe, **kwargs) -> "ExperimentConfig":
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        prof = PROFILES[profile]
        kwargs.setdefault("n_paths", prof.n_paths)
        return cls(replace(recipe, horizon_days=prof.horizon_days), **kwargs)

    def to_dict(self) -> dict:
        """Configuration echo; ``workers`` is left out since it never changes results."""
        d = _jsonable(self)
        d.pop("workers")
        return d


# -- evaluation ----------------------------------------------------------------


@dataclass(frozen=True)
class _Probe:
    """Concrete test settings at one grid point."""

    point: dict
    test1: bool
    p: float
    k: int
    gamma: float
    truncation: object
    standardized: bool

    def null_limit(self):
        return self.k ** (1 - self.p / 2) if self.test1 else self.gamma**2


def _probes(cfg: ExperimentConfig) -> list:
    t = cfg.test
    eta = cfg.recipe.model.eta
    out = []
    for point in cfg.grid():
        trunc = t.truncation
        if "alpha" in point:
            trunc = alpha_cutoff(point["alpha"], eta, cfg.recipe.step_seconds)
        elif "vol_alpha" in point:
            base = trunc if isinstance(trunc, VolMultiple) else VolMultiple(7.0)
            trunc = replace(base, alpha=point["vol_alpha"])
        elif "q" in point:
            trunc = Percentile(point["q"])
        if cfg.is_test1:
            p, k = float(point.get("p", t.p)), int(point.get("k", t.k))
            out.append(_Probe(point, True, p, k, math.nan, trunc, 1 < p < 2))
        else:
            out.append(_Probe(point, False, math.nan, 0, float(point.get("gamma", t.gamma)), trunc, True))
    return out


def _evaluate(path, probe: _Probe, template: TestConfig):
    """``(statistic, z)``; ``z`` is NaN for statistic-only probes."""
    if probe.test1 and not probe.standardized:
        per_day = template.per_day
        if per_day is None:
            per_day = isinstance(probe.truncation, VolMultiple)
        u = cutoff_per_day(resolve_cutoff(path, probe.truncation, per_day), path.n_days)
        return s_statistic(path, probe.p, probe.k, u), math.nan
    if probe.test1:
        res = test_brownian_null(path, replace(template, p=probe.p, k=probe.k, truncation=probe.truncation,
                                               allow_rate_violation=True))
        return res.s_n, res.z_score
    res = test_nobrownian_null(path, replace(template, gamma=probe.gamma, truncation=probe.truncation,
                                             allow_rate_violation=True))
    return res.s_prime_n, res.z_score


def _noise_rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index), 1))))


def _run_chunk(cfg: ExperimentConfig, start: int, stop: int):
    probes = _probes(cfg)
    stat = np.full((stop - start, len(probes)), np.nan)
    z = np.full_like(stat, np.nan)
    degenerate = np.zeros(stat.shape, dtype=bool)
    for row, i in enumerate(range(start, stop)):
        path, _ = simulate_path(cfg.recipe, i)
        if cfg.noise_scale > 0:
            path = add_noise(path, cfg.noise_scale, _noise_rng(cfg.recipe.seed, i))
        for col, probe in enumerate(probes):
            try:
                stat[row, col], z[row, col] = _evaluate(path, probe, cfg.test)
            except DegenerateStatisticError:
                degenerate[row, col] = True
    return stat, z, degenerate


@dataclass
class EnsembleSample:
    """Per-path statistics at every grid point (rows: paths, columns: grid)."""

    config: ExperimentConfig
    grid: list
    null_limits: np.ndarray
    standardized: np.ndarray
    statistic: np.ndarray
    z: np.ndarray
    degenerate: np.ndarray
    wall_seconds: float = 0.0

    @property
    def n_paths(self):
        return self.statistic.shape[0]

    def column(self, j):
        ok = ~self.degenerate[:, j]
        return self.statistic[ok, j], self.z[ok, j]


def run_ensemble(cfg: ExperimentConfig) -> EnsembleSample:
    """Simulate ``cfg.n_paths`` paths and evaluate every grid point."""
    probes = _probes(cfg)
    t0 = time.perf_counter()
    n, w = cfg.n_paths, min(cfg.workers, cfg.n_paths)
    if w == 1:
        parts = [_run_chunk(cfg, 0, n)]
    else:
        edges = np.linspace(0, n, 4 * w + 1).astype(int)
        bounds = [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=w) as pool:
            futures = [pool.submit(_run_chunk, cfg, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    stat, z, deg = (np.concatenate(x) for x in zip(*parts))
    return EnsembleSample(
        cfg, [p.point for p in probes],
        np.array([p.null_limit() for p in probes]),
        np.array([p.standardized for p in probes]),
        stat, z, deg, time.perf_counter() - t0,
    )


# -- rejection table -----------------------------------------------------------


@dataclass(frozen=True)
class RejectionRow:
    point: dict
    level: float
    rate: float
    se: float
    n_paths: int
    n_valid: int
    n_degenerate: int
    status: str  # "tested" or "statistic-only"

    @property
    def degenerate_warning(self) -> bool:
        return self.n_degenerate > DEGENERATE_WARN_FRACTION * self.n_paths


@dataclass
class RejectionTable:
    """Rejection rates keyed by ``(grid point, nominal level)``.

    Rates are computed over non-degenerate paths, with
    ``se = sqrt(rate * (1 - rate) / n_valid)``; a single path therefore gives
    a 0/1 rate with ``se = 0``.
    """

    rows: list
    grid_keys: tuple

    def lookup(self, level: float, **point) -> RejectionRow:
        for row in self.rows:
            if math.isclose(row.level, level) and all(
                    k in row.point and math.isclose(row.point[k], v) for k, v in point.items()):
                return row
        raise KeyError(f"no row at level={level}, {point}")

    @property
    def warnings(self):
        return [r for r in self.rows if r.degenerate_warning]

    def to_records(self):
        recs = []
        for r in self.rows:
            rec = {k: r.point.get(k, "") for k in self.grid_keys}
            rec.update(level=r.level, rate=r.rate, se=r.se, n_paths=r.n_paths, n_valid=r.n_valid,
                       n_degenerate=r.n_degenerate, degenerate_warning=int(r.degenerate_warning),
                       status=r.status)
            recs.append(rec)
        return recs

    def to_csv(self, target):
        _write_csv(target, self.to_records())


def _rejection_table(sample: EnsembleSample) -> RejectionTable:
    cfg = sample.config
    rows = []
    for j, point in enumerate(sample.grid):
        _, z = sample.column(j)
        n_deg = int(sample.degenerate[:, j].sum())
        for level in cfg.levels:
            if not sample.standardized[j]:
                rows.append(RejectionRow(point, level, math.nan, math.nan, sample.n_paths, z.size, n_deg,
                                         "statistic-only"))
                continue
            if z.size:
                rate = float(np.mean(z < -normal_quantile(level)))
                se = math.sqrt(rate * (1 - rate) / z.size)
            else:
                rate = se = math.nan
            rows.append(RejectionRow(point, level, rate, se, sample.n_paths, z.size, n_deg, "tested"))
    table = RejectionTable(rows, tuple(cfg.sweep))
    for r in table.warnings:
        warnings.warn(f"{r.n_degenerate}/{r.n_paths} degenerate paths at {r.point}", RuntimeWarning,
                      stacklevel=3)
    return table


def run_rejection_experiment(cfg: ExperimentConfig, *, sample: EnsembleSample = None) -> RejectionTable:
    """Tabulate rejection rates for every grid point and nominal level."""
    return _rejection_table(sample if sample is not None else run_ensemble(cfg))


# -- limit curves --------------------------------------------------------------


def theoretical_overlays(cfg: ExperimentConfig, point: dict) -> dict:
    """Reference limits of the non-standardized statistic at ``point``.

    ``applies`` names the overlay predicted for the recipe's hypothesis.
    """
    recipe, t = cfg.recipe, cfg.test
    beta = recipe.stable.beta if recipe.stable is not None and recipe.stable.theta > 0 else None
    drift = recipe.stable.drift if recipe.stable is not None else 0.0
    if cfg.is_test1:
        p, k = float(point.get("p", t.p)), int(point.get("k", t.k))
        out = {"k^(1-p/2)": k ** (1 - p / 2), "one": 1.0, "k^(1-p)": k ** (1 - p)}
        if beta is not None:
            out["k^(1-p/beta)"] = k ** (1 - p / beta)
        if recipe.include_brownian:
            applies = "k^(1-p/2)"
        elif beta is None:
            applies = "k^(1-p)" if drift else None
        elif drift and p <= 1:
            applies = "k^(1-p)"
        elif p > beta:
            applies = "one"
        else:
            applies = "k^(1-p/beta)"
    else:
        g = float(point.get("gamma", t.gamma))
        out = {"gamma^2": g**2}
        if beta is not None:
            out["gamma^beta"] = g**beta
        applies = "gamma^beta" if recipe.include_brownian and beta is not None else "gamma^2"
    out["applies"] = applies
    return out


@dataclass(frozen=True)
class CurvePoint:
    point: dict
    mean: float
    std: float
    n_valid: int
    overlays: dict

    @property
    def predicted(self):
        name = self.overlays.get("applies")
        return self.overlays[name] if name else math.nan


def run_limit_curves(cfg: ExperimentConfig, *, sample: EnsembleSample = None) -> list:
    """Ensemble mean and spread of the statistic with theoretical overlays."""
    sample = sample if sample is not None else run_ensemble(cfg)
    out = []
    for j, point in enumerate(sample.grid):
        s, _ = sample.column(j)
        mean = float(s.mean()) if s.size else math.nan
        std = float(s.std(ddof=1)) if s.size > 1 else math.nan
        out.append(CurvePoint(point, mean, std, int(s.size), theoretical_overlays(cfg, point)))
    return out


# -- standardized samples ------------------------------------------------------


@dataclass(frozen=True)
class NormalitySummary:
    point: dict
    mean: float
    variance: float
    skewness: float
    ks_distance: float
    n_valid: int
    z: np.ndarray = field(repr=False, compare=False)

    def to_record(self):
        return {"point": self.point, "mean": self.mean, "variance": self.variance,
                "skewness": self.skewness, "ks_distance": self.ks_distance, "n_valid": self.n_valid}


def normality_summary(z, point=None) -> NormalitySummary:
    z = np.asarray(z, dtype=float)
    if z.size < 3:
        nan = math.nan
        return NormalitySummary(point or {}, nan, nan, nan, nan, int(z.size), z)
    return NormalitySummary(point or {}, float(z.mean()), float(z.var(ddof=1)), float(stats.skew(z)),
                            float(stats.kstest(z, "norm").statistic), int(z.size), z)


def run_standardized_histograms(cfg: ExperimentConfig, *, sample: EnsembleSample = None) -> list:
    """Standardized statistics and their normality summary per grid point."""
    sample = sample if sample is not None else run_ensemble(cfg)
    out = []
    for j, point in enumerate(sample.grid):
        if not sample.standardized[j]:
            continue
        _, z = sample.column(j)
        out.append(normality_summary(z, point))
    return out


# -- output --------------------------------------------------------------------


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        d = {"type": type(obj).__name__}
        d.update({f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj)})
        return d
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, range)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_csv(target, records):
    if not records:
        raise ConfigError("nothing to write")
    with open(target, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(records[0]), lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})


def versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {"bmtest": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def write_experiment(out_dir, sample: EnsembleSample) -> dict:
    """Write ``rejection.csv``, ``curves.csv``, ``normality.csv``, ``manifest.json``.

    These files depend only on the configuration and seed.  Wall time goes to
    a separate ``timing.json`` so reruns stay byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = sample.config
    keys = tuple(cfg.sweep)
    table = run_rejection_experiment(cfg, sample=sample)
    table.to_csv(out / "rejection.csv")
    curves = run_limit_curves(cfg, sample=sample)
    crecs = []
    for c in curves:
        rec = {k: c.point.get(k, "") for k in keys}
        rec.update(mean=c.mean, std=c.std, n_valid=c.n_valid, predicted=c.predicted,
                   applies=c.overlays["applies"] or "")
        rec.update({f"overlay:{k}": v for k, v in c.overlays.items() if k != "applies"})
        crecs.append(rec)
    _write_csv(out / "curves.csv", crecs)
    norm = run_standardized_histograms(cfg, sample=sample)
    if norm:
        nrecs = []
        for s in norm:
            rec = {k: s.point.get(k, "") for k in keys}
            rec.update({k: v for k, v in s.to_record().items() if k != "point"})
            nrecs.append(rec)
        _write_csv(out / "normality.csv", nrecs)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "mc",
        "config": cfg.to_dict(),
        "seed": cfg.recipe.seed,
        "versions": versions(),
        "files": sorted(["rejection.csv", "curves.csv"] + (["normality.csv"] if norm else [])),
        "degenerate_warnings": [_jsonable(r.point) for r in table.warnings],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "timing.json").write_text(json.dumps({"wall_seconds": sample.wall_seconds}) + "\n", encoding="utf-8")
    return manifest
