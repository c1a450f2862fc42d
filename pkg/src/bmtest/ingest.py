"""Tick data loading, previous-tick sampling, path files and empirical reports.

Tick CSV: header ``timestamp,price[,condition]``.  Timestamps are either
epoch seconds or ISO-8601 strings; the format is decided once per file from
the first data row.  Naive ISO times are read as UTC.

Path CSV: header ``grid_index,log_price,day_id`` with one row per grid point.
``grid_index`` counts from 0 within each day.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, DegenerateStatisticError
from .inference import (
    BrownianNullConfig,
    NoBrownianNullConfig,
    s_statistic,
    test_brownian_null,
    test_nobrownian_null,
)
from .specialfn import normal_quantile
from .variation import SECONDS_PER_DAY, SampledPath, VolMultiple, cutoff_per_day, resolve_cutoff

SCHEMA_VERSION = 1
UTC = dt.timezone.utc


# -- ticks ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TickSeries:
    """Transactions sorted by time.

    ``timestamps`` are seconds since the epoch (UTC), ``prices`` are positive
    and ``conditions`` holds the optional sale-condition code of each row.
    ``dropped`` counts rows removed by the condition allowlist.
    """

    timestamps: np.ndarray
    prices: np.ndarray
    conditions: Optional[tuple] = None
    dropped: int = 0
    source: str = ""

    def __len__(self):
        return int(self.timestamps.size)


def _parse_epoch(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite timestamp")
    return value


_ISO = re.compile(
    r"^(\d{4}-\d{2}-\d{2})(?:[T ](\d{2}):(\d{2})(?::(\d{2})(\.\d+)?)?)?"
    r"(Z|[+-]\d{2}(?::?\d{2})?)?$"
)


def _parse_iso(text):
    """ISO-8601 date-time to epoch seconds, keeping every fractional digit."""
    m = _ISO.match(text.strip())
    if m is None:
        raise ValueError(f"not ISO-8601: {text!r}")
    date, hh, mm, ss, frac, zone = m.groups()
    tz = UTC
    if zone and zone != "Z":
        sign = -1 if zone[0] == "-" else 1
        digits = zone[1:].replace(":", "")
        minutes = int(digits[:2]) * 60 + (int(digits[2:]) if len(digits) > 2 else 0)
        tz = dt.timezone(sign * dt.timedelta(minutes=minutes))
    stamp = dt.datetime.combine(dt.date.fromisoformat(date),
                                dt.time(int(hh or 0), int(mm or 0), int(ss or 0)), tzinfo=tz)
    return stamp.timestamp() + (float(frac) if frac else 0.0)


def _detect_time_format(text, line):
    try:
        _parse_epoch(text)
        return _parse_epoch, "epoch"
    except ValueError:
        pass
    try:
        _parse_iso(text)
        return _parse_iso, "iso"
    except ValueError:
        raise DataError(f"timestamp {text!r} is neither epoch seconds nor ISO-8601", line=line) from None


def load_ticks(file, *, sort: bool = False, allowlist: Optional[Iterable[str]] = None) -> TickSeries:
    """Read a tick CSV.

    Parameters
    ----------
    file : path or text stream
    sort : bool
        Sort by timestamp (stable) instead of rejecting out-of-order rows.
    allowlist : iterable of str, optional
        Keep only rows whose condition code is listed (``""`` matches an empty
        or missing code).

    Raises
    ------
    DataError
        On a malformed header or row; the message names the line.
    """
    if isinstance(file, (str, Path)):
        with open(file, newline="", encoding="utf-8") as fh:
            return load_ticks(fh, sort=sort, allowlist=allowlist)
    source = getattr(file, "name", "")
    reader = csv.reader(file)
    header = next(reader, None)
    if header is None:
        raise DataError("empty tick file", line=1)
    header = [h.strip().lower() for h in header]
    if header[:2] != ["timestamp", "price"] or len(header) > 3 or (len(header) == 3 and header[2] != "condition"):
        raise DataError(f"expected header timestamp,price[,condition], got {','.join(header)}", line=1)
    has_cond = len(header) == 3
    allow = None if allowlist is None else {a.strip() for a in allowlist}
    parse = None
    times, prices, conds = [], [], []
    dropped = 0
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 2 or len(row) > len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", line=line)
        if parse is None:
            parse, _ = _detect_time_format(row[0], line)
        try:
            t = parse(row[0])
        except ValueError:
            raise DataError(f"bad timestamp {row[0]!r}", line=line) from None
        try:
            price = float(row[1])
        except ValueError:
            raise DataError(f"bad price {row[1]!r}", line=line) from None
        if not (math.isfinite(price) and price > 0):
            raise DataError(f"price must be positive, got {row[1]!r}", line=line)
        cond = row[2].strip() if has_cond and len(row) > 2 else ""
        if allow is not None and cond not in allow:
            dropped += 1
            continue
        if not sort and times and t < times[-1]:
            raise DataError("timestamps go backwards (use sort=True / --sort)", line=line)
        times.append(t)
        prices.append(price)
        conds.append(cond)
    if not times:
        raise DataError("no usable tick rows")
    ts = np.asarray(times)
    ps = np.asarray(prices)
    if sort:
        order = np.argsort(ts, kind="stable")
        ts, ps = ts[order], ps[order]
        conds = [conds[i] for i in order]
    return TickSeries(ts, ps, tuple(conds) if has_cond else None, dropped, str(source))


def write_ticks(file, ticks: TickSeries):
    """Write ticks as epoch-second CSV (``repr`` floats, so reading is exact)."""
    with open(file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_cond = ticks.conditions is not None
        w.writerow(["timestamp", "price", "condition"] if has_cond else ["timestamp", "price"])
        for i in range(len(ticks)):
            row = [repr(float(ticks.timestamps[i])), repr(float(ticks.prices[i]))]
            if has_cond:
                row.append(ticks.conditions[i])
            w.writerow(row)


# -- sessions and sampling -----------------------------------------------------


@dataclass(frozen=True)
class SessionSpec:
    """Trading session in UTC clock time.

    ``calendar`` lists the trading dates; ``None`` means every date that has
    at least one tick.  The default session (09:30 to 16:00) lasts one
    model trading day.
    """

    session_open: dt.time = dt.time(9, 30)
    session_close: dt.time = dt.time(16, 0)
    calendar: Optional[Sequence[dt.date]] = None
    condition_allowlist: Optional[frozenset] = None

    def __post_init__(self):
        if not self.session_open < self.session_close:
            raise ConfigError("session_open must precede session_close")
        if self.calendar is not None and len(self.calendar) == 0:
            raise ConfigError("empty session calendar")

    @property
    def length_seconds(self) -> float:
        o, c = self.session_open, self.session_close
        return (c.hour - o.hour) * 3600 + (c.minute - o.minute) * 60 + (c.second - o.second) \
            + (c.microsecond - o.microsecond) / 1e6

    def bounds(self, day: dt.date):
        start = dt.datetime.combine(day, self.session_open, tzinfo=UTC).timestamp()
        return start, start + self.length_seconds


def previous_tick_sample(ticks: TickSeries, step_seconds: float, session: SessionSpec = SessionSpec()) -> SampledPath:
    """Regular-grid log-prices by the previous-tick rule.

    Grid times run from the open to the close in steps of ``step_seconds``
    (a trailing partial step is dropped).  Each grid value is the log of the
    last tick at or before the grid time among that date's ticks up to the
    close.  If a date has no tick at or before the open, the leading grid
    points are back-filled with the first tick of the day and the date is
    listed in ``metadata["backfilled_days"]``.  Dates without any tick up to
    the close are skipped and listed in ``metadata["skipped_days"]``.
    """
    if not step_seconds > 0:
        raise ConfigError(f"step_seconds must be positive, got {step_seconds}")
    if session.condition_allowlist is not None and ticks.conditions is not None:
        keep = np.array([c in session.condition_allowlist for c in ticks.conditions], dtype=bool)
        ticks = replace(ticks, timestamps=ticks.timestamps[keep], prices=ticks.prices[keep],
                        conditions=tuple(c for c, k in zip(ticks.conditions, keep) if k),
                        dropped=ticks.dropped + int((~keep).sum()))
    n_steps = int(math.floor(session.length_seconds / step_seconds + 1e-9))
    if n_steps < 1:
        raise ConfigError("step_seconds is longer than the session")
    if session.calendar is not None:
        days = sorted(set(session.calendar))
    else:
        days = sorted({dt.datetime.fromtimestamp(t, UTC).date() for t in ticks.timestamps})
    ts, logp = ticks.timestamps, np.log(ticks.prices)
    blocks, kept, skipped, backfilled = [], [], [], []
    for day in days:
        midnight = dt.datetime.combine(day, dt.time(0), tzinfo=UTC).timestamp()
        start, close = session.bounds(day)
        lo = np.searchsorted(ts, midnight, side="left")
        hi = np.searchsorted(ts, close, side="right")
        if hi <= lo:
            skipped.append(day.isoformat())
            continue
        grid = start + step_seconds * np.arange(n_steps + 1)
        idx = np.searchsorted(ts[lo:hi], grid, side="right") - 1
        if idx[0] < 0:
            backfilled.append(day.isoformat())
        blocks.append(logp[lo:hi][np.maximum(idx, 0)])
        kept.append(day.isoformat())
    if not blocks:
        raise DataError("no trading day has ticks")
    offsets = np.arange(len(blocks)) * (n_steps + 1)
    meta = {"days": kept, "skipped_days": skipped, "backfilled_days": backfilled,
            "dropped_ticks": ticks.dropped, "source": ticks.source}
    return SampledPath(step_seconds, np.concatenate(blocks), offsets, meta)


def path_to_ticks(path: SampledPath, start_date: dt.date = dt.date(2006, 1, 3),
                  session: SessionSpec = SessionSpec()) -> TickSeries:
    """One tick per grid point, on consecutive calendar dates from ``start_date``.

    Prices are chosen so that ``log(price)`` reproduces each log-price exactly
    whenever a floating-point neighbour of ``exp(x)`` allows it.
    """
    times, prices = [], []
    for d, (start, stop) in enumerate(path.day_bounds):
        open_t, _ = session.bounds(start_date + dt.timedelta(days=d))
        n = stop - start
        times.append(open_t + path.step_seconds * np.arange(n))
        prices.append(_exact_exp(path.observations[start:stop]))
    return TickSeries(np.concatenate(times), np.concatenate(prices))


def _exact_exp(x):
    p = np.exp(x)
    best = p.copy()
    ok = np.log(p) == x
    for direction in (np.inf, -np.inf):
        q = p.copy()
        for _ in range(3):
            q = np.nextafter(q, direction)
            hit = ~ok & (np.log(q) == x)
            best[hit] = q[hit]
            ok |= hit
    return best


def subsample(path: SampledPath, stride: int) -> SampledPath:
    """Keep every ``stride``-th grid point of each day (a coarser grid)."""
    stride = int(stride)
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    blocks = [path.observations[a:b:stride] for a, b in path.day_bounds]
    blocks = [blk for blk in blocks if blk.size >= 2]
    if not blocks:
        raise DataError(f"stride {stride} leaves no increment")
    offsets = np.concatenate(([0], np.cumsum([blk.size for blk in blocks])[:-1]))
    return SampledPath(path.step_seconds * stride, np.concatenate(blocks), offsets, dict(path.metadata))


# -- path CSV ------------------------------------------------------------------


def write_path_csv(file, path: SampledPath):
    with open(file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["grid_index", "log_price", "day_id"])
        for d, (start, stop) in enumerate(path.day_bounds):
            for j, x in enumerate(path.observations[start:stop]):
                w.writerow([j, repr(float(x)), d])


def read_path_csv(file, step_seconds: float) -> SampledPath:
    """Read a path CSV; days follow the order of ``day_id`` changes."""
    if isinstance(file, (str, Path)):
        with open(file, newline="", encoding="utf-8") as fh:
            return read_path_csv(fh, step_seconds)
    reader = csv.reader(file)
    header = [h.strip() for h in (next(reader, None) or [])]
    if header != ["grid_index", "log_price", "day_id"]:
        raise DataError("expected header grid_index,log_price,day_id", line=1)
    values, offsets, seen = [], [], set()
    prev_day = prev_idx = None
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"expected 3 fields, got {len(row)}", line=line)
        try:
            idx, x, day = int(row[0]), float(row[1]), row[2].strip()
        except ValueError:
            raise DataError("malformed row", line=line) from None
        if not math.isfinite(x):
            raise DataError("log_price must be finite", line=line)
        if day != prev_day:
            if day in seen:
                raise DataError(f"day_id {day} is not contiguous", line=line)
            seen.add(day)
            offsets.append(len(values))
            prev_idx = -1
            prev_day = day
        if idx != prev_idx + 1:
            raise DataError(f"grid_index {idx} does not follow {prev_idx}", line=line)
        prev_idx = idx
        values.append(x)
    if len(values) < 2:
        raise DataError("path file has fewer than two rows")
    return SampledPath(step_seconds, np.asarray(values), offsets, {"source": getattr(file, "name", "")})


# -- empirical report ----------------------------------------------------------


@dataclass(frozen=True)
class ReportConfig:
    """Sweep for the empirical report.

    ``strides`` are multiples of the native grid step.  ``beta_ref`` is the
    activity index used for the ``k^(1-p/beta)`` and ``gamma^beta`` lines.
    """

    strides: Sequence[int] = (1, 2, 6, 12, 60, 120, 360)
    powers: Sequence[float] = (1.25, 1.5, 1.75)
    k: int = 2
    test1_truncation: object = field(default_factory=lambda: VolMultiple(7.0))
    gammas: Sequence[float] = (2.0,)
    test2_truncation: object = None
    beta_ref: float = 1.0
    level: float = 0.05

    def __post_init__(self):
        if not self.strides or any(int(s) < 1 for s in self.strides):
            raise ConfigError("strides must be positive integers")
        if not 0 < self.beta_ref < 2:
            raise ConfigError("beta_ref must lie in (0, 2)")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")


def reference_lines_s(p: float, k: int, beta: float) -> dict:
    jumps = 1.0 if p > beta else k ** (1 - p / beta)
    return {"brownian": k ** (1 - p / 2), "jumps_only": jumps, "additive_noise": float(k),
            "rounding": math.sqrt(k)}


def reference_lines_s_prime(gamma: float, beta: float) -> dict:
    return {"no_brownian": gamma**2, "brownian": gamma**beta}


def _ci(stat, var, level):
    half = normal_quantile(level / 2) * math.sqrt(var)
    return stat - half, stat + half


def run_empirical_report(path: SampledPath, cfg: ReportConfig = ReportConfig(), out_dir=None) -> dict:
    """Statistics across sampling steps with confidence intervals and reference lines.

    Variations are summed over days; ``VolMultiple`` cutoffs are set per day.
    Returns ``{"test1": rows, "test2": rows, ...}`` and, if ``out_dir`` is
    given, writes ``report_test1.csv``, ``report_test2.csv`` and
    ``report.json`` there.
    """
    rows1, rows2 = [], []
    for stride in cfg.strides:
        sub = subsample(path, stride)
        step = sub.step_seconds
        for p in cfg.powers:
            ctx = f"step={step:g}s p={p:g}"
            rec = {"step_seconds": step, "p": p, "k": cfg.k}
            try:
                if 1 < p < 2:
                    res = test_brownian_null(sub, BrownianNullConfig(p=p, k=cfg.k, truncation=cfg.test1_truncation,
                                                                     level=cfg.level))
                    lo, hi = _ci(res.s_n, res.v_n, cfg.level)
                    rec.update(statistic=res.s_n, variance=res.v_n, ci_low=lo, ci_high=hi, z_score=res.z_score,
                               reject=res.reject)
                else:
                    per_day = isinstance(cfg.test1_truncation, VolMultiple)
                    u = cutoff_per_day(resolve_cutoff(sub, cfg.test1_truncation, per_day), sub.n_days)
                    rec.update(statistic=s_statistic(sub, p, cfg.k, u), variance=None, ci_low=None, ci_high=None,
                               z_score=None, reject=None)
            except DegenerateStatisticError as exc:
                raise type(exc)(f"{ctx}: {exc}", factor=exc.factor) from exc
            rec.update({f"ref:{k}": v for k, v in reference_lines_s(p, cfg.k, cfg.beta_ref).items()})
            rows1.append(rec)
        if cfg.test2_truncation is None:
            continue
        for g in cfg.gammas:
            ctx = f"step={step:g}s gamma={g:g}"
            try:
                res = test_nobrownian_null(sub, NoBrownianNullConfig(gamma=g, truncation=cfg.test2_truncation,
                                                                     level=cfg.level))
            except DegenerateStatisticError as exc:
                raise type(exc)(f"{ctx}: {exc}", factor=exc.factor) from exc
            lo, hi = _ci(res.s_prime_n, res.v_prime_n, cfg.level)
            rec = {"step_seconds": step, "gamma": g, "statistic": res.s_prime_n, "variance": res.v_prime_n,
                   "ci_low": lo, "ci_high": hi, "z_score": res.z_score, "reject": res.reject}
            rec.update({f"ref:{k}": v for k, v in reference_lines_s_prime(g, cfg.beta_ref).items()})
            rows2.append(rec)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "report",
        "n_days": path.n_days,
        "skipped_days": path.metadata.get("skipped_days", []),
        "backfilled_days": path.metadata.get("backfilled_days", []),
        "beta_ref": cfg.beta_ref,
        "level": cfg.level,
        "test1": rows1,
        "test2": rows2,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in (("report_test1.csv", rows1), ("report_test2.csv", rows2)):
            if rows:
                with open(out / name, "w", newline="", encoding="utf-8") as fh:
                    w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
                    w.writeheader()
                    w.writerows(rows)
        (out / "report.json").write_text(json.dumps(report, indent=2, default=str) + "\n", encoding="utf-8")
    return report


def session_matches_model_day(session: SessionSpec) -> bool:
    return abs(session.length_seconds - SECONDS_PER_DAY) < 1e-9
