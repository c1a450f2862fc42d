"""Command-line interface.

Verbs: ``simulate``, ``test-bm``, ``test-nobm``, ``mc``, ``report`` and
``validate``.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 degenerate statistic.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import BMTestError, ConfigError
from .harness import PROFILES, ExperimentConfig, run_ensemble, write_experiment
from .inference import (
    BrownianNullConfig,
    NoBrownianNullConfig,
    make_truncation,
    test_brownian_null,
    test_nobrownian_null,
    validate_rate_conditions,
)
from .ingest import (
    SCHEMA_VERSION,
    ReportConfig,
    SessionSpec,
    load_ticks,
    path_to_ticks,
    previous_tick_sample,
    read_path_csv,
    run_empirical_report,
    write_path_csv,
    write_ticks,
)
from .simlab import PathRecipe, StableDriver, SVJumpModel, add_noise, calibrate_theta_qv_share, path_rng, simulate_path


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    return [int(x) for x in _floats(text)]


def _dump(obj, out_dir, name):
    text = json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    return text


# -- shared options ------------------------------------------------------------


def _add_recipe_args(ap, brownian_default=True):
    g = ap.add_argument_group("data generating process")
    g.add_argument("--brownian", dest="brownian", action="store_true", default=brownian_default,
                   help="include the Brownian stochastic volatility part")
    g.add_argument("--no-brownian", dest="brownian", action="store_false")
    g.add_argument("--beta", type=float, default=1.0, help="stable activity index")
    jump = g.add_mutually_exclusive_group()
    jump.add_argument("--theta", type=float, default=None, help="stable scale (annualized)")
    jump.add_argument("--jump-share", type=float, default=None,
                      help="calibrate theta to this expected jump share of realized QV")
    g.add_argument("--no-jumps", action="store_true", help="Brownian part only")
    g.add_argument("--days", type=int, default=None, help="horizon in trading days")
    g.add_argument("--step", type=float, default=5.0, help="sampling step in seconds")
    g.add_argument("--seed", type=int, default=0)


def _recipe(args, days_default=21):
    model = SVJumpModel()
    days = args.days if args.days is not None else days_default
    stable = None
    if not args.no_jumps:
        theta = args.theta
        if args.jump_share is not None:
            theta = calibrate_theta_qv_share(args.jump_share, model, args.beta, days, args.step)
        stable = StableDriver(args.beta, 1.0 if theta is None else theta)
    return PathRecipe(args.brownian, model, stable, days, args.step, args.seed)


def _add_input_args(ap):
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--path", help="path CSV (grid_index,log_price,day_id)")
    src.add_argument("--ticks", help="tick CSV (timestamp,price[,condition])")
    ap.add_argument("--step", type=float, default=5.0, help="grid step in seconds")
    ap.add_argument("--sort", action="store_true", help="sort ticks instead of rejecting disorder")
    ap.add_argument("--allow", default=None, help="comma-separated condition allowlist (empty code: '')")
    ap.add_argument("--open", default="09:30", help="session open, HH:MM (UTC)")
    ap.add_argument("--close", default="16:00", help="session close, HH:MM (UTC)")


def _load_path(args):
    if args.path:
        return read_path_csv(args.path, args.step)
    import datetime as dt

    try:
        session = SessionSpec(dt.time.fromisoformat(args.open), dt.time.fromisoformat(args.close))
    except ValueError as exc:
        raise ConfigError(f"bad session time: {exc}") from None
    allow = None if args.allow is None else [a.strip("'\"") for a in args.allow.split(",")]
    ticks = load_ticks(args.ticks, sort=args.sort, allowlist=allow)
    return previous_tick_sample(ticks, args.step, session)


def _add_truncation_args(ap, mode, value):
    ap.add_argument("--trunc-mode", choices=["vol", "percentile", "absolute"], default=mode)
    ap.add_argument("--trunc-value", type=float, default=value,
                    help="alpha (vol), exceedance fraction q (percentile) or cutoff u (absolute)")
    ap.add_argument("--varpi", type=float, default=None, help="cutoff rate exponent")
    ap.add_argument("--level", type=float, default=0.05)
    ap.add_argument("--beta0", type=float, default=None, help="activity index for the rate check")
    ap.add_argument("--allow-rate-violation", action="store_true")
    ap.add_argument("--per-day", choices=["auto", "yes", "no"], default="auto")


def _truncation(args):
    varpi = args.varpi if args.varpi is not None else 0.49
    return make_truncation(args.trunc_mode, args.trunc_value, varpi)


def _per_day(args):
    return {"auto": None, "yes": True, "no": False}[args.per_day]


# -- verbs ---------------------------------------------------------------------


def cmd_simulate(args):
    recipe = _recipe(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truths = []
    for i in range(args.n_paths):
        path, truth = simulate_path(recipe, i)
        if args.noise > 0:
            path = add_noise(path, args.noise, path_rng(recipe.seed + 1, i))
        name = f"path_{i:04d}.csv"
        if args.format == "ticks":
            write_ticks(out / name, path_to_ticks(path))
        else:
            write_path_csv(out / name, path)
        truths.append({"file": name, **truth.as_dict()})
    manifest = {"schema_version": SCHEMA_VERSION, "kind": "simulate", "recipe": _recipe_dict(recipe),
                "noise": args.noise, "format": args.format, "paths": truths}
    _dump(manifest, out, "manifest.json")
    print(f"wrote {args.n_paths} path(s) to {out}")


def _recipe_dict(recipe):
    from .harness import _jsonable

    return _jsonable(recipe)


def cmd_test_bm(args):
    path = _load_path(args)
    cfg = BrownianNullConfig(args.p, args.k, _truncation(args), args.level, args.beta0, args.varpi,
                             _per_day(args), args.allow_rate_violation)
    res = test_brownian_null(path, cfg)
    _report_result(args, cfg, "test-bm", res.s_n, res.v_n, res)


def cmd_test_nobm(args):
    path = _load_path(args)
    cfg = NoBrownianNullConfig(args.gamma, _truncation(args), args.level, args.beta0, args.varpi,
                               _per_day(args), args.allow_rate_violation)
    res = test_nobrownian_null(path, cfg)
    _report_result(args, cfg, "test-nobm", res.s_prime_n, res.v_prime_n, res)


def _report_result(args, cfg, kind, stat, var, res):
    from .harness import _jsonable

    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": _jsonable(cfg),
        "statistic": stat,
        "variance": var,
        "null_limit": res.null_limit,
        "critical_value": res.critical_value,
        "z_score": res.z_score,
        "reject": res.reject,
        "level": res.level,
        "diagnostics": _jsonable(res.diagnostics),
    }
    text = _dump(doc, args.out, "result.json")
    if args.out is None:
        sys.stdout.write(text)
    else:
        verdict = "reject" if res.reject else "do not reject"
        print(f"{kind}: statistic={stat:.6g} null={res.null_limit:.6g} z={res.z_score:.3f} -> {verdict}")


def cmd_mc(args):
    recipe = _recipe(args, PROFILES[args.profile].horizon_days)
    if args.test == "bm":
        test = BrownianNullConfig(truncation=make_truncation("absolute", 1.0))
        sweep = {"p": args.p or [1.5], "alpha": args.alpha or [7.0]}
        if args.k:
            sweep["k"] = args.k
    else:
        test = NoBrownianNullConfig()
        sweep = {"gamma": args.gamma or [2.0]}
        if args.alpha:
            sweep["alpha"] = args.alpha
        else:
            sweep["q"] = args.q or [0.002]
    kwargs = dict(test=test, sweep=sweep, levels=tuple(args.levels), noise_scale=args.noise, workers=args.workers)
    if args.n_paths:
        kwargs["n_paths"] = args.n_paths
    cfg = ExperimentConfig.from_profile(args.profile, recipe, **kwargs)
    if args.days is not None:
        cfg = replace(cfg, recipe=replace(cfg.recipe, horizon_days=args.days))
    sample = run_ensemble(cfg)
    write_experiment(args.out, sample)
    print(f"mc: {cfg.n_paths} paths, {len(cfg.grid())} grid point(s) -> {args.out}")


def cmd_report(args):
    path = _load_path(args)
    cfg = ReportConfig(
        strides=args.strides, powers=args.p, k=args.k,
        test1_truncation=make_truncation(args.trunc_mode, args.trunc_value, args.varpi or 0.49),
        gammas=args.gamma,
        test2_truncation=None if args.q is None else make_truncation("percentile", args.q),
        beta_ref=args.beta_ref, level=args.level,
    )
    report = run_empirical_report(path, cfg, args.out)
    print(f"report: {len(report['test1'])} test-1 rows, {len(report['test2'])} test-2 rows -> {args.out}"
          + (f"; skipped days {report['skipped_days']}" if report["skipped_days"] else ""))


def cmd_validate(args):
    check = validate_rate_conditions(args.kind, args.beta0, args.varpi, args.p)
    doc = {"schema_version": SCHEMA_VERSION, "kind": args.kind, "passed": check.passed,
           "explanation": check.explanation, "interval": list(check.interval)}
    sys.stdout.write(_dump(doc, args.out, "validate.json"))
    if args.strict and not check.passed:
        return ConfigError.exit_code
    return 0


# -- parser --------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="bmtest", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", help="simulate paths to CSV")
    _add_recipe_args(s)
    s.add_argument("--n-paths", type=int, default=1)
    s.add_argument("--noise", type=float, default=0.0, help="additive noise standard deviation")
    s.add_argument("--format", choices=["path", "ticks"], default="path")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("test-bm", help="test 1: null hypothesis Brownian present")
    _add_input_args(t)
    t.add_argument("--p", type=float, default=1.5)
    t.add_argument("--k", type=int, default=2)
    _add_truncation_args(t, "vol", 7.0)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_test_bm)

    t = sub.add_parser("test-nobm", help="test 2: null hypothesis Brownian absent")
    _add_input_args(t)
    t.add_argument("--gamma", type=float, default=2.0)
    _add_truncation_args(t, "percentile", 0.002)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_test_nobm)

    m = sub.add_parser("mc", help="Monte Carlo rejection experiment")
    _add_recipe_args(m)
    m.add_argument("--test", choices=["bm", "nobm"], default="bm")
    m.add_argument("--profile", choices=sorted(PROFILES), default="quick")
    m.add_argument("--n-paths", type=int, default=None)
    m.add_argument("--p", type=_floats, default=None)
    m.add_argument("--k", type=_ints, default=None)
    m.add_argument("--alpha", type=_floats, default=None, help="cutoffs alpha*sqrt(eta)*sqrt(Delta)")
    m.add_argument("--q", type=_floats, default=None, help="percentile cutoffs (test 2)")
    m.add_argument("--gamma", type=_floats, default=None)
    m.add_argument("--levels", type=_floats, default=[0.05, 0.10])
    m.add_argument("--noise", type=float, default=0.0)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mc)

    r = sub.add_parser("report", help="statistics across sampling steps")
    _add_input_args(r)
    r.add_argument("--strides", type=_ints, default=[1, 2, 6, 12, 60, 120, 360],
                   help="multiples of the grid step")
    r.add_argument("--p", type=_floats, default=[1.25, 1.5, 1.75])
    r.add_argument("--k", type=int, default=2)
    r.add_argument("--trunc-mode", choices=["vol", "percentile", "absolute"], default="vol")
    r.add_argument("--trunc-value", type=float, default=7.0)
    r.add_argument("--varpi", type=float, default=None)
    r.add_argument("--gamma", type=_floats, default=[2.0])
    r.add_argument("--q", type=float, default=None, help="percentile cutoff for test 2 (omit to skip test 2)")
    r.add_argument("--beta-ref", type=float, default=1.0)
    r.add_argument("--level", type=float, default=0.05)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="check the cutoff rate window")
    v.add_argument("--kind", choices=["test-1", "test-2"], required=True)
    v.add_argument("--beta0", type=float, required=True)
    v.add_argument("--varpi", type=float, required=True)
    v.add_argument("--p", type=float, default=None)
    v.add_argument("--strict", action="store_true", help="exit 2 when the check fails")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except BMTestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return int(code or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
