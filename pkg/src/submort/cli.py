"""Command-line entry point: ``submort {pca,simulate,fit,lifetable,benchmark}``.

Every option can also come from a flat ``key = value`` config file given with
``--config``; command-line flags win. Exit codes: 0 success, 1 validation
error, 2 convergence warning (R-hat above 1.1), 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .core import DatasetError, validate_dataset, observed_log_rates
from .evaluation import LEVELS, run_benchmark
from .lifetable import LifeTableError, e0_posterior, rates_to_lifetable
from .model import ModelError, ModelSpec
from .pca import BasisError, ReferenceMatrix, build_basis
from .plot import render_fit_plot
from .sampler import SamplerConfig, SamplerError, gelman_rubin, quantile, run
from .simulator import (
    BENCHMARK_SIZES, make_counties, reference_schedules, simulate_dataset, standard_lifetable,
)

log = logging.getLogger("submort")

RHAT_WARN = 1.1
THREADS_ENV = "SUBMORT_THREADS"
REFERENCE_EXPOSURE = 1e10


class ValidationError(Exception):
    pass


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s}")


def _int_list(s):
    return [int(float(v)) for v in str(s).replace(",", " ").split()]


def _years(s):
    s = str(s)
    if ":" in s:
        a, b = s.split(":")
        return list(range(int(a), int(b) + 1))
    return _int_list(s)


def _sampler_args(p, iterations=20000, burnin=10000, thin=10):
    g = p.add_argument_group("sampler")
    g.add_argument("--chains", type=int, default=4)
    g.add_argument("--iterations", type=int, default=iterations)
    g.add_argument("--burnin", type=int, default=burnin)
    g.add_argument("--thin", type=int, default=thin)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--target-acceptance", type=float, default=0.44)
    g.add_argument("--adaptation-window", type=int, default=50)
    g.add_argument("--threads", type=int, default=int(os.environ.get(THREADS_ENV, "1")))


def _sampler_config(args) -> SamplerConfig:
    try:
        return SamplerConfig(args.chains, args.iterations, args.burnin, args.thin, args.seed,
                             args.target_acceptance, args.adaptation_window, max(1, args.threads))
    except ValueError as e:
        raise ValidationError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="submort", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pca", help="principal-component basis from reference schedules")
    p.add_argument("--reference", required=True, help="reference schedules in dataset CSV schema")
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="synthetic counties, truth and a reference set")
    p.add_argument("--sizes", type=_int_list, default=list(BENCHMARK_SIZES))
    p.add_argument("--per-size", type=int, default=12)
    p.add_argument("--years", type=_years, default=list(range(1980, 2011)))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--literal-brass", type=_bool, default=False,
                   help="use raw standard survivorship instead of its logit")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit the hierarchical model")
    p.add_argument("--data", required=True)
    p.add_argument("--aggregate", help="aggregate deaths CSV (year,age_lower,deaths)")
    p.add_argument("--basis", help="basis CSV (age_lower,Y1..Yp)")
    p.add_argument("--reference", help="reference schedules CSV, used when --basis is absent")
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--constraint", type=_bool, default=True)
    p.add_argument("--sigma-mu-time-varying", type=_bool, default=False)
    p.add_argument("--prior-upper", type=float, default=40.0)
    p.add_argument("--trace", type=_bool, default=False, help="write trace.csv of saved draws")
    p.add_argument("--save-draws", type=_bool, default=True, help="write log_m_draws.npz")
    p.add_argument("--truth", help="truth CSV, drawn on plots")
    p.add_argument("--plot", action="append", default=[], metavar="area=X year=Y",
                   help="emit an SVG fit plot; repeatable")
    p.add_argument("--out", required=True)
    _sampler_args(p)

    p = sub.add_parser("lifetable", help="life tables and e0 intervals from saved draws")
    p.add_argument("--draws", required=True, help="log_m_draws.npz written by fit")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", required=True)

    p = sub.add_parser("benchmark", help="simulation benchmark against Loess and Brass fits")
    p.add_argument("--sizes", type=_int_list, default=list(BENCHMARK_SIZES))
    p.add_argument("--per-size", type=int, default=2)
    p.add_argument("--years", type=_years, default=list(range(2000, 2010)))
    p.add_argument("--loess-span", type=float, default=0.75)
    p.add_argument("--out", required=True)
    _sampler_args(p, iterations=10000, burnin=5000, thin=5)
    return ap


def _parse(argv):
    ap = build_parser()
    cfg_path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            cfg_path = argv[i + 1]
        elif a.startswith("--config="):
            cfg_path = a.split("=", 1)[1]
    if cfg_path:
        if not Path(cfg_path).exists():
            raise ValidationError(f"config file not found: {cfg_path}")
        cfg = io.read_config(cfg_path)
        cmd = next((a for a in argv if a in ap._subparsers._group_actions[0].choices), None)
        if cmd:
            sp = ap._subparsers._group_actions[0].choices[cmd]
            known = {a.dest: a for a in sp._actions}
            unknown = set(cfg) - set(known)
            if unknown:
                raise ValidationError(f"unknown config keys for {cmd}: {', '.join(sorted(unknown))}")
            for k, v in cfg.items():
                act = known[k]
                if act.type is not None:
                    try:
                        cfg[k] = act.type(v)
                    except (ValueError, argparse.ArgumentTypeError) as e:
                        raise ValidationError(f"config key {k}: {e}") from e
                if act.required:
                    act.required = False
                if isinstance(act, argparse._AppendAction):
                    cfg[k] = [s.strip() for s in v.split(";") if s.strip()]
            sp.set_defaults(**cfg)
    return ap.parse_args(argv)


def _check_path(p, what):
    if p is not None and not Path(p).exists():
        raise ValidationError(f"{what} not found: {p}")


def _load_dataset(path, aggregate=None):
    _check_path(path, "dataset")
    _check_path(aggregate, "aggregate file")
    d = io.read_dataset_csv(path, aggregate)
    problems = validate_dataset(d)
    if problems:
        raise ValidationError(f"{path}: {len(problems)} problem(s):\n  " + "\n  ".join(problems[:20]))
    return d


def cmd_pca(args):
    ref = _load_dataset(args.reference)
    X = ReferenceMatrix.from_dataset(ref)
    b = build_basis(X, args.components)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_basis_csv(b, out / "basis.csv")
    io.write_rows(out / "explained_variance.csv", ("component", "singular_value", "explained_variance_ratio"),
                  [(j + 1, b.singular_values[j], b.explained_variance_ratio[j]) for j in range(b.p)])
    for j in range(b.p):
        print(f"Y{j + 1}: explained variance {b.explained_variance_ratio[j]:.6f}")
    return 0


def cmd_simulate(args):
    std = standard_lifetable()
    counties = make_counties(std, args.sizes, n_per_size=args.per_size, seed=args.seed,
                             literal=args.literal_brass)
    d, truth = simulate_dataset(counties, args.years, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_dataset_csv(d, out / "dataset.csv")
    io.write_truth_csv(d, truth, out / "truth.csv")
    io.write_rows(out / "counties.csv", ("area", "size", "alpha", "beta"),
                  [(c.id, c.size, c.params.alpha, c.params.beta) for c in counties])
    ref = reference_schedules(std, seed=args.seed)
    rows = []
    for label, row in zip(ref.labels, ref.X):
        area, t = label.split(":")
        for age, lm in zip(std.age_grid.lower_bounds, row):
            rows.append((area, 1980 + int(t), age, int(round(REFERENCE_EXPOSURE * np.exp(lm))), REFERENCE_EXPOSURE))
    io.write_rows(out / "reference.csv", io.DATASET_HEADER, rows)
    print(f"wrote {len(counties)} counties x {len(args.years)} years to {out}")
    return 0


def _parse_plot(spec: str):
    kv = dict(part.split("=", 1) for part in spec.replace(",", " ").split() if "=" in part)
    if "area" not in kv or "year" not in kv:
        raise ValidationError(f"--plot expects 'area=X year=Y', got {spec!r}")
    return kv["area"], int(kv["year"])


def cmd_fit(args):
    t0 = time.time()
    d = _load_dataset(args.data, args.aggregate)
    if args.basis:
        _check_path(args.basis, "basis")
        basis = io.read_basis_csv(args.basis)
    elif args.reference:
        basis = build_basis(ReferenceMatrix.from_dataset(_load_dataset(args.reference)), args.components)
    else:
        raise ValidationError("fit needs --basis or --reference")
    plots = [_parse_plot(s) for s in args.plot]
    for area, year in plots:
        if area not in d.areas or year not in d.years:
            raise ValidationError(f"--plot area={area} year={year} not in the dataset")
    try:
        spec = ModelSpec(basis, d, constraint_enabled=args.constraint, prior_upper=args.prior_upper,
                         sigma_mu_time_varying=args.sigma_mu_time_varying)
    except ModelError as e:
        raise ValidationError(str(e)) from e
    cfg = _sampler_config(args)
    samples = run(spec, cfg)
    log_m = samples.log_rates()
    G, A, T = d.shape
    pooled = log_m.reshape((-1, G, A, T))
    med, lo, hi = quantile(pooled, [0.5, 0.025, 0.975], axis=0)
    rhat = gelman_rubin(log_m) if cfg.n_chains > 1 else np.full((G, A, T), np.nan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for a, area in enumerate(d.areas):
        for t, year in enumerate(d.years):
            for x, age in enumerate(d.age_grid.lower_bounds):
                rows.append((area, year, age, med[x, a, t], lo[x, a, t], hi[x, a, t],
                             np.exp(med[x, a, t]), np.exp(lo[x, a, t]), np.exp(hi[x, a, t]), rhat[x, a, t]))
    io.write_rows(out / "summary.csv", io.SUMMARY_HEADER, rows)
    if args.save_draws:
        np.savez_compressed(out / "log_m_draws.npz", log_m=log_m, areas=np.array(d.areas),
                            years=np.array(d.years), ages=np.array(d.age_grid.lower_bounds, float))
    if args.trace:
        samples.write_trace(out / "trace.csv")
    if plots:
        truth = io.read_truth_csv(args.truth, d) if args.truth else None
        obs = observed_log_rates(d).values
        (out / "plots").mkdir(exist_ok=True)
        for area, year in plots:
            a, t = d.areas.index(area), d.years.index(year)
            svg = render_fit_plot(area, year, d.age_grid.lower_bounds, obs[:, a, t], med[:, a, t],
                                  lo[:, a, t], hi[:, a, t], None if truth is None else np.log(truth[:, a, t]))
            (out / "plots" / f"fit_{area}_{year}.svg").write_text(svg, encoding="utf-8")
    max_rhat = float(np.nanmax(rhat)) if np.any(~np.isnan(rhat)) else None
    acc = samples.acceptance_by_block()
    meta = {
        "seed": cfg.seed,
        "config": {k: v for k, v in vars(args).items() if k != "func"},
        "sampler": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "wall_time_seconds": time.time() - t0,
        "max_rhat": max_rhat,
        "acceptance_rate_ranges": {k: list(v) for k, v in acc.items()},
        "n_components": basis.p,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, default=str) + "\n", encoding="utf-8")
    if max_rhat is not None and max_rhat > RHAT_WARN:
        bad = int(np.sum(rhat > RHAT_WARN))
        print("WARNING: convergence not reached", file=sys.stderr)
        print(f"  {bad} log-rate(s) with R-hat > {RHAT_WARN}; max R-hat = {max_rhat:.4f}", file=sys.stderr)
        print("  increase --iterations / --burnin and refit", file=sys.stderr)
        return 2
    print(f"fit complete: max R-hat {max_rhat}; outputs in {out}")
    return 0


def cmd_lifetable(args):
    _check_path(args.draws, "draws file")
    z = np.load(args.draws)
    log_m = z["log_m"]
    areas, years, ages = list(z["areas"]), list(z["years"]), tuple(z["ages"])
    from .core import AgeGrid

    grid = AgeGrid(ages)
    G, A, T = log_m.shape[2:]
    pooled = np.exp(log_m.reshape((-1, G, A, T)))
    med_m = quantile(pooled, 0.5, axis=0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lt_rows, e0_rows = [], []
    for a, area in enumerate(areas):
        for t, year in enumerate(years):
            lt = rates_to_lifetable(med_m[:, a, t], grid)
            for x, age in enumerate(grid.lower_bounds):
                lt_rows.append((area, int(year), age, lt.m[x], lt.a[x], lt.q[x], lt.l[x], lt.d[x],
                                lt.L[x], lt.T[x], lt.e[x]))
            s = e0_posterior(pooled[:, :, a, t], grid, levels=(args.level,))
            e0_rows.append((area, int(year), s["median"], s["lo"], s["hi"]))
    io.write_rows(out / "lifetables.csv", ("area", "year", "age_lower", "m", "a", "q", "l", "d", "L", "T", "e"),
                  lt_rows)
    io.write_rows(out / "e0_summary.csv", ("area", "year", "e0_median", "e0_lo", "e0_hi"), e0_rows)
    print(f"wrote life tables for {len(areas)} areas x {len(years)} years to {out}")
    return 0


def cmd_benchmark(args):
    cfg = _sampler_config(args)
    report = run_benchmark(args.sizes, args.per_size, args.years, cfg, seed=args.seed,
                           loess_span=args.loess_span)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "benchmark.csv")
    io.write_rows(out / "table1_rmse.csv", ("size", "model", "loess", "brass"),
                  [(int(r[0]),) + tuple(r[1:]) for r in report.table1()])
    io.write_rows(out / "table2_coverage.csv",
                  ("size",) + tuple(f"coverage_{int(lev * 100)}" for lev in LEVELS),
                  [(int(r[0]),) + tuple(r[1:]) for r in report.table2()])
    print("size      model     loess     brass")
    for s, m, lo, br in report.table1():
        print(f"{int(s):<9} {m:.4f}    {lo:.4f}    {br:.4f}")
    print("size      cov80  cov90  cov95")
    for s, *c in report.table2():
        print(f"{int(s):<9} " + "  ".join(f"{v:.3f}" for v in c))
    return 0


COMMANDS = {
    "pca": cmd_pca,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "lifetable": cmd_lifetable,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, DatasetError, BasisError, ModelError, LifeTableError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SamplerError as e:
        print(f"error: sampler: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
