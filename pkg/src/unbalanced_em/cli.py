"""``uem``: sample data, run estimators, evaluate population maps, run sweeps.

Exit codes: 0 on success, 2 for usage or domain errors, 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SweepSpec, error_sweep, landscape_scan
from .checks import run_checks
from .empirical import ESTIMATORS, EstimatorConfig, run_estimator
from .model import (
    Dataset,
    DomainError,
    MixtureParams,
    UnidentifiableError,
    dumps_json,
    format_float,
    rho_to_delta,
    sample,
)
from .population import (
    PopMeanMap1D,
    PopWeightMap,
    find_fixed_points_1d,
    find_weight_fixed_point,
    weight_deriv_at_one,
)
from .quadrature import QuadratureGrid

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _json(payload: dict) -> str:
    return dumps_json({"schema_version": SCHEMA_VERSION, **payload})


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _add_model_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--d", type=int, default=1, help="dimension")
    p.add_argument("--n", type=int, required=required, help="sample size")
    p.add_argument("--eta", type=float, required=required, help="signal strength ||theta*||")
    p.add_argument("--rho", type=float, required=required, help="weight imbalance rho*")
    p.add_argument("--seed", type=int, default=0)


# -- sample ----------------------------------------------------------------

def cmd_sample(args) -> int:
    params = MixtureParams.from_eta(args.eta, args.rho, args.d)
    data = sample(params, args.n, args.seed)
    if args.out is None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(data.d)])
        for row in data.samples:
            w.writerow([format_float(v) for v in row])
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        data.to_csv(args.out)
    return 0


# -- estimate --------------------------------------------------------------

def _load_or_sample(args) -> Dataset:
    if args.data is not None:
        return Dataset.from_csv(args.data)
    missing = [f for f in ("n", "eta", "rho") if getattr(args, f) is None]
    if missing:
        raise UsageError(f"give --data or all of --n --eta --rho (missing {missing})")
    return sample(MixtureParams.from_eta(args.eta, args.rho, args.d), args.n, args.seed)


def cmd_estimate(args) -> int:
    if args.estimator not in ESTIMATORS:
        raise UsageError(f"unknown estimator {args.estimator!r}; choose from {sorted(ESTIMATORS)}")
    data = _load_or_sample(args)
    rho_star = data.params_used.rho_star if args.rho_star is None else args.rho_star
    cfg = EstimatorConfig(max_iter=args.max_iter, tol=args.tol, truncation=args.truncation,
                          seed=args.estimator_seed, stop_rule=args.stop_rule, c0=args.c0,
                          kappa=args.kappa)
    theta = None if args.theta is None else np.array(args.theta, dtype=float)
    est = run_estimator(args.estimator, data, rho_star, cfg, theta)
    record = {k: v for k, v in est.to_dict().items() if not (k.startswith("loss_") and v is None)}
    record.update(info={k: v for k, v in est.info.items()}, n=data.n, d=data.d,
                  data_seed=data.seed, rho_star=rho_star)
    _emit(_json(record), args.out)
    if args.trace is not None and est.trace is not None:
        est.trace.to_csv(args.trace)
    return 0


# -- population ------------------------------------------------------------

def cmd_fixed_points(args) -> int:
    grid = QuadratureGrid.gauss_hermite(args.order)
    m = PopMeanMap1D(args.eta, args.delta, grid=grid)
    lo, hi = args.interval if args.interval else (-(args.eta + 1.0), args.eta + 1.0)
    roots = find_fixed_points_1d(m, (lo, hi), args.scan_points)
    _emit(_json({"eta": args.eta, "delta": args.delta, "interval": [lo, hi],
                 "fixed_points": roots,
                 "positive": [r for r in roots if r > 0],
                 "negative": [r for r in roots if r < 0]}), args.out)
    return 0


def cmd_weight_fixed_point(args) -> int:
    params = MixtureParams.from_eta(args.eta, args.rho, args.d)
    theta = args.theta_scale * params.theta_star
    h = PopWeightMap(theta, params.theta_star, args.rho,
                     grid=QuadratureGrid.gauss_hermite(args.order))
    rho_fp = find_weight_fixed_point(h)
    _emit(_json({"eta": args.eta, "rho_star": args.rho, "theta_scale": args.theta_scale,
                 "slope_at_one": weight_deriv_at_one(h), "fixed_point": rho_fp}), args.out)
    return 0


def cmd_landscape(args) -> int:
    rows = landscape_scan(args.delta_grid, args.eta_grid,
                          QuadratureGrid.gauss_hermite(args.order), args.scan_points)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "eta", "count", "roots"])
    for r in rows:
        w.writerow([format_float(r.delta), format_float(r.eta), r.count,
                    " ".join(format_float(x) for x in r.roots)])
    _emit(buf.getvalue(), args.out)
    return 0


# -- sweep -----------------------------------------------------------------

def cmd_sweep(args) -> int:
    try:
        obj = json.loads(Path(args.spec).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"sweep spec is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError("sweep spec must be a JSON object")
    if args.trials is not None:
        obj["trials"] = args.trials
    if args.base_seed is not None:
        obj["base_seed"] = args.base_seed
    try:
        spec = SweepSpec.from_dict(obj)
    except TypeError as exc:
        raise UsageError(f"bad sweep spec: {exc}") from None
    result = error_sweep(spec, workers=args.workers)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "sweep.csv")
    summary = result.summary()
    (out / "summary.json").write_text(_json({"spec": obj, **summary}))
    sys.stdout.write(f"wrote {len(result.rows)} rows to {out / 'sweep.csv'}\n")
    return 0


# -- check -----------------------------------------------------------------

def cmd_check(args) -> int:
    results = run_checks()
    for r in results:
        sys.stdout.write(r.line() + "\n")
    failed = sum(not r.passed for r in results)
    sys.stdout.write(f"{len(results) - failed}/{len(results)} checks passed\n")
    return 0 if failed == 0 else 1


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uem", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw a dataset")
    _add_model_flags(s)
    s.add_argument("--out", help="CSV path (sidecar JSON written alongside); stdout if omitted")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("estimate", help="run one estimator")
    e.add_argument("--estimator", required=True, help=f"one of {sorted(ESTIMATORS)}")
    e.add_argument("--data", help="dataset CSV with JSON sidecar")
    e.add_argument("--d", type=int, default=1)
    e.add_argument("--n", type=int)
    e.add_argument("--eta", type=float)
    e.add_argument("--rho", type=float)
    e.add_argument("--seed", type=int, default=0, help="data seed when sampling")
    e.add_argument("--rho-star", type=float, help="weight given to the estimator (default: true)")
    e.add_argument("--theta", type=float, nargs="+", help="mean used by weight estimators")
    e.add_argument("--max-iter", type=int, default=10_000)
    e.add_argument("--tol", type=float, default=1e-8)
    e.add_argument("--truncation", type=float, default=0.95)
    e.add_argument("--stop-rule", choices=["residual", "fixed"], default="residual")
    e.add_argument("--estimator-seed", type=int, default=0)
    e.add_argument("--c0", type=float, default=1.0)
    e.add_argument("--kappa", type=float, default=1.0)
    e.add_argument("--out", help="JSON path; stdout if omitted")
    e.add_argument("--trace", help="write the iteration trace CSV here")
    e.set_defaults(func=cmd_estimate)

    pop = sub.add_parser("population", help="population-map diagnostics")
    psub = pop.add_subparsers(dest="what", required=True)

    def common(q):
        q.add_argument("--order", type=int, default=80, help="base Gauss-Hermite order")
        q.add_argument("--out", help="output path; stdout if omitted")

    fp = psub.add_parser("fixed-points", help="fixed points of the 1-d mean map")
    fp.add_argument("--eta", type=float, required=True)
    g = fp.add_mutually_exclusive_group(required=True)
    g.add_argument("--delta", type=float)
    g.add_argument("--rho", type=float)
    fp.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"))
    fp.add_argument("--scan-points", type=int, default=2000)
    common(fp)
    fp.set_defaults(func=cmd_fixed_points)

    wf = psub.add_parser("weight-fixed-point", help="fixed point of the weight map")
    wf.add_argument("--eta", type=float, required=True)
    wf.add_argument("--rho", type=float, required=True)
    wf.add_argument("--d", type=int, default=1)
    wf.add_argument("--theta-scale", type=float, default=1.0,
                    help="evaluate at theta = scale * theta*")
    common(wf)
    wf.set_defaults(func=cmd_weight_fixed_point)

    ls = psub.add_parser("landscape", help="count negative fixed points over a grid")
    ls.add_argument("--delta-grid", type=_float_list, required=True)
    ls.add_argument("--eta-grid", type=_float_list, required=True)
    ls.add_argument("--scan-points", type=int, default=2000)
    common(ls)
    ls.set_defaults(func=cmd_landscape)

    sw = sub.add_parser("sweep", help="Monte Carlo error sweep from a JSON spec")
    sw.add_argument("spec", help="SweepSpec JSON file")
    sw.add_argument("--output-dir", default="sweep_out")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--base-seed", type=int)
    sw.add_argument("--workers", type=int, help="process count (default: UEM_THREADS or 1)")
    sw.set_defaults(func=cmd_sweep)

    ch = sub.add_parser("check", help="run the property self-checks")
    ch.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is cmd_fixed_points and args.delta is None:
        try:
            args.delta = rho_to_delta(args.rho)
        except DomainError as exc:
            sys.stderr.write(f"uem: domain error: {exc}\n")
            return 2
    try:
        return args.func(args)
    except (UsageError, UnidentifiableError, DomainError) as exc:
        kind = {UsageError: "usage error", UnidentifiableError: "unidentifiable"}.get(
            type(exc), "domain error")
        sys.stderr.write(f"uem: {kind}: {exc}\n")
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        sys.stderr.write(f"uem: error: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
