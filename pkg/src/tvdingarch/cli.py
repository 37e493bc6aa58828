"""
Command-line interface.

    tvdingarch simulate --beta0 15 --beta1 0.2 ... --n 500 --seed 7 --out y.csv
    tvdingarch fit y.csv --model tv
    tvdingarch test y.csv --variant restricted --B 199 --seed 1
    tvdingarch forecast y.csv --n0 200 --point median --trace-out trace.csv
    tvdingarch pit y.csv --bins 10
    tvdingarch mc --experiment estimation --beta0 3 ... --n 1000 --reps 200

JSON results go to stdout (or ``--out``) and carry a ``manifest`` block with
the subcommand, flags, seed, input digest and tool version.  Exit codes: 0 on
success, 2 for usage or validation errors, 3 for numerical failures.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from importlib import resources

import numpy as np
from scipy import stats

from tvdingarch import __version__
from tvdingarch.diagnostics import pearson_residuals, pit
from tvdingarch.dispersion_test import TestConfig, bootstrap_test
from tvdingarch.errors import DomainError
from tvdingarch.estimate import FitConfig, fit, fitted_path, parametric_bootstrap
from tvdingarch.forecast import POINT_METHODS, ForecastConfig, rolling_forecast
from tvdingarch.model import ModelParams, check_stationarity, simulate
from tvdingarch.montecarlo import EXPERIMENTS, McDesign, run_estimation_study, run_level_study, stationary_state
from tvdingarch.pool import child_rng, resolve_threads

__all__ = ["main", "read_counts", "build_parser", "load_schema", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

logger = logging.getLogger("tvdingarch")


class UsageError(Exception):
    pass


def load_schema(name):
    """JSON schema shipped for the output of subcommand `name`."""
    text = resources.files("tvdingarch").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def read_counts(path):
    """Counts from a one-column (count) or two-column (label,count) CSV.

    A first row whose count field is not an integer is treated as a header.

    Returns
    -------
    counts : ndarray
    labels : list or None
    digest : str
        SHA-256 of the raw file bytes.
    """
    if path == "-":
        raw = sys.stdin.buffer.read()
    else:
        with open(path, "rb") as fh:
            raw = fh.read()
    digest = hashlib.sha256(raw).hexdigest()
    rows = list(csv.reader(io.StringIO(raw.decode("utf-8-sig"))))
    counts, labels = [], []
    width = None
    for lineno, row in enumerate(rows, start=1):
        row = [c.strip() for c in row]
        if not row or all(c == "" for c in row):
            continue
        if width is None:
            width = len(row)
            if width not in (1, 2):
                raise UsageError(f"line {lineno}: expected 1 or 2 columns, got {width}")
            if not _is_count(row[-1]):
                continue  # header
        if len(row) != width:
            raise UsageError(f"line {lineno}: expected {width} columns, got {len(row)}")
        if not _is_count(row[-1]):
            raise UsageError(f"line {lineno}: {row[-1]!r} is not a nonnegative integer count")
        counts.append(int(float(row[-1])))
        if width == 2:
            labels.append(row[0])
    if not counts:
        raise UsageError("no counts found in input")
    return np.array(counts, dtype=float), (labels if width == 2 else None), digest


def _is_count(text):
    try:
        v = float(text)
    except ValueError:
        return False
    return math.isfinite(v) and v >= 0 and v == int(v)


def _manifest(args, digest=None):
    # worker count never changes results, so it stays out of the manifest
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "threads", "verbose")}
    return {
        "subcommand": args.command,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "input_digest": digest,
        "tool_version": __version__,
    }


def _emit(payload, args, digest=None):
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    payload["manifest"] = _manifest(args, digest)
    text = json.dumps(_clean(payload), indent=2, sort_keys=False) + "\n"
    if getattr(args, "out", None) and args.command != "simulate":
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _params(args):
    return ModelParams(args.beta0, args.beta1, args.beta2, args.alpha0, args.alpha1, args.alpha2)


def _add_params(p, required=True):
    p.add_argument("--beta0", type=float, required=required, default=None if required else 1.0)
    p.add_argument("--beta1", type=float, default=0.0)
    p.add_argument("--beta2", type=float, default=0.0)
    p.add_argument("--alpha0", type=float, required=required, default=None if required else 1.0)
    p.add_argument("--alpha1", type=float, default=0.0)
    p.add_argument("--alpha2", type=float, default=0.0)


def _add_threads(p):
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $TVD_THREADS or 1); results do not depend on it")


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args):
    p = _params(args)
    if not check_stationarity(p).is_stationary_practical and not args.allow_nonstationary:
        raise UsageError("beta1 + beta2 + alpha1 + alpha2 must be < 1 (use --allow-nonstationary to override)")
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    if args.lambda1 is None or args.phi1 is None:
        lam0, phi0 = stationary_state(p) if check_stationarity(p).is_stationary_practical else (p.beta0, p.alpha0)
    lam1 = args.lambda1 if args.lambda1 is not None else lam0
    phi1 = args.phi1 if args.phi1 is not None else phi0
    y, path = simulate(p, args.n, lam1, phi1, child_rng(args.seed, 0), burnin=args.burnin)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "count"])
        for t, v in enumerate(y, start=1):
            w.writerow([t, int(v)])
    finally:
        if args.out:
            out.close()
    if args.path_out:
        with open(args.path_out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "count", "lambda", "phi"])
            for t, (v, lam, phi) in enumerate(zip(y, path.lam, path.phi), start=1):
                w.writerow([t, int(v), repr(float(lam)), repr(float(phi))])
    return EXIT_OK


def cmd_fit(args):
    y, _, digest = read_counts(args.input)
    res = fit(y, FitConfig(mode=args.model, multistart=args.multistart, seed=args.seed))
    body = res.to_dict()
    names = res.free_names
    est = np.array([getattr(res.theta_hat, k) for k in names])
    if args.bootstrap:
        boot = parametric_bootstrap(res, args.bootstrap, seed=args.seed, threads=args.threads)
        lo, hi = boot.percentile_interval(args.level)
        body["bootstrap"] = {
            "replications": args.bootstrap,
            "failures": boot.failures,
            "standard_errors": dict(zip(names, boot.standard_errors)),
        }
        ci_method = "percentile_bootstrap"
    else:
        z = stats.norm.ppf(0.5 + 0.5 * args.level)
        se = res.standard_errors
        lo, hi = est - z * se, est + z * se
        ci_method = "wald_J1"
    body["confidence_intervals"] = {
        "method": ci_method,
        "level": args.level,
        "intervals": {k: [a, b] for k, a, b in zip(names, lo, hi)},
    }
    _emit({"result": "fit", **body}, args, digest)
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_test(args):
    if args.B < 19:
        raise UsageError("--B must be >= 19")
    y, _, digest = read_counts(args.input)
    cfg = TestConfig(replications=args.B, variant=args.variant, significance=args.alpha, seed=args.seed)
    rep = bootstrap_test(y, cfg, threads=args.threads)
    _emit({"result": "test", **rep.to_dict()}, args, digest)
    return EXIT_NUMERIC if rep.unreliable else EXIT_OK


def cmd_forecast(args):
    y, _, digest = read_counts(args.input)
    if not 20 <= args.n0 < y.size:
        raise UsageError(f"--n0 must satisfy 20 <= n0 < n = {y.size}")
    cfg = ForecastConfig(n0=args.n0, point=args.point, model=args.model, refit_every=args.refit_every)
    trace = rolling_forecast(y, cfg)
    if args.trace_out:
        trace.to_csv(args.trace_out)
    failed = sum(1 for e in trace.refit_log if not e.get("converged", True))
    _emit({
        "result": "forecast",
        "n": int(y.size),
        "n0": args.n0,
        "point": args.point,
        "model": args.model,
        "refit_every": args.refit_every,
        "predictions": int(trace.t.size),
        "terminal_rmsfe": trace.terminal_rmsfe,
        "failed_refits": failed,
    }, args, digest)
    return EXIT_OK


def cmd_pit(args):
    y, _, digest = read_counts(args.input)
    res = fit(y, FitConfig(mode=args.model, compute_covariance=False))
    path = fitted_path(res, y)
    hist = pit(y, path, bins=args.bins)
    if args.hist_out:
        hist.to_csv(args.hist_out)
    resid = pearson_residuals(y, path)[1:]
    _emit({
        "result": "pit",
        "model": args.model,
        "converged": res.converged,
        "aic": res.aic,
        "bic": res.bic,
        "histogram": hist.to_dict(),
        "pearson_residuals": {"mean": float(resid.mean()), "variance": float(resid.var(ddof=1))},
    }, args, digest)
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_mc(args):
    d = McDesign(_params(args), n=args.n, replications=args.reps, seed=args.seed,
                 experiment=args.experiment, mode=args.model)
    if args.experiment == "estimation":
        summary = run_estimation_study(d, threads=args.threads)
    else:
        summary = run_level_study(d, replications=args.B, threads=args.threads)
    if args.csv_out:
        summary.to_csv(args.csv_out)
    body = summary.to_dict()
    body.pop("estimates", None)
    _emit({"result": "mc", **body}, args)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="tvdingarch", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a count series")
    _add_params(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burnin", type=int, default=0)
    p.add_argument("--lambda1", type=float, default=None, help="initial mean (default: stationary mean)")
    p.add_argument("--phi1", type=float, default=None, help="initial dispersion (default: stationary mean)")
    p.add_argument("--allow-nonstationary", action="store_true")
    p.add_argument("--out", default=None, help="counts CSV (default stdout)")
    p.add_argument("--path-out", default=None, help="latent path CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="conditional maximum likelihood fit")
    p.add_argument("input", help="counts CSV ('-' for stdin)")
    p.add_argument("--model", choices=("tv", "ordinary"), default="tv")
    p.add_argument("--multistart", type=int, default=1)
    p.add_argument("--bootstrap", type=int, default=0, help="parametric bootstrap replications for CIs")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    _add_threads(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="bootstrap LR test of constant dispersion")
    p.add_argument("input")
    p.add_argument("--variant", choices=("restricted", "unrestricted"), default="restricted")
    p.add_argument("--B", type=int, default=199)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    _add_threads(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("forecast", help="rolling one-step-ahead forecasts")
    p.add_argument("input")
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--point", choices=POINT_METHODS, default="median")
    p.add_argument("--model", choices=("tv", "ordinary"), default="tv")
    p.add_argument("--refit-every", type=int, default=1)
    p.add_argument("--trace-out", default=None, help="per-step CSV trace")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("pit", help="PIT histogram of a fitted model")
    p.add_argument("input")
    p.add_argument("--model", choices=("tv", "ordinary"), default="tv")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--hist-out", default=None, help="histogram CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pit)

    p = sub.add_parser("mc", help="Monte Carlo study")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="estimation")
    _add_params(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--B", type=int, default=199, help="bootstrap replications for test experiments")
    p.add_argument("--model", choices=("tv", "ordinary"), default="tv")
    p.add_argument("--seed", type=int, default=0)
    _add_threads(p)
    p.add_argument("--csv-out", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "threads"):
            args.threads = resolve_threads(args.threads)
        return args.func(args)
    except (UsageError, DomainError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
