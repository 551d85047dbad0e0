"""Command-line front end: ``dyngp fit-gp | fit-svdgp | predict | benchmark``.

Exit codes: 0 success, 2 usage, 3 input data, 4 numerical failure.  Errors
are reported on stderr as a single line ``error: <category>: <detail>``.
Every successful run writes ``manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .benchmarks import SCENARIOS
from .gp import GPConfig, fit_scalar_gp
from .io import DataError, PredictionReport, QueryReport, dump_json, load_dataset, load_matrix, write_report
from .kernel import SingularCorrelationError
from .local import NeighborhoodConfig, predict_local
from .optimize import FitError, OptimConfig
from .svdgp import SvdGPConfig, SvdPriors, fit_svdgp

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4
THREADS_ENV = "DYNGP_THREADS"
MODEL_FORMAT = "dyngp-model/1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if value < 1:
        raise UsageError(f"{THREADS_ENV} must be at least 1")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _unit_interval(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dyngp", description="GP emulators for scalar and time-series simulators.")
    parser.add_argument("--version", action="version", version=f"dyngp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--out-dir", required=True, type=Path, help="directory for all outputs")
        p.add_argument("--seed", type=int, default=None, help="seed for optimizer starts and designs")
        p.add_argument("--nstarts", type=_positive_int, default=5, help="optimizer restarts (default 5)")
        p.add_argument("--threads", type=_positive_int, default=None,
                       help=f"worker threads (default ${THREADS_ENV} or 1)")

    def data(p, required=True):
        p.add_argument("--design", type=Path, required=required, help="N x q design CSV")
        p.add_argument("--responses", type=Path, required=required, help="response CSV")
        p.add_argument("--transpose", action="store_true", help="response file is N x L (one run per row)")

    p = sub.add_parser("fit-gp", help="fit a scalar GP")
    data(p)
    common(p)
    p.add_argument("--power", type=float, default=1.95, help="correlation exponent (default 1.95)")

    p = sub.add_parser("fit-svdgp", help="fit an SVD-based GP to time-series responses")
    data(p)
    common(p)
    p.add_argument("--gamma", type=_unit_interval, default=0.95, help="SVD variance threshold (default 0.95)")
    p.add_argument("--components", type=_positive_int, default=None, help="fix the number of components")

    p = sub.add_parser("predict", help="predict at query inputs")
    data(p, required=False)
    common(p)
    p.add_argument("--model", type=Path, help="model file written by fit-gp or fit-svdgp")
    p.add_argument("--queries", type=Path, required=True, help="M x q CSV of query inputs")
    p.add_argument("--mode", choices=("full", "knn", "lasvd"), default="full")
    p.add_argument("--gamma", type=_unit_interval, default=0.95)
    p.add_argument("--nn", type=_positive_int, default=20, help="neighbourhood size (default 20)")
    p.add_argument("--n0", type=_positive_int, default=10, help="greedy seed size (default 10)")
    p.add_argument("--interval", type=float, default=2.0, help="interval half-width in sd (default 2)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("benchmark", help="run a named reproduction scenario")
    p.add_argument("scenario", choices=sorted(SCENARIOS))
    common(p)
    p.add_argument("--gamma", type=_unit_interval, default=0.95)
    p.add_argument("--nn", type=_positive_int, default=None, help="example4 neighbourhood size (default 30)")
    p.add_argument("--n0", type=_positive_int, default=None, help="example4 seed size (default 20)")
    p.add_argument("--n-test", type=_positive_int, default=None, help="number of test inputs")
    p.add_argument("--interval", type=float, default=2.0)
    return parser


def _write_json(path: Path, obj):
    with path.open("w", encoding="utf-8") as fh:
        dump_json(obj, fh)


def _manifest(args, argv, extra=None) -> dict:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    return {"tool": "dyngp", "version": __version__, "command": args.command, "argv": list(argv),
            "seed": args.seed, "config": config, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, **(extra or {})}


def _optim(args) -> OptimConfig:
    return OptimConfig(nstarts=args.nstarts, seed=0 if args.seed is None else args.seed)


def _prepare_out(path: Path):
    if path.exists() and not path.is_dir():
        raise DataError(f"{path}: output path exists and is not a directory")
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"{path}: cannot create output directory ({exc.strerror})") from None


# model files -------------------------------------------------------------

def _priors_dict(priors: SvdPriors) -> dict:
    return {k: getattr(priors, k) for k in
            ("coeff_alpha", "coeff_beta", "noise_alpha", "noise_beta", "theta_shape", "theta_rate")}


def _model_record(kind, ds, config: dict, fitted: dict) -> dict:
    return {"format": MODEL_FORMAT, "kind": kind, "version": __version__,
            "column_names": list(ds.column_names), "time_labels": list(ds.time_labels),
            "design": ds.design, "responses": ds.responses, "config": config, "fitted": fitted}


def load_model_file(path: Path) -> dict:
    """Read a model file; raises DataError for missing or malformed files."""
    if not path.is_file():
        raise DataError(f"{path}: model file not found")
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: not a readable model file ({exc})") from None
    if not isinstance(rec, dict) or rec.get("format") != MODEL_FORMAT or rec.get("kind") not in ("gp", "svdgp"):
        raise DataError(f"{path}: not a dyngp model file")
    try:
        rec["design"] = np.array(rec["design"], dtype=float)
        rec["responses"] = np.array(rec["responses"], dtype=float)
        rec["config"], rec["fitted"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from None
    return rec


def rebuild_model(rec: dict):
    """Refit a stored model at its stored hyperparameters (no optimization)."""
    cfg, fit = rec["config"], rec["fitted"]
    if rec["kind"] == "gp":
        config = GPConfig(power=cfg["power"], theta=np.array(fit["theta"], dtype=float))
        return fit_scalar_gp(rec["design"], rec["responses"], config)
    config = SvdGPConfig(power=cfg["power"], thetas=np.array(fit["thetas"], dtype=float),
                         n_components=int(fit["p"]))
    return fit_svdgp(rec["design"], rec["responses"], cfg["gamma"], SvdPriors(**cfg["priors"]), config,
                     time_labels=rec["time_labels"])


# subcommands -------------------------------------------------------------

def _cmd_fit_gp(args, argv):
    ds = load_dataset(args.design, args.responses, transpose=True)
    if ds.n_times != 1:
        raise DataError(f"{args.responses}: fit-gp needs one response per run, found {ds.n_times} per run")
    y = ds.responses[0]
    t0 = time.perf_counter()
    model = fit_scalar_gp(ds.design, y, GPConfig(power=args.power, optim=_optim(args)))
    seconds = time.perf_counter() - t0
    fitted = {"theta": model.params.theta, "mu_hat": model.mu_hat, "sigma2_hat": model.sigma2_hat,
              "loglik": model.loglik, "jitter": model.corr.jitter, "n_converged": model.n_converged,
              "degenerate": model.degenerate}
    record = _model_record("gp", ds, {"power": args.power}, fitted)
    _prepare_out(args.out_dir)
    _write_json(args.out_dir / "model.json", record)
    _write_json(args.out_dir / "summary.json", {**fitted, "fit_seconds": seconds})
    _write_json(args.out_dir / "manifest.json", _manifest(args, argv))


def _cmd_fit_svdgp(args, argv):
    ds = load_dataset(args.design, args.responses, transpose=args.transpose)
    priors = SvdPriors()
    config = SvdGPConfig(optim=_optim(args), threads=args.threads, n_components=args.components)
    t0 = time.perf_counter()
    model = fit_svdgp(ds.design, ds.responses, args.gamma, priors, config, time_labels=ds.time_labels)
    seconds = time.perf_counter() - t0
    fitted = {"p": model.p, "thetas": [g.theta for g in model.coeff_gps],
              "log_posteriors": [g.log_posterior for g in model.coeff_gps],
              "sigma2_hat": model.noise.sigma2, "singular_values": model.basis.singular_values,
              "jitter": model.max_jitter}
    record = _model_record("svdgp", ds, {"power": config.power, "gamma": args.gamma,
                                         "priors": _priors_dict(priors)}, fitted)
    _prepare_out(args.out_dir)
    _write_json(args.out_dir / "model.json", record)
    _write_json(args.out_dir / "summary.json", {**fitted, "fit_seconds": seconds})
    _write_json(args.out_dir / "manifest.json", _manifest(args, argv))


def _predict_data(args):
    if args.model is not None:
        if args.design is not None or args.responses is not None:
            raise UsageError("give either --model or --design/--responses, not both")
        rec = load_model_file(args.model)
        return rec, rec["design"], rec["responses"], tuple(rec["time_labels"])
    if args.design is None or args.responses is None:
        raise UsageError("predict needs --model or both --design and --responses")
    ds = load_dataset(args.design, args.responses, transpose=args.transpose)
    return None, ds.design, ds.responses, ds.time_labels


def _cmd_predict(args, argv):
    rec, X, Y, labels = _predict_data(args)
    queries, _ = load_matrix(args.queries)
    if queries.shape[1] != X.shape[1]:
        raise DataError(f"{args.queries}: queries have {queries.shape[1]} columns, design has {X.shape[1]}")
    if args.interval <= 0:
        raise UsageError("--interval must be positive")
    scalar = rec is not None and rec["kind"] == "gp"
    if scalar and args.mode != "full":
        raise UsageError(f"mode {args.mode!r} needs a time-series model; scalar GP models support 'full' only")

    entries: list[QueryReport] = []
    meta: dict = {"mode": args.mode, "n_train": int(X.shape[0])}
    t0 = time.perf_counter()
    if scalar:
        model = rebuild_model(rec)
        pred = model.predict(queries)
        meta.update(kind="gp", theta=model.params.theta, sigma2_hat=model.sigma2_hat,
                    jitter=model.corr.jitter)
        for j, x in enumerate(queries):
            entries.append(QueryReport(j, x, pred.mean[j:j + 1], pred.variance_mle[j:j + 1]))
    elif args.mode == "full":
        if rec is not None:
            model = rebuild_model(rec)
            gamma = rec["config"]["gamma"]
        else:
            config = SvdGPConfig(optim=_optim(args), threads=args.threads)
            model = fit_svdgp(X, Y, args.gamma, config=config, time_labels=labels)
            gamma = args.gamma
        pred = model.predict(queries)
        meta.update(kind="svdgp", p=model.p, gamma=gamma, sigma2_hat=model.noise.sigma2,
                    jitter=model.max_jitter)
        for j, x in enumerate(queries):
            entries.append(QueryReport(j, x, pred.mean[j], pred.pointwise_variance[j]))
    else:
        gamma = rec["config"]["gamma"] if rec is not None else args.gamma
        nb = NeighborhoodConfig(nn=args.nn, n0=min(args.n0, args.nn))
        svd_config = SvdGPConfig(optim=_optim(args))
        fits = predict_local(X, Y, queries, nb, "greedy" if args.mode == "lasvd" else "knn", gamma,
                             svd_config=svd_config, threads=args.threads)
        meta.update(kind="svdgp", gamma=gamma, nn=args.nn, n0=nb.n0)
        for j, f in enumerate(fits):
            if f.ok:
                qmeta = {"p": f.model.p, "sigma2_hat": f.model.noise.sigma2, "jitter": f.model.max_jitter}
                entries.append(QueryReport(j, f.query, f.prediction.mean, f.prediction.pointwise_variance,
                                           f.neighborhood, qmeta))
            else:
                entries.append(QueryReport(j, f.query, None, None, f.neighborhood, {}, f.error))
    seconds = time.perf_counter() - t0

    report = PredictionReport(entries, labels, args.interval, meta)
    _prepare_out(args.out_dir)
    write_report(report, args.out_dir / f"report.{args.format}", args.format)
    failed = [e.query_id for e in entries if e.error is not None]
    _write_json(args.out_dir / "manifest.json",
                _manifest(args, argv, {"failed_queries": failed, "wall_seconds": seconds}))
    if failed:
        print(f"warning: {len(failed)} of {len(entries)} queries failed; see report", file=sys.stderr)


def _cmd_benchmark(args, argv):
    kwargs = {"nstarts": args.nstarts}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.scenario != "example1":
        kwargs.update(threads=args.threads, gamma=args.gamma, multiplier=args.interval)
    if args.n_test is not None:
        if args.scenario == "example1":
            raise UsageError("--n-test does not apply to example1")
        kwargs["n_test"] = args.n_test
    if args.nn is not None or args.n0 is not None:
        if args.scenario != "example4":
            raise UsageError("--nn/--n0 apply to example4 only")
        kwargs.update({k: getattr(args, k) for k in ("nn", "n0") if getattr(args, k) is not None})
    _prepare_out(args.out_dir)
    result = SCENARIOS[args.scenario](args.out_dir, **kwargs)
    if args.seed is None:
        args.seed = result["seed"]
    _write_json(args.out_dir / "manifest.json", _manifest(args, argv))


COMMANDS = {"fit-gp": _cmd_fit_gp, "fit-svdgp": _cmd_fit_svdgp, "predict": _cmd_predict,
            "benchmark": _cmd_benchmark}


def _fail(category: str, detail, code: int) -> int:
    detail = " ".join(str(detail).split())
    print(f"error: {category}: {detail}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) is None:
            args.threads = _default_threads()
        COMMANDS[args.command](args, argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except (SingularCorrelationError, FitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except (DataError, ValueError, OSError) as exc:
        return _fail("input-data", exc, EXIT_INPUT)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
