"""Named end-to-end scenarios used by ``dyngp benchmark``.

Each scenario writes plot-ready CSV curves and a ``metrics.json`` into an
output directory.  Wall-clock times go to a separate ``timing.json`` so the
numeric outputs are byte-identical across repeated runs and thread counts.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np

from .design import latin_hypercube, random_lhs, simulator_example1, simulator_forrester_unit
from .gp import GPConfig, fit_scalar_gp
from .io import dump_json, format_float
from .local import NeighborhoodConfig, predict_local
from .optimize import OptimConfig
from .svdgp import SvdGPConfig, fit_svdgp

__all__ = ["nrmse", "run_example1", "run_example3", "run_example4", "SCENARIOS"]


def nrmse(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Row-wise RMSE divided by the range of the true series."""
    pred, truth = np.atleast_2d(pred), np.atleast_2d(truth)
    return np.sqrt(np.mean((pred - truth) ** 2, axis=1)) / np.ptp(truth, axis=1)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def _write_json(path: Path, obj):
    with path.open("w", encoding="utf-8") as fh:
        dump_json(obj, fh)


def _forrester_data(X, timepoints):
    return np.column_stack([simulator_forrester_unit(x, timepoints) for x in X])


def run_example1(out_dir, seed: int = 1, nstarts: int = 5, n_train: int = 7, n_grid: int = 100) -> dict:
    """Scalar GP on ``log(x + 0.1) + sin(5 pi x)`` for powers 1.95 and 2.

    Writes ``training.csv``, ``curves.csv`` (truth and both fits on a
    ``n_grid``-point grid) and ``metrics.json``.  The baseline is the
    constant predictor at the fitted mean.
    """
    out_dir = Path(out_dir)
    x = latin_hypercube(n_train, 1, seed=seed)
    y = simulator_example1(x[:, 0])
    grid = np.linspace(0.0, 1.0, n_grid)
    truth = simulator_example1(grid)
    optim = OptimConfig(nstarts=nstarts, seed=seed)

    metrics: dict = {"scenario": "example1", "seed": seed, "n_train": n_train, "fits": {}}
    timing = {}
    columns = [grid, truth]
    header = ["x", "truth"]
    for power in (1.95, 2.0):
        t0 = time.perf_counter()
        model = fit_scalar_gp(x, y, GPConfig(power=power, optim=optim))
        timing[f"fit_seconds_power_{power:g}"] = time.perf_counter() - t0
        pred = model.predict(grid[:, None])
        train_pred = model.predict(x)
        rmse = float(np.sqrt(np.mean((pred.mean - truth) ** 2)))
        base = float(np.sqrt(np.mean((model.mu_hat - truth) ** 2)))
        metrics["fits"][f"{power:g}"] = {
            "theta": model.params.theta, "mu_hat": model.mu_hat, "sigma2_hat": model.sigma2_hat,
            "loglik": model.loglik, "jitter": model.corr.jitter,
            "max_interpolation_error": float(np.max(np.abs(train_pred.mean - y))),
            "rmse": rmse, "baseline_rmse": base, "rmse_ratio": base / rmse,
        }
        tag = f"{power:g}".replace(".", "")
        header += [f"mean_p{tag}", f"var_cond_p{tag}", f"var_mle_p{tag}"]
        columns += [pred.mean, pred.variance_conditional, pred.variance_mle]

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "training.csv", ["x", "y"], zip(x[:, 0].tolist(), y.tolist()))
    _write_csv(out_dir / "curves.csv", header, zip(*(c.tolist() for c in columns)))
    _write_json(out_dir / "metrics.json", metrics)
    _write_json(out_dir / "timing.json", timing)
    return {**metrics, "timing": timing}


def run_example3(out_dir, seed: int = 1234568, threads: int = 1, nstarts: int = 5, gamma: float = 0.95,
                 multiplier: float = 2.0, n_train: int = 20, n_test: int = 50, n_times: int = 200) -> dict:
    """Full svdGP on the time-series test function.

    Training inputs are a maximin LHS of size ``n_train`` and test inputs a
    random LHS of size ``n_test``, both on the unit cube, drawn from one
    generator seeded with ``seed``.  Writes ``nrmse.csv`` (per test input),
    ``curves.csv`` (truth, mean, variance and interval per test input and
    time) and ``metrics.json``.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    train = latin_hypercube(n_train, 3, seed=rng)
    test = random_lhs(n_test, 3, seed=rng)
    tp = np.linspace(0.0, 1.0, n_times)
    Y = _forrester_data(train, tp)
    truth = _forrester_data(test, tp).T

    config = SvdGPConfig(optim=OptimConfig(nstarts=nstarts, seed=seed), threads=threads)
    t0 = time.perf_counter()
    model = fit_svdgp(train, Y, gamma, config=config)
    fit_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    pred = model.predict(test)
    predict_seconds = time.perf_counter() - t0

    err = nrmse(pred.mean, truth)
    lo, hi = pred.interval(multiplier)
    inside = (truth >= lo) & (truth <= hi)
    metrics = {
        "scenario": "example3", "seed": seed, "gamma": gamma, "n_train": n_train, "n_test": n_test,
        "n_times": n_times, "p": model.p, "sigma2_hat": model.noise.sigma2, "jitter": model.max_jitter,
        "thetas": [g.theta for g in model.coeff_gps],
        "nrmse_median": float(np.median(err)), "nrmse_mean": float(np.mean(err)),
        "nrmse_max": float(np.max(err)), "coverage": float(np.mean(inside)), "multiplier": multiplier,
    }
    timing = {"fit_seconds": fit_seconds, "predict_seconds": predict_seconds, "threads": threads}

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "nrmse.csv", ["test_id", "x1", "x2", "x3", "nrmse", "coverage"],
               ([j, *test[j].tolist(), float(err[j]), float(np.mean(inside[j]))] for j in range(n_test)))
    _write_csv(out_dir / "curves.csv", ["test_id", "t", "truth", "mean", "variance", "lo", "hi"],
               ([j, float(tp[i]), float(truth[j, i]), float(pred.mean[j, i]),
                 float(pred.pointwise_variance[j, i]), float(lo[j, i]), float(hi[j, i])]
                for j in range(n_test) for i in range(n_times)))
    _write_json(out_dir / "metrics.json", metrics)
    _write_json(out_dir / "timing.json", timing)
    return {**metrics, "nrmse": err, "timing": timing}


def run_example4(out_dir, seed: int = 1, threads: int = 1, nstarts: int = 5, gamma: float = 0.95,
                 multiplier: float = 2.0, n_train: int = 500, n_test: int = 30, n_times: int = 200,
                 nn: int = 30, n0: int = 20, n_spot: int = 6) -> dict:
    """Local svdGP (greedy and k-NN) on a large maximin design of the time-series test function.

    Writes ``nrmse.csv`` with both modes per test input, ``curves.csv`` for
    the first ``n_spot`` test inputs and ``metrics.json``.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    train = latin_hypercube(n_train, 3, seed=rng)
    test = random_lhs(n_test, 3, seed=rng)
    tp = np.linspace(0.0, 1.0, n_times)
    Y = _forrester_data(train, tp)
    truth = _forrester_data(test, tp).T

    svd_config = SvdGPConfig(optim=OptimConfig(nstarts=nstarts, seed=seed))
    nb = NeighborhoodConfig(nn=nn, n0=n0)
    metrics: dict = {"scenario": "example4", "seed": seed, "gamma": gamma, "n_train": n_train,
                     "n_test": n_test, "n_times": n_times, "nn": nn, "n0": n0, "modes": {}}
    timing: dict = {"threads": threads}
    results = {}
    for mode, label in (("greedy", "lasvd"), ("knn", "knn")):
        t0 = time.perf_counter()
        fits = predict_local(train, Y, test, nb, mode, gamma, svd_config=svd_config, threads=threads)
        timing[f"{label}_seconds"] = time.perf_counter() - t0
        failed = [j for j, f in enumerate(fits) if not f.ok]
        mean = np.array([f.prediction.mean if f.ok else np.full(n_times, np.nan) for f in fits])
        var = np.array([f.prediction.pointwise_variance if f.ok else np.full(n_times, np.nan) for f in fits])
        err = nrmse(mean, truth)
        inside = np.abs(truth - mean) <= multiplier * np.sqrt(var)
        results[label] = (fits, mean, var, err)
        metrics["modes"][label] = {
            "nrmse_mean": float(np.nanmean(err)), "nrmse_median": float(np.nanmedian(err)),
            "nrmse_max": float(np.nanmax(err)), "coverage": float(np.mean(inside)),
            "failed_queries": failed, "p": [f.model.p if f.ok else 0 for f in fits],
        }
    metrics["spot_check_nrmse"] = results["lasvd"][3][:n_spot]

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "nrmse.csv", ["test_id", "x1", "x2", "x3", "nrmse_lasvd", "nrmse_knn"],
               ([j, *test[j].tolist(), float(results["lasvd"][3][j]), float(results["knn"][3][j])]
                for j in range(n_test)))
    rows = []
    for j in range(min(n_spot, n_test)):
        for i in range(n_times):
            rows.append([j, float(tp[i]), float(truth[j, i]),
                         float(results["lasvd"][1][j, i]), float(results["lasvd"][2][j, i]),
                         float(results["knn"][1][j, i]), float(results["knn"][2][j, i])])
    _write_csv(out_dir / "curves.csv",
               ["test_id", "t", "truth", "mean_lasvd", "var_lasvd", "mean_knn", "var_knn"], rows)
    _write_json(out_dir / "metrics.json", metrics)
    _write_json(out_dir / "timing.json", timing)
    return {**metrics, "timing": timing,
            "nrmse_lasvd": results["lasvd"][3], "nrmse_knn": results["knn"][3]}


SCENARIOS = {"example1": run_example1, "example3": run_example3, "example4": run_example4}
