"""Multi-start bounded maximization over log lengthscale rates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .design import latin_hypercube
from .kernel import SingularCorrelationError

__all__ = ["OptimConfig", "OptimResult", "FitError", "maximize_multistart"]

_FAILED = 1e30


class FitError(RuntimeError):
    """Hyperparameter optimization failed from every starting point."""


@dataclass(frozen=True)
class OptimConfig:
    """Settings for the multi-start search over ``log(theta)``.

    ``bounds`` is the search box; starting points are a seeded Latin
    hypercube over the narrower ``start_bounds`` box.
    """

    nstarts: int = 5
    seed: int = 0
    bounds: tuple[float, float] = (math.log(1e-3), math.log(1e3))
    start_bounds: tuple[float, float] = (math.log(0.1), math.log(100.0))
    maxiter: int = 200
    gtol: float = 1e-8
    tie_tol: float = 1e-9

    def __post_init__(self):
        if self.nstarts < 1:
            raise ValueError("nstarts must be >= 1")
        lo, hi = self.bounds
        slo, shi = self.start_bounds
        if not (lo < hi and lo <= slo < shi <= hi):
            raise ValueError(f"start box {self.start_bounds} must lie inside search box {self.bounds}")

    def unit_starts(self, q: int) -> np.ndarray:
        return latin_hypercube(self.nstarts, q, maximin_iters=1, seed=self.seed)


@dataclass(frozen=True)
class OptimResult:
    x: np.ndarray
    value: float
    n_converged: int
    values: tuple[float, ...]


def maximize_multistart(objective, q: int, config: OptimConfig, upper=None) -> OptimResult:
    """Maximize ``objective(log_theta) -> (value, gradient)`` from several starts.

    ``upper`` optionally tightens the upper end of the search box per
    dimension (log scale).  Starts whose objective cannot be evaluated
    (singular correlation matrix) are penalized rather than aborted.  Among
    starts reaching the same best value (within ``tie_tol`` relative) the one
    with smallest ``|theta|`` wins.
    """

    def negated(z):
        try:
            val, grad = objective(z)
        except SingularCorrelationError:
            return _FAILED, np.zeros_like(z)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return _FAILED, np.zeros_like(z)
        return -val, -np.asarray(grad, dtype=float)

    lo = config.bounds[0]
    hi = np.full(q, config.bounds[1])
    if upper is not None:
        hi = np.maximum(np.minimum(hi, upper), lo)
    # squeeze the start box under any tightened upper bound
    slo, shi = config.start_bounds
    s_hi = np.minimum(shi, hi)
    s_lo = np.minimum(slo, lo + 0.5 * (s_hi - lo))
    results = []
    for u in config.unit_starts(q):
        z0 = s_lo + u * (s_hi - s_lo)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(negated, z0, jac=True, method="L-BFGS-B",
                           bounds=list(zip([lo] * q, hi)),
                           options={"maxiter": config.maxiter, "gtol": config.gtol})
        if res.fun < _FAILED:
            results.append((-float(res.fun), np.clip(res.x, lo, hi)))
    if not results:
        raise FitError(f"hyperparameter optimization failed from all {config.nstarts} starts")

    best = max(v for v, _ in results)
    tol = config.tie_tol * max(1.0, abs(best))
    tied = [(v, z) for v, z in results if v >= best - tol]
    value, x = min(tied, key=lambda vz: float(np.linalg.norm(np.exp(vz[1]))))
    return OptimResult(x=x, value=value, n_converged=len(results),
                       values=tuple(v for v, _ in results))
