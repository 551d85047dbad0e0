"""Scalar-output GP emulator with a constant mean.

The model is ``y(x) = mu + z(x)`` with ``z ~ GP(0, sigma_z^2 R)``.  Given the
correlation rates, the mean and process variance have closed-form maximum
likelihood estimates; the rates are found by maximizing the resulting
profile (concentrated) log-likelihood.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    DEFAULT_JITTER,
    CorrelationMatrix,
    InputScaling,
    JitterPolicy,
    KernelParams,
    cross_correlation,
    distance_powers,
    factorize,
    gap_rate_cap,
)
from .optimize import OptimConfig, maximize_multistart

__all__ = [
    "GPConfig",
    "ScalarGPModel",
    "ScalarPrediction",
    "DegenerateResponseWarning",
    "fit_scalar_gp",
    "predict_scalar",
    "profile_loglik",
    "validate_design",
]


class DegenerateResponseWarning(UserWarning):
    """Responses have zero spread; the model is a constant predictor."""


@dataclass(frozen=True)
class GPConfig:
    power: float = 1.95
    optim: OptimConfig = field(default_factory=OptimConfig)
    jitter: JitterPolicy = DEFAULT_JITTER
    theta: np.ndarray | None = None  # fixed rates (on scaled inputs); skips optimization
    scale_inputs: bool = True
    # neighbouring design values must stay at least this correlated; None disables
    max_gap_correlation: float | None = 0.1


@dataclass(frozen=True)
class ScalarPrediction:
    mean: float | np.ndarray
    variance_conditional: float | np.ndarray
    variance_mle: float | np.ndarray


@dataclass(frozen=True, eq=False)
class ScalarGPModel:
    design: np.ndarray
    responses: np.ndarray
    params: KernelParams
    mu_hat: float
    sigma2_hat: float
    corr: CorrelationMatrix
    weights: np.ndarray          # R^{-1} (Y - 1 mu_hat)
    input_scaling: InputScaling
    loglik: float
    degenerate: bool = False
    n_converged: int = 0

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def q(self) -> int:
        return self.design.shape[1]

    def predict(self, Xnew) -> ScalarPrediction:
        """Vectorized prediction at the rows of ``Xnew`` (shape (M, q))."""
        Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
        if Xnew.shape[1] != self.q:
            raise ValueError(f"query has {Xnew.shape[1]} inputs, model was fitted on {self.q}")
        if not np.all(np.isfinite(Xnew)):
            raise ValueError("query inputs must be finite")
        if self.degenerate:
            m = Xnew.shape[0]
            return ScalarPrediction(np.full(m, self.mu_hat), np.zeros(m), np.zeros(m))
        Xs = self.input_scaling.transform(self.design)
        r = cross_correlation(Xs, self.input_scaling.transform(Xnew), self.params)  # (n, M)
        mean = self.mu_hat + r.T @ self.weights
        Rinv_r = self.corr.solve(r)
        Rinv_1 = self.corr.solve(np.ones(self.n))
        explained = np.sum(r * Rinv_r, axis=0)
        var_c = self.sigma2_hat * np.maximum(1.0 - explained, 0.0)
        mean_term = (1.0 - Rinv_1 @ r) ** 2 / np.sum(Rinv_1)
        var_mle = var_c + self.sigma2_hat * mean_term
        return ScalarPrediction(mean, var_c, var_mle)


def validate_design(X, n_min: int = 1) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"design must be an N x q matrix, got shape {X.shape}")
    if X.shape[0] < n_min:
        raise ValueError(f"need at least {n_min} design points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design contains non-finite values")
    if np.unique(X, axis=0).shape[0] != X.shape[0]:
        raise ValueError("design has duplicated rows")
    return X


def _gls(corr: CorrelationMatrix, Y: np.ndarray):
    ones = np.ones(Y.size)
    Rinv_1 = corr.solve(ones)
    Rinv_y = corr.solve(Y)
    mu = float(ones @ Rinv_y / np.sum(Rinv_1))
    a = Rinv_y - mu * Rinv_1
    sigma2 = float((Y - mu) @ a / Y.size)
    return mu, sigma2, a


def _profile_terms(log_theta, D, Y, power, jitter: JitterPolicy, with_grad: bool):
    theta = np.exp(log_theta)
    R = np.exp(-(D @ theta))
    corr = factorize(R, jitter)
    mu, sigma2, a = _gls(corr, Y)
    n = Y.size
    value = -0.5 * (n * np.log(sigma2) + corr.logdet())
    if not with_grad:
        return value, None, corr, mu, sigma2, a
    Rinv = corr.inverse()
    grad = np.empty(theta.size)
    for k in range(theta.size):
        dR = -theta[k] * D[:, :, k] * R
        grad[k] = -0.5 * (np.sum(Rinv * dR) - a @ dR @ a / sigma2)
    return value, grad, corr, mu, sigma2, a


def profile_loglik(X, Y, theta, power: float = 1.95, jitter: JitterPolicy = DEFAULT_JITTER,
                   scale_inputs: bool = True) -> float:
    """Concentrated log-likelihood ``-(n log sigma2_hat + log|R|) / 2`` at rates ``theta``."""
    X = validate_design(X)
    Y = np.asarray(Y, dtype=float)
    scaling = InputScaling.fit(X) if scale_inputs else InputScaling.identity(X.shape[1])
    Xs = scaling.transform(X)
    pw = np.full(X.shape[1], float(power))
    D = distance_powers(Xs, Xs, pw)
    return float(_profile_terms(np.log(np.asarray(theta, dtype=float)), D, Y - Y.mean(), pw, jitter, False)[0])


def fit_scalar_gp(X, Y, config: GPConfig | None = None) -> ScalarGPModel:
    """Fit the constant-mean GP by profile likelihood.

    Parameters
    ----------
    X : array of shape (N, q)
        Design, one row per simulator run (N >= 2, rows distinct).
    Y : array of shape (N,)
        Simulator responses.
    config : GPConfig, optional
        Correlation exponent, optimizer settings and jitter policy.

    Returns
    -------
    ScalarGPModel
    """
    config = config or GPConfig()
    X = validate_design(X, n_min=2)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if Y.size != X.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows but {Y.size} responses were given")
    if not np.all(np.isfinite(Y)):
        raise ValueError("responses must be finite")
    n, q = X.shape
    scaling = InputScaling.fit(X) if config.scale_inputs else InputScaling.identity(q)
    Xs = scaling.transform(X)
    power = np.full(q, float(config.power))
    D = distance_powers(Xs, Xs, power)

    # work with centered responses; mu_hat is shifted back at the end
    offset = float(np.mean(Y))
    Yc = Y - offset

    if np.ptp(Y) <= 1e-14 * max(1.0, float(np.max(np.abs(Y)))):
        warnings.warn("responses are constant; returning a constant predictor", DegenerateResponseWarning,
                      stacklevel=2)
        theta = np.ones(q) if config.theta is None else np.asarray(config.theta, dtype=float)
        params = KernelParams(theta, power)
        corr = factorize(np.exp(-(D @ params.theta)), config.jitter)
        return ScalarGPModel(X, Y, params, offset, 0.0, corr, np.zeros(n), scaling,
                             loglik=np.inf, degenerate=True)

    if config.theta is not None:
        log_theta = np.log(np.broadcast_to(np.asarray(config.theta, dtype=float), (q,)))
        n_conv = 0
    else:
        def objective(z):
            value, grad, *_ = _profile_terms(z, D, Yc, power, config.jitter, True)
            return value, grad

        upper = None
        if config.max_gap_correlation is not None:
            upper = np.log(gap_rate_cap(Xs, power, config.max_gap_correlation))
        res = maximize_multistart(objective, q, config.optim, upper=upper)
        log_theta, n_conv = res.x, res.n_converged

    value, _, corr, mu_c, sigma2, a = _profile_terms(log_theta, D, Yc, power, config.jitter, False)
    params = KernelParams(np.exp(log_theta), power)
    return ScalarGPModel(X, Y, params, offset + mu_c, sigma2, corr, a, scaling,
                         loglik=float(value), n_converged=n_conv)


def predict_scalar(model: ScalarGPModel, x0) -> ScalarPrediction:
    """Conditional mean and both variance estimates at a single point ``x0``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.ndim != 1 or x0.size != model.q:
        raise ValueError(f"x0 must be a vector of length {model.q}, got shape {x0.shape}")
    pred = model.predict(x0[None, :])
    return ScalarPrediction(float(pred.mean[0]), float(pred.variance_conditional[0]),
                            float(pred.variance_mle[0]))
