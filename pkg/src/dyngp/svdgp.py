"""SVD-based GP emulator for simulators with time-series output.

The L x N response matrix (one column per run) is decomposed as
``Y = U D V^T``.  The leading ``p`` singular triplets give a basis
``b_i = d_i u_i`` and each run's coefficients ``v_i`` are modelled by an
independent zero-mean GP with anisotropic Gaussian correlation.  Predictions
combine the coefficient GPs through the basis and add a residual noise term
estimated from the discarded components.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gp import validate_design
from .kernel import (
    DEFAULT_JITTER,
    CorrelationMatrix,
    InputScaling,
    JitterPolicy,
    KernelParams,
    cross_correlation,
    distance_powers,
    factorize,
)
from .optimize import OptimConfig, maximize_multistart

__all__ = [
    "SvdPriors",
    "SvdGPConfig",
    "SvdBasis",
    "CoefficientGP",
    "NoiseModel",
    "SvdGPModel",
    "DynamicPrediction",
    "decompose_responses",
    "coefficient_log_posterior",
    "fit_coefficient_gp",
    "estimate_noise",
    "fit_svdgp",
    "predict_svdgp",
]


@dataclass(frozen=True)
class SvdPriors:
    """Prior hyperparameters.

    Coefficient and noise variances get inverse-Gamma(alpha/2, beta/2) priors;
    each inverse rate ``1/theta_ij`` gets a Gamma(shape, rate) prior.  Setting
    ``theta_shape`` to None drops the rate prior (flat in theta).
    """

    coeff_alpha: float = 0.0
    coeff_beta: float = 0.0
    noise_alpha: float = 0.0
    noise_beta: float = 0.0
    theta_shape: float | None = 1.5
    theta_rate: float = 0.1

    def __post_init__(self):
        if min(self.coeff_alpha, self.coeff_beta, self.noise_alpha, self.noise_beta) < 0:
            raise ValueError("inverse-Gamma hyperparameters must be nonnegative")
        if self.theta_shape is not None and (self.theta_shape <= 0 or self.theta_rate <= 0):
            raise ValueError("Gamma prior on 1/theta needs positive shape and rate")


@dataclass(frozen=True)
class SvdGPConfig:
    power: float = 2.0
    optim: OptimConfig = field(default_factory=OptimConfig)
    jitter: JitterPolicy = DEFAULT_JITTER
    thetas: np.ndarray | None = None    # fixed (p, q) rates on scaled inputs; skips optimization
    n_components: int | None = None     # fix p instead of using the gamma threshold
    scale_inputs: bool = True
    threads: int = 1


@dataclass(frozen=True, eq=False)
class SvdBasis:
    U: np.ndarray                  # (L, p)
    d: np.ndarray                  # (p,)
    V: np.ndarray                  # (p, N), rows are the right singular vectors v_i
    singular_values: np.ndarray    # all k = min(L, N) values
    gamma: float

    @property
    def p(self) -> int:
        return self.d.size

    @property
    def k(self) -> int:
        return self.singular_values.size

    @property
    def B(self) -> np.ndarray:
        return self.U * self.d

    def reconstruct(self) -> np.ndarray:
        return self.B @ self.V


@dataclass(frozen=True, eq=False)
class CoefficientGP:
    index: int
    theta: np.ndarray
    corr: CorrelationMatrix
    v: np.ndarray
    weights: np.ndarray      # K^{-1} v
    psi: float               # v^T K^{-1} v
    alpha: float
    beta: float
    log_posterior: float
    power: float = 2.0

    @property
    def params(self) -> KernelParams:
        return KernelParams.with_power(self.theta, self.power)

    def predict(self, Xs_train: np.ndarray, Xs_new: np.ndarray):
        """Mean and variance of this coefficient at scaled inputs ``Xs_new``."""
        k = cross_correlation(Xs_train, Xs_new, self.params)
        mean = k.T @ self.weights
        explained = np.sum(k * self.corr.solve(k), axis=0)
        n = self.v.size
        var = (self.beta + self.psi) * np.maximum(1.0 - explained, 0.0) / (self.alpha + n)
        return mean, var


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float
    alpha: float
    beta: float
    rss: float


@dataclass(frozen=True)
class DynamicPrediction:
    mean: np.ndarray
    pointwise_variance: np.ndarray
    coeff_mean: np.ndarray
    coeff_variance: np.ndarray

    def interval(self, multiplier: float = 2.0):
        half = multiplier * np.sqrt(self.pointwise_variance)
        return self.mean - half, self.mean + half


@dataclass(frozen=True, eq=False)
class SvdGPModel:
    basis: SvdBasis
    coeff_gps: tuple[CoefficientGP, ...]
    noise: NoiseModel
    design: np.ndarray
    input_scaling: InputScaling
    priors: SvdPriors
    time_labels: tuple | None = None

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def q(self) -> int:
        return self.design.shape[1]

    @property
    def max_jitter(self) -> float:
        return max(g.corr.jitter for g in self.coeff_gps)

    def predict(self, Xnew) -> DynamicPrediction:
        """Vectorized prediction; fields have a leading axis of length M."""
        Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
        if Xnew.shape[1] != self.q:
            raise ValueError(f"query has {Xnew.shape[1]} inputs, model was fitted on {self.q}")
        if not np.all(np.isfinite(Xnew)):
            raise ValueError("query inputs must be finite")
        Xs = self.input_scaling.transform(self.design)
        Xs_new = self.input_scaling.transform(Xnew)
        cols = [g.predict(Xs, Xs_new) for g in self.coeff_gps]
        c_mean = np.column_stack([c[0] for c in cols])   # (M, p)
        c_var = np.column_stack([c[1] for c in cols])
        B = self.basis.B
        mean = c_mean @ B.T
        var = c_var @ (B ** 2).T + self.noise.sigma2
        return DynamicPrediction(mean, var, c_mean, c_var)


def decompose_responses(Y, gamma: float = 0.95, n_components: int | None = None) -> SvdBasis:
    """Truncated SVD of the L x N response matrix.

    ``p`` is the smallest count whose cumulative share of the singular-value
    sum strictly exceeds ``gamma``; numerically zero singular values are never
    kept and at least one component always is.  Each left singular vector is
    signed so its largest-magnitude entry is positive.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError(f"responses must be an L x N matrix, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("responses contain non-finite values")
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ValueError("response matrix is identically zero; no basis to extract")

    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    Vt = Vt * signs[:, None]

    rank = int(np.sum(s > s[0] * max(Y.shape) * np.finfo(float).eps))
    if n_components is not None:
        if not 1 <= n_components <= rank:
            raise ValueError(f"n_components must lie in [1, {rank}], got {n_components}")
        p = n_components
    else:
        frac = np.cumsum(s) / np.sum(s)
        above = np.nonzero(frac > gamma)[0]
        p = int(above[0]) + 1 if above.size else s.size
        p = max(1, min(p, rank))
    return SvdBasis(U[:, :p].copy(), s[:p].copy(), Vt[:p].copy(), s.copy(), float(gamma))


def _log_theta_prior(theta: np.ndarray, priors: SvdPriors):
    # Gamma(shape, rate) density of 1/theta, evaluated per dimension
    if priors.theta_shape is None:
        return 0.0, np.zeros_like(theta)
    a, b = priors.theta_shape, priors.theta_rate
    inv = 1.0 / theta
    const = a * math.log(b) - math.lgamma(a)
    value = float(np.sum(const + (a - 1.0) * np.log(inv) - b * inv))
    grad = -(a - 1.0) + b * inv          # d/d log(theta)
    return value, grad


def _coefficient_terms(log_theta, D, v, alpha, beta, priors, jitter, with_grad):
    theta = np.exp(log_theta)
    K = np.exp(-(D @ theta))
    corr = factorize(K, jitter)
    w = corr.solve(v)
    psi = float(v @ w)
    n = v.size
    lp, lp_grad = _log_theta_prior(theta, priors)
    value = -0.5 * corr.logdet() - 0.5 * (alpha + n) * math.log(0.5 * (beta + psi)) + lp
    if not with_grad:
        return value, None, corr, w, psi
    Kinv = corr.inverse()
    grad = np.empty(theta.size)
    for k in range(theta.size):
        dK = -theta[k] * D[:, :, k] * K
        grad[k] = (-0.5 * np.sum(Kinv * dK)
                   + 0.5 * (alpha + n) * (w @ dK @ w) / (beta + psi)
                   + lp_grad[k])
    return value, grad, corr, w, psi


def coefficient_log_posterior(Xs, v, theta, priors: SvdPriors | None = None, power: float = 2.0,
                              jitter: JitterPolicy = DEFAULT_JITTER, alpha: float | None = None,
                              beta: float | None = None) -> float:
    """Log of ``|K|^{-1/2} ((beta + psi)/2)^{-(alpha + N)/2} pi(theta)`` on scaled inputs ``Xs``."""
    priors = priors or SvdPriors()
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    v = np.asarray(v, dtype=float)
    alpha = priors.coeff_alpha if alpha is None else alpha
    beta = priors.coeff_beta if beta is None else beta
    D = distance_powers(Xs, Xs, np.full(Xs.shape[1], float(power)))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (Xs.shape[1],))
    return float(_coefficient_terms(np.log(theta), D, v, alpha, beta, priors, jitter, False)[0])


def fit_coefficient_gp(Xs, v, priors: SvdPriors | None = None, config: SvdGPConfig | None = None,
                       index: int = 0, theta=None) -> CoefficientGP:
    """MAP fit of one coefficient GP.

    Parameters
    ----------
    Xs : array of shape (N, q)
        Design already mapped to the unit cube.
    v : array of shape (N,)
        Coefficients of basis vector ``index`` across runs.
    priors, config
        Prior hyperparameters and optimizer settings.
    index : int
        Position of the component in the basis (bookkeeping only).
    theta : array of shape (q,), optional
        Fixed rates; skips the optimization.
    """
    priors = priors or SvdPriors()
    config = config or SvdGPConfig()
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != Xs.shape[0]:
        raise ValueError(f"coefficient vector has length {v.size}, design has {Xs.shape[0]} rows")
    q = Xs.shape[1]
    D = distance_powers(Xs, Xs, np.full(q, float(config.power)))
    alpha, beta = priors.coeff_alpha, priors.coeff_beta

    if theta is None:
        def objective(z):
            value, grad, *_ = _coefficient_terms(z, D, v, alpha, beta, priors, config.jitter, True)
            return value, grad

        log_theta = maximize_multistart(objective, q, config.optim).x
    else:
        log_theta = np.log(np.broadcast_to(np.asarray(theta, dtype=float), (q,)))

    value, _, corr, w, psi = _coefficient_terms(log_theta, D, v, alpha, beta, priors, config.jitter, False)
    return CoefficientGP(index, np.exp(log_theta), corr, v.copy(), w, psi, alpha, beta,
                         float(value), float(config.power))


def estimate_noise(Y, basis: SvdBasis, priors: SvdPriors | None = None) -> NoiseModel:
    """MAP noise variance ``(r^T r + beta) / (N L + alpha + 2)`` from the truncation residual."""
    priors = priors or SvdPriors()
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (basis.U.shape[0], basis.V.shape[1]):
        raise ValueError(f"responses have shape {Y.shape}, basis expects {(basis.U.shape[0], basis.V.shape[1])}")
    r = (Y - basis.reconstruct()).ravel(order="F")
    rss = float(r @ r)
    L, N = Y.shape
    sigma2 = (rss + priors.noise_beta) / (N * L + priors.noise_alpha + 2.0)
    return NoiseModel(sigma2, priors.noise_alpha, priors.noise_beta, rss)


def fit_svdgp(X, Y, gamma: float = 0.95, priors: SvdPriors | None = None,
              config: SvdGPConfig | None = None, time_labels=None) -> SvdGPModel:
    """Fit the SVD-based dynamic GP.

    ``X`` is the N x q design, ``Y`` the L x N response matrix.  The ``p``
    coefficient GPs are fitted independently, on up to ``config.threads``
    worker threads; the result does not depend on the thread count.
    """
    priors = priors or SvdPriors()
    config = config or SvdGPConfig()
    X = validate_design(X, n_min=1)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != X.shape[0]:
        raise ValueError(f"responses must be L x N with N = {X.shape[0]} design rows, got shape {Y.shape}")

    basis = decompose_responses(Y, gamma, config.n_components)
    scaling = InputScaling.fit(X) if config.scale_inputs else InputScaling.identity(X.shape[1])
    Xs = scaling.transform(X)

    thetas = [None] * basis.p
    if config.thetas is not None:
        fixed = np.atleast_2d(np.asarray(config.thetas, dtype=float))
        if fixed.shape[0] < basis.p:
            raise ValueError(f"{fixed.shape[0]} fixed rate vectors given for {basis.p} components")
        thetas = list(fixed[:basis.p])

    def fit_one(i):
        return fit_coefficient_gp(Xs, basis.V[i], priors, config, index=i, theta=thetas[i])

    if config.threads > 1 and basis.p > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            gps = tuple(pool.map(fit_one, range(basis.p)))
    else:
        gps = tuple(fit_one(i) for i in range(basis.p))

    noise = estimate_noise(Y, basis, priors)
    labels = None if time_labels is None else tuple(time_labels)
    return SvdGPModel(basis, gps, noise, X, scaling, priors, labels)


def predict_svdgp(model: SvdGPModel, x0) -> DynamicPrediction:
    """Predictive mean and pointwise variance of the whole series at one input."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.ndim != 1 or x0.size != model.q:
        raise ValueError(f"x0 must be a vector of length {model.q}, got shape {x0.shape}")
    pred = model.predict(x0[None, :])
    return DynamicPrediction(pred.mean[0], pred.pointwise_variance[0], pred.coeff_mean[0],
                             pred.coeff_variance[0])
