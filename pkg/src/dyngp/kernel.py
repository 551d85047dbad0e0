"""Power-exponential correlation, correlation matrices and jittered Cholesky.

All GP variants in the package share this module.  Inputs are expected to be
rescaled to the unit cube (see :class:`InputScaling`) before distances are
taken, so lengthscale rates are comparable across dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

__all__ = [
    "KernelParams",
    "InputScaling",
    "JitterPolicy",
    "CorrelationMatrix",
    "SingularCorrelationError",
    "correlation",
    "cross_correlation",
    "distance_powers",
    "build_correlation_matrix",
    "factorize",
    "gap_rate_cap",
]


class SingularCorrelationError(np.linalg.LinAlgError):
    """Cholesky factorization failed even at the largest allowed jitter."""


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelParams:
    """Rates ``theta`` and exponents ``power`` of the power-exponential kernel."""

    theta: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        theta = _readonly(np.atleast_1d(self.theta))
        power = _readonly(np.atleast_1d(self.power))
        if theta.ndim != 1 or theta.shape != power.shape:
            raise ValueError(f"theta and power must be vectors of equal length, got {theta.shape} and {power.shape}")
        if not (np.all(np.isfinite(theta)) and np.all(theta >= 0)):
            raise ValueError(f"theta must be finite and nonnegative, got {theta}")
        if not np.all((power > 0) & (power <= 2)):
            raise ValueError(f"power must lie in (0, 2], got {power}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "power", power)

    @classmethod
    def with_power(cls, theta, power: float) -> "KernelParams":
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return cls(theta, np.full(theta.shape, float(power)))

    @property
    def dim(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class InputScaling:
    """Per-dimension affine map of the training box onto [0, 1]^q."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _readonly(self.lower))
        object.__setattr__(self, "upper", _readonly(self.upper))

    @classmethod
    def fit(cls, X: np.ndarray) -> "InputScaling":
        X = np.asarray(X, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0))

    @classmethod
    def identity(cls, q: int) -> "InputScaling":
        return cls(np.zeros(q), np.ones(q))

    @property
    def span(self) -> np.ndarray:
        span = self.upper - self.lower
        # a constant column carries no distance information; avoid 0/0
        return np.where(span > 0, span, 1.0)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self.span


@dataclass(frozen=True)
class JitterPolicy:
    """Escalating diagonal inflation tried until Cholesky succeeds.

    Jitter is relative to the mean diagonal of the matrix.  A ``start`` of
    zero first tries the exact matrix and then continues from ``floor``.
    """

    start: float = 1e-8
    growth: float = 10.0
    maximum: float = 1e-2
    floor: float = 1e-8

    def __post_init__(self):
        if self.start < 0 or self.floor <= 0 or self.growth <= 1 or self.maximum < max(self.start, self.floor):
            raise ValueError(f"invalid jitter policy {self}")

    def levels(self):
        level = self.start
        if level == 0.0:
            yield 0.0
            level = self.floor
        while level <= self.maximum * (1 + 1e-12):
            yield level
            level *= self.growth


DEFAULT_JITTER = JitterPolicy()


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Correlation matrix together with its jittered lower Cholesky factor."""

    matrix: np.ndarray
    jitter: float
    chol: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(R + jitter I) x = b``."""
        return cho_solve((self.chol, True), b, check_finite=False)

    def half_solve(self, b: np.ndarray) -> np.ndarray:
        """``L^{-1} b`` for the Cholesky factor ``L``."""
        return solve_triangular(self.chol, b, lower=True, check_finite=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.n))

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def _check_points(x1: np.ndarray, x2: np.ndarray, params: KernelParams):
    if x1.shape[-1] != params.dim or x2.shape[-1] != params.dim:
        raise ValueError(
            f"dimension mismatch: inputs have {x1.shape[-1]} and {x2.shape[-1]} columns, kernel has {params.dim}")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise ValueError("kernel inputs must be finite")


def correlation(x1, x2, params: KernelParams) -> float:
    """Power-exponential correlation ``prod_k exp(-theta_k |x1_k - x2_k|^p_k)``."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.ndim != 1 or x2.ndim != 1:
        raise ValueError("correlation takes two single points; use cross_correlation for matrices")
    _check_points(x1, x2, params)
    return float(np.exp(-np.sum(params.theta * np.abs(x1 - x2) ** params.power)))


def distance_powers(X1: np.ndarray, X2: np.ndarray, power: np.ndarray) -> np.ndarray:
    """Array ``D[i, j, k] = |X1[i, k] - X2[j, k]|^power_k`` of shape (n1, n2, q)."""
    return np.abs(X1[:, None, :] - X2[None, :, :]) ** np.asarray(power)


def cross_correlation(X1, X2, params: KernelParams) -> np.ndarray:
    """Correlation between every row of ``X1`` and every row of ``X2``."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    _check_points(X1, X2, params)
    return np.exp(-(distance_powers(X1, X2, params.power) @ params.theta))


def gap_rate_cap(Xs: np.ndarray, power, min_corr: float) -> np.ndarray:
    """Largest rate per dimension keeping correlation >= ``min_corr`` across design gaps.

    The gap in dimension k is the widest spacing between consecutive distinct
    coordinate values of ``Xs``.  Dimensions with a single value get ``inf``.
    """
    if not 0 < min_corr < 1:
        raise ValueError("min_corr must lie in (0, 1)")
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    power = np.broadcast_to(np.asarray(power, dtype=float), (Xs.shape[1],))
    caps = np.full(Xs.shape[1], np.inf)
    for k in range(Xs.shape[1]):
        vals = np.unique(Xs[:, k])
        if vals.size > 1:
            caps[k] = -np.log(min_corr) / np.max(np.diff(vals)) ** power[k]
    return caps


def factorize(R: np.ndarray, policy: JitterPolicy = DEFAULT_JITTER, label: str = "design") -> CorrelationMatrix:
    """Cholesky-factorize ``R + jitter I`` with the smallest jitter level that works.

    Raises
    ------
    SingularCorrelationError
        If the factorization fails at every level of ``policy``.
    """
    R = np.asarray(R, dtype=float)
    scale = float(np.mean(np.diag(R)))
    eye = np.eye(R.shape[0])
    tried = None
    for level in policy.levels():
        jitter = level * scale
        try:
            L = np.linalg.cholesky(R + jitter * eye)
        except np.linalg.LinAlgError:
            tried = jitter
            continue
        if np.all(np.isfinite(L)):
            R = R.copy()
            R.setflags(write=False)
            L.setflags(write=False)
            return CorrelationMatrix(R, jitter, L)
    raise SingularCorrelationError(
        f"correlation matrix of {label} ({R.shape[0]} points) is not positive definite "
        f"even with jitter {tried:.3g}; check for duplicated or near-duplicated rows")


def build_correlation_matrix(X, params: KernelParams, jitter_policy: JitterPolicy = DEFAULT_JITTER,
                             label: str = "design") -> CorrelationMatrix:
    """Correlation matrix of the rows of ``X`` (already scaled), factorized."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = cross_correlation(X, X, params)
    # exact symmetry and unit diagonal regardless of rounding in the exponent
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return factorize(R, jitter_policy, label=label)
