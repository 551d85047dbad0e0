"""Space-filling designs and the test-function simulators used in the examples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

__all__ = [
    "Domain",
    "TimeGrid",
    "latin_hypercube",
    "random_lhs",
    "min_pairwise_distance",
    "simulator_example1",
    "simulator_forrester",
    "simulator_forrester_unit",
    "FORRESTER_DOMAIN",
]


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower_k, upper_k]`` per input dimension."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ValueError("lower and upper must be equal-length non-empty sequences")
        if not np.all(lo < hi):
            raise ValueError(f"domain needs lower < upper in every dimension, got {self.lower} / {self.upper}")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @classmethod
    def from_bounds(cls, bounds) -> "Domain":
        """Build from a sequence of ``(lower, upper)`` pairs."""
        bounds = list(bounds)
        return cls(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def from_unit(self, U: np.ndarray) -> np.ndarray:
        """Affinely map points of the unit cube into the domain."""
        U = np.asarray(U, dtype=float)
        lo = np.asarray(self.lower)
        return lo + U * (np.asarray(self.upper) - lo)

    def to_unit(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        lo = np.asarray(self.lower)
        return (X - lo) / (np.asarray(self.upper) - lo)


@dataclass(frozen=True)
class TimeGrid:
    """``n_points`` equidistant points on ``[start, stop]``."""

    start: float
    stop: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("a time grid needs at least one point")
        if self.n_points > 1 and not self.start < self.stop:
            raise ValueError("time grid must be strictly increasing (start < stop)")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.n_points)

    def __len__(self) -> int:
        return self.n_points


FORRESTER_DOMAIN = Domain((4.0, 4.0, 1.0), (10.0, 20.0, 7.0))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _random_lhs(n: int, q: int, rng: np.random.Generator) -> np.ndarray:
    # one uniform draw inside each of the n strata, strata shuffled per column
    cells = np.column_stack([rng.permutation(n) for _ in range(q)])
    return (cells + rng.random((n, q))) / n


def min_pairwise_distance(X: np.ndarray) -> float:
    """Smallest Euclidean distance between two rows of ``X`` (inf for one row)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        return np.inf
    return float(pdist(X).min())


def latin_hypercube(n: int, q: int, maximin_iters: int = 100, seed=None,
                    domain: Domain | None = None) -> np.ndarray:
    """Maximin Latin hypercube design.

    Draws ``maximin_iters`` independent random Latin hypercubes and keeps the
    one with the largest minimum pairwise distance (first draw wins ties).

    Parameters
    ----------
    n : int
        Number of runs (rows).
    q : int
        Number of inputs (columns).
    maximin_iters : int
        Number of candidate designs; 1 gives a plain random LHS.
    seed : int, Generator or None
        Seed for the generator owned by this call.
    domain : Domain, optional
        If given, the unit-cube design is mapped affinely into it.

    Returns
    -------
    ndarray of shape (n, q)
    """
    if n < 1 or q < 1:
        raise ValueError(f"need n >= 1 and q >= 1, got n={n}, q={q}")
    if maximin_iters < 1:
        raise ValueError("maximin_iters must be >= 1")
    if domain is not None and domain.dim != q:
        raise ValueError(f"domain has {domain.dim} dimensions, design has {q}")
    rng = _rng(seed)
    best = _random_lhs(n, q, rng)
    best_score = min_pairwise_distance(best)
    for _ in range(maximin_iters - 1):
        cand = _random_lhs(n, q, rng)
        score = min_pairwise_distance(cand)
        if score > best_score:
            best, best_score = cand, score
    return best if domain is None else domain.from_unit(best)


def random_lhs(n: int, q: int, seed=None, domain: Domain | None = None) -> np.ndarray:
    """A single random Latin hypercube (no maximin selection)."""
    return latin_hypercube(n, q, maximin_iters=1, seed=seed, domain=domain)


def simulator_example1(x):
    """``log(x + 0.1) + sin(5 pi x)``; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= -0.1):
        raise ValueError("simulator_example1 is undefined for x <= -0.1")
    y = np.log(x + 0.1) + np.sin(5.0 * np.pi * x)
    return float(y) if y.ndim == 0 else y


def simulator_forrester(x, grid) -> np.ndarray:
    """Time-series test function ``(x1 t - 2)^2 sin(x2 t - x3)``.

    ``x`` is a point of the natural domain [4,10] x [4,20] x [1,7];
    ``grid`` is a TimeGrid or an array of time values.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError(f"forrester simulator takes 3 inputs, got shape {x.shape}")
    t = grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    return (x[0] * t - 2.0) ** 2 * np.sin(x[1] * t - x[2])


def simulator_forrester_unit(x, timepoints, shift: float = 1.0) -> np.ndarray:
    """Unit-cube parameterisation of :func:`simulator_forrester`.

    Inputs in [0,1]^3 are mapped to the natural domain and time is offset by
    ``shift`` (so the default grid on [0,1] becomes t in [1,2]).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError(f"forrester simulator takes 3 inputs, got shape {x.shape}")
    natural = np.array([6.0 * x[0] + 4.0, 16.0 * x[1] + 4.0, 6.0 * x[2] + 1.0])
    return simulator_forrester(natural, np.asarray(timepoints, dtype=float) + shift)
