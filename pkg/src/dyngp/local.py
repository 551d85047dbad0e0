"""Local SVD-GP emulators for large training sets.

Each prediction input gets its own small svdGP fitted on a neighbourhood of
the training runs.  ``knn`` mode uses the ``nn`` nearest runs; ``greedy``
mode (lasvdGP) seeds with the ``n0`` nearest runs and grows the set one run
at a time, each time adding the candidate that most reduces the summed
coefficient predictive variance at the query.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .kernel import InputScaling, cross_correlation
from .svdgp import (
    DynamicPrediction,
    SvdGPConfig,
    SvdGPModel,
    SvdPriors,
    fit_svdgp,
    predict_svdgp,
)

__all__ = [
    "NeighborhoodConfig",
    "LocalFit",
    "GreedyState",
    "knn_neighborhood",
    "greedy_neighborhood",
    "sum_coefficient_variance",
    "sum_coefficient_variance_refreshed",
    "predict_local",
]


@dataclass(frozen=True)
class NeighborhoodConfig:
    """Neighbourhood sizes for local fits.

    ``candidate_pool`` caps the greedy candidates to that many nearest
    runs; ``refit_every`` refits the local svdGP after that many greedy
    additions (None: only after seeding and at the end).
    """

    nn: int = 20
    n0: int = 10
    candidate_pool: int | None = None
    refit_every: int | None = None

    def __post_init__(self):
        if not 1 <= self.n0 <= self.nn:
            raise ValueError(f"need 1 <= n0 <= nn, got n0={self.n0}, nn={self.nn}")
        if self.candidate_pool is not None and self.candidate_pool < 1:
            raise ValueError("candidate_pool must be positive")
        if self.refit_every is not None and self.refit_every < 1:
            raise ValueError("refit_every must be positive")

    def check(self, n_train: int):
        if self.nn > n_train:
            raise ValueError(f"neighbourhood size nn={self.nn} exceeds the {n_train} training runs")


@dataclass(frozen=True, eq=False)
class LocalFit:
    query: np.ndarray
    neighborhood: tuple[int, ...]
    model: SvdGPModel | None
    prediction: DynamicPrediction | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _scaled_distances(X, x0, scaling: InputScaling | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (X.shape[1],):
        raise ValueError(f"query must have {X.shape[1]} inputs, got shape {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("query inputs must be finite")
    scaling = scaling or InputScaling.fit(X)
    diff = scaling.transform(X) - scaling.transform(x0[None, :])
    return np.sqrt(np.sum(diff ** 2, axis=1))


def knn_neighborhood(X, x0, nn: int, scaling: InputScaling | None = None) -> np.ndarray:
    """Indices of the ``nn`` runs nearest to ``x0``, nearest first.

    Distances are Euclidean on inputs scaled to the unit cube by the
    training min/max; ties go to the lower index.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not 1 <= nn <= X.shape[0]:
        raise ValueError(f"nn must lie in [1, {X.shape[0]}], got {nn}")
    dist = _scaled_distances(X, x0, scaling)
    return np.argsort(dist, kind="stable")[:nn]


class GreedyState:
    """Coefficient-GP quantities for the current neighbourhood at fixed rates and basis.

    Holds ``K_i^{-1}`` explicitly so that candidates can be scored, and
    appended, with rank-one (bordered inverse) updates.
    """

    def __init__(self, model: SvdGPModel, Xs_nb: np.ndarray, xs0: np.ndarray):
        self.model = model
        self.Xs = Xs_nb.copy()
        self.xs0 = xs0
        self.gps = model.coeff_gps
        self.Kinv = [g.corr.inverse() for g in self.gps]
        self.v = [g.v.copy() for g in self.gps]
        self.jitter = [g.corr.jitter for g in self.gps]

    @property
    def n(self) -> int:
        return self.Xs.shape[0]

    def project(self, Ycols: np.ndarray) -> np.ndarray:
        """Coefficients of response columns on the current basis, shape (p, m)."""
        basis = self.model.basis
        return (basis.U.T @ Ycols) / basis.d[:, None]

    def _candidate_terms(self, i, Xs_cand):
        g = self.gps[i]
        params = g.params
        Kinv = self.Kinv[i]
        x0 = self.xs0[None, :]
        k0 = cross_correlation(self.Xs, x0, params)[:, 0]
        kc = cross_correlation(self.Xs, Xs_cand, params)           # (n, m)
        kc0 = cross_correlation(Xs_cand, x0, params)[:, 0]          # (m,)
        g0 = Kinv @ k0
        schur = 1.0 + self.jitter[i] - np.sum(kc * (Kinv @ kc), axis=0)
        explained = k0 @ g0 + (kc0 - kc.T @ g0) ** 2 / schur
        return kc, schur, explained

    def score(self, Xs_cand: np.ndarray) -> np.ndarray:
        """Summed coefficient variance at the query after adding each candidate.

        Only the correlation part is updated; each component keeps the
        variance scale ``(beta_i + psi_i) / (alpha_i + N)`` of the last fit,
        so the score depends on candidate locations, not their responses.
        """
        total = np.zeros(Xs_cand.shape[0])
        for i, g in enumerate(self.gps):
            _, schur, explained = self._candidate_terms(i, Xs_cand)
            scale = (g.beta + g.psi) / (g.alpha + g.v.size)
            total += np.where(schur > 0, scale * (1.0 - explained), np.inf)
        return total

    def score_refreshed_scale(self, Xs_cand: np.ndarray, V_cand: np.ndarray) -> np.ndarray:
        """Like :meth:`score` but also updates ``psi_i`` and ``N`` with each candidate.

        A candidate enters with its response projected on the current basis.
        """
        total = np.zeros(Xs_cand.shape[0])
        for i, g in enumerate(self.gps):
            kc, schur, explained = self._candidate_terms(i, Xs_cand)
            Kinv, v = self.Kinv[i], self.v[i]
            w = Kinv @ v
            psi = v @ w + (V_cand[i] - kc.T @ w) ** 2 / schur
            var = (g.beta + psi) * (1.0 - explained) / (g.alpha + self.n + 1)
            total += np.where(schur > 0, var, np.inf)
        return total

    def add(self, xs_new: np.ndarray, v_new: np.ndarray):
        """Append one run, updating each ``K_i^{-1}`` by the bordered-inverse formula."""
        for i, g in enumerate(self.gps):
            Kinv = self.Kinv[i]
            kc = cross_correlation(self.Xs, xs_new[None, :], g.params)[:, 0]
            u = Kinv @ kc
            s = 1.0 + self.jitter[i] - kc @ u
            n = Kinv.shape[0]
            out = np.empty((n + 1, n + 1))
            out[:n, :n] = Kinv + np.outer(u, u) / s
            out[:n, n] = out[n, :n] = -u / s
            out[n, n] = 1.0 / s
            self.Kinv[i] = out
            self.v[i] = np.append(self.v[i], v_new[i])
        self.Xs = np.vstack([self.Xs, xs_new])


def sum_coefficient_variance(state: GreedyState, Xs_cand: np.ndarray, V_cand: np.ndarray) -> np.ndarray:
    """Default greedy criterion: summed coefficient variance at the query, scales held fixed."""
    return state.score(Xs_cand)


def sum_coefficient_variance_refreshed(state: GreedyState, Xs_cand: np.ndarray,
                                       V_cand: np.ndarray) -> np.ndarray:
    """Alternative criterion that also refreshes each ``psi_i`` with the candidate's response."""
    return state.score_refreshed_scale(Xs_cand, V_cand)


def _fit_on(X, Y, idx, gamma, priors, svd_config) -> SvdGPModel:
    # fit on ascending indices so the model does not depend on selection order
    idx = np.sort(np.asarray(idx))
    return fit_svdgp(X[idx], Y[:, idx], gamma, priors, svd_config)


def greedy_neighborhood(X, Y, x0, config: NeighborhoodConfig, gamma: float = 0.95,
                        priors: SvdPriors | None = None, svd_config: SvdGPConfig | None = None,
                        criterion=sum_coefficient_variance, return_model: bool = False):
    """Greedy neighbourhood of size ``config.nn`` around ``x0``.

    Starts from the ``n0`` nearest runs.  Each step scores every remaining
    candidate by ``criterion`` with the current local basis and rates held
    fixed (a candidate enters with its response projected on the basis) and
    adds the minimizer; ties go to the nearer run, then the lower index.

    Returns the index array in selection order, and the final local model
    when ``return_model`` is set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    config.check(X.shape[0])
    global_scaling = InputScaling.fit(X)
    dist = _scaled_distances(X, x0, global_scaling)
    order = np.argsort(dist, kind="stable")
    chosen = list(order[:config.n0])

    model = _fit_on(X, Y, chosen, gamma, priors, svd_config)
    steps = config.nn - config.n0
    if steps > 0:
        state = None
        since_refit = 0
        for _ in range(steps):
            if state is None:
                sorted_idx = np.sort(chosen)
                scaling = model.input_scaling
                state = GreedyState(model, scaling.transform(X[sorted_idx]), scaling.transform(x0[None, :])[0])
            taken = np.zeros(X.shape[0], dtype=bool)
            taken[chosen] = True
            cand = order[~taken[order]]
            if config.candidate_pool is not None:
                cand = cand[:config.candidate_pool]
            cand = np.sort(cand)
            Xs_cand = state.model.input_scaling.transform(X[cand])
            V_cand = state.project(Y[:, cand])
            scores = criterion(state, Xs_cand, V_cand)
            # lexicographic: score, then distance to the query, then index
            best = np.lexsort((cand, dist[cand], scores))[0]
            j = int(cand[best])
            chosen.append(j)
            since_refit += 1
            if config.refit_every is not None and since_refit >= config.refit_every and len(chosen) < config.nn:
                model = _fit_on(X, Y, chosen, gamma, priors, svd_config)
                state, since_refit = None, 0
            else:
                state.add(Xs_cand[best], V_cand[:, best])
        model = _fit_on(X, Y, chosen, gamma, priors, svd_config)

    idx = np.asarray(chosen, dtype=int)
    return (idx, model) if return_model else idx


def _local_fit(X, Y, x0, config, mode, gamma, priors, svd_config) -> LocalFit:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    nb: tuple[int, ...] = ()
    try:
        if mode == "knn":
            idx = knn_neighborhood(X, x0, config.nn)
            nb = tuple(int(i) for i in idx)
            model = _fit_on(X, Y, idx, gamma, priors, svd_config)
        else:
            idx, model = greedy_neighborhood(X, Y, x0, config, gamma, priors, svd_config, return_model=True)
            nb = tuple(int(i) for i in idx)
        return LocalFit(x0, nb, model, predict_svdgp(model, x0))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        return LocalFit(x0, nb, None, None, error=f"{type(exc).__name__}: {exc}")


def predict_local(X, Y, queries, config: NeighborhoodConfig, mode: str = "greedy", gamma: float = 0.95,
                  priors: SvdPriors | None = None, svd_config: SvdGPConfig | None = None,
                  threads: int = 1) -> list[LocalFit]:
    """One independent local svdGP per query row; output order matches input order.

    ``mode`` is ``"knn"`` or ``"greedy"``.  Failures are reported in the
    corresponding :class:`LocalFit` rather than raised.
    """
    if mode not in ("knn", "greedy"):
        raise ValueError(f"mode must be 'knn' or 'greedy', got {mode!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != X.shape[0]:
        raise ValueError(f"responses must be L x N with N = {X.shape[0]}, got shape {Y.shape}")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != X.shape[1]:
        raise ValueError(f"queries have {queries.shape[1]} inputs, design has {X.shape[1]}")
    if not np.all(np.isfinite(queries)):
        raise ValueError("queries must be finite")
    config.check(X.shape[0])
    # worker threads are used here, so each local fit runs its components serially
    if svd_config is not None and threads > 1 and svd_config.threads != 1:
        svd_config = replace(svd_config, threads=1)

    def work(x0):
        return _local_fit(X, Y, x0, config, mode, gamma, priors, svd_config)

    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, queries))
    return [work(x0) for x0 in queries]
