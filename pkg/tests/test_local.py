import numpy as np
import pytest

import dyngp.local as local
from dyngp.design import latin_hypercube, random_lhs, simulator_forrester_unit
from dyngp.kernel import SingularCorrelationError
from dyngp.local import (
    GreedyState,
    NeighborhoodConfig,
    greedy_neighborhood,
    knn_neighborhood,
    predict_local,
    sum_coefficient_variance_refreshed,
)
from dyngp.optimize import OptimConfig
from dyngp.svdgp import SvdGPConfig, fit_svdgp

import oracles

TP = np.linspace(0.0, 1.0, 60)


def _data(N, seed, tp=TP):
    X = latin_hypercube(N, 3, seed=seed)
    return X, np.column_stack([simulator_forrester_unit(x, tp) for x in X])


def test_knn_example():
    X = np.array([[0.0], [0.3], [0.6], [1.0]])
    np.testing.assert_array_equal(knn_neighborhood(X, [0.5], 2), [2, 1])


def test_knn_ties_go_to_lower_index():
    X = np.array([[1.0], [0.0], [0.5], [0.0], [1.0]])
    np.testing.assert_array_equal(knn_neighborhood(X, [0.5], 5), [2, 0, 1, 3, 4])


def test_knn_validation():
    X = np.random.default_rng(0).random((5, 2))
    with pytest.raises(ValueError):
        knn_neighborhood(X, [0.5, 0.5], 6)
    with pytest.raises(ValueError):
        knn_neighborhood(X, [0.5], 2)


def test_config_validation():
    with pytest.raises(ValueError):
        NeighborhoodConfig(nn=5, n0=6)
    with pytest.raises(ValueError):
        NeighborhoodConfig(nn=5, n0=0)
    with pytest.raises(ValueError, match="exceeds"):
        NeighborhoodConfig(nn=50, n0=10).check(20)


def test_greedy_structure():
    X, Y = _data(40, 1)
    x0 = np.array([0.4, 0.5, 0.6])
    cfg = NeighborhoodConfig(nn=15, n0=8)
    idx = greedy_neighborhood(X, Y, x0, cfg)
    assert len(idx) == 15 and len(set(idx.tolist())) == 15
    np.testing.assert_array_equal(np.sort(idx[:8]), np.sort(knn_neighborhood(X, x0, 8)))


def _seed_model(X, Y, seed_idx, svd_config):
    idx = np.sort(seed_idx)
    return fit_svdgp(X[idx], Y[:, idx], config=svd_config), idx


@pytest.mark.parametrize("seed", range(4))
def test_greedy_steps_match_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((8, 2))
    Y = np.column_stack([simulator_forrester_unit(np.append(x, 0.5), TP[:30]) for x in X])
    x0 = rng.random(2)
    cfg = NeighborhoodConfig(nn=5, n0=3)
    svd_config = SvdGPConfig(n_components=1)
    chosen = greedy_neighborhood(X, Y, x0, cfg, svd_config=svd_config)
    model, nb = _seed_model(X, Y, chosen[:3], svd_config)
    g = model.coeff_gps[0]
    scale = (g.beta + g.psi) / (g.alpha + g.v.size)
    sc = model.input_scaling
    nb = list(nb)
    for j in chosen[3:]:
        cand = [c for c in range(8) if c not in nb]
        scores = oracles.greedy_step_scores(sc.transform(X[nb]), sc.transform(X[cand]), sc.transform(x0[None])[0],
                                            [g.theta], [g.corr.jitter], [scale])
        assert scores[cand.index(j)] <= scores.min() + 1e-9 * abs(scores.min())
        nb.append(int(j))


def test_scores_and_rank_one_update_match_dense():
    X, Y = _data(25, 3)
    x0 = np.array([0.2, 0.7, 0.4])
    idx = np.sort(knn_neighborhood(X, x0, 10))
    model = fit_svdgp(X[idx], Y[:, idx])
    sc = model.input_scaling
    state = GreedyState(model, sc.transform(X[idx]), sc.transform(x0[None])[0])
    rest = np.setdiff1d(np.arange(25), idx)
    Xs_c = sc.transform(X[rest])
    scales = [(g.beta + g.psi) / (g.alpha + g.v.size) for g in model.coeff_gps]
    thetas = [g.theta for g in model.coeff_gps]
    jitters = [g.corr.jitter for g in model.coeff_gps]
    ref = oracles.greedy_step_scores(sc.transform(X[idx]), Xs_c, state.xs0, thetas, jitters, scales)
    np.testing.assert_allclose(state.score(Xs_c), ref, rtol=1e-7)

    state.add(Xs_c[0], state.project(Y[:, rest[:1]])[:, 0])
    pts = np.vstack([sc.transform(X[idx]), Xs_c[0]])
    for Kinv, th, jit in zip(state.Kinv, thetas, jitters):
        K = oracles.corr_matrix(pts, pts, th, 2.0) + jit * np.eye(len(pts))
        np.testing.assert_allclose(Kinv @ K, np.eye(len(pts)), atol=1e-6)


def test_projection_recovers_training_coefficients():
    X, Y = _data(12, 4)
    model = fit_svdgp(X, Y, gamma=1.0)
    state = GreedyState(model, model.input_scaling.transform(X), np.zeros(3))
    np.testing.assert_allclose(state.project(Y), model.basis.V, atol=1e-10)


def test_full_neighbourhood_matches_global_fit():
    X, Y = _data(15, 5)
    x0 = np.array([0.5, 0.5, 0.5])
    full = fit_svdgp(X, Y).predict(x0[None])
    for mode in ("greedy", "knn"):
        fit = predict_local(X, Y, x0[None], NeighborhoodConfig(nn=15, n0=5), mode)[0]
        assert fit.ok
        np.testing.assert_allclose(fit.prediction.mean, full.mean[0], atol=1e-8)
        np.testing.assert_allclose(fit.prediction.pointwise_variance, full.pointwise_variance[0], atol=1e-8)


def test_order_and_threads():
    X, Y = _data(60, 6)
    Q = random_lhs(5, 3, seed=7)
    cfg = NeighborhoodConfig(nn=14, n0=8)
    one = predict_local(X, Y, Q, cfg, "greedy", threads=1)
    many = predict_local(X, Y, Q, cfg, "greedy", threads=3)
    rev = predict_local(X, Y, Q[::-1], cfg, "greedy", threads=3)
    for a, b, c in zip(one, many, rev[::-1]):
        np.testing.assert_array_equal(a.query, b.query)
        assert a.neighborhood == b.neighborhood == c.neighborhood
        np.testing.assert_array_equal(a.prediction.mean, b.prediction.mean)
        np.testing.assert_array_equal(a.prediction.mean, c.prediction.mean)


def test_refit_and_candidate_pool_options():
    X, Y = _data(40, 8)
    x0 = np.array([0.3, 0.3, 0.3])
    a = greedy_neighborhood(X, Y, x0, NeighborhoodConfig(nn=14, n0=8, refit_every=2))
    b = greedy_neighborhood(X, Y, x0, NeighborhoodConfig(nn=14, n0=8, candidate_pool=12))
    assert len(set(a.tolist())) == 14
    # the pool slides outward as runs are taken, so at most nn + pool nearest are reachable
    allowed = set(knn_neighborhood(X, x0, 14 + 12).tolist())
    assert set(b.tolist()) <= allowed
    c = greedy_neighborhood(X, Y, x0, NeighborhoodConfig(nn=14, n0=8), criterion=sum_coefficient_variance_refreshed)
    assert len(set(c.tolist())) == 14


def test_greedy_beats_knn_on_average():
    X, Y = _data(150, 9)
    Q = random_lhs(12, 3, seed=10)
    truth = np.column_stack([simulator_forrester_unit(x, TP) for x in Q]).T
    cfg = NeighborhoodConfig(nn=20, n0=12)
    svd = SvdGPConfig(optim=OptimConfig(nstarts=3))
    err = {}
    for mode in ("greedy", "knn"):
        fits = predict_local(X, Y, Q, cfg, mode, svd_config=svd)
        mean = np.array([f.prediction.mean for f in fits])
        err[mode] = np.mean(np.sqrt(np.mean((mean - truth) ** 2, axis=1)) / np.ptp(truth, axis=1))
    assert err["greedy"] <= err["knn"]


def test_failures_are_reported_per_query(monkeypatch):
    X, Y = _data(20, 11)
    Q = np.array([[0.5, 0.5, 0.5], [0.9, 0.9, 0.9]])
    real = local.fit_svdgp
    bad = X[knn_neighborhood(X, Q[1], 1)[0]]
    assert not np.any(np.all(X[knn_neighborhood(X, Q[0], 3)] == bad, axis=1))

    def flaky(Xn, Yn, *args, **kwargs):
        if np.any(np.all(Xn == bad, axis=1)):
            raise SingularCorrelationError("forced failure")
        return real(Xn, Yn, *args, **kwargs)

    monkeypatch.setattr(local, "fit_svdgp", flaky)
    fits = predict_local(X, Y, Q, NeighborhoodConfig(nn=3, n0=2), "knn")
    assert [f.ok for f in fits] == [True, False]
    assert "forced failure" in fits[1].error
    assert len(fits[1].neighborhood) == 3
    assert fits[1].prediction is None


def test_predict_local_validation():
    X, Y = _data(10, 12)
    cfg = NeighborhoodConfig(nn=5, n0=3)
    with pytest.raises(ValueError, match="mode"):
        predict_local(X, Y, X[:1], cfg, "bogus")
    with pytest.raises(ValueError, match="finite"):
        predict_local(X, Y, [[np.nan, 0.0, 0.0]], cfg)
    with pytest.raises(ValueError, match="inputs"):
        predict_local(X, Y, [[0.0, 0.0]], cfg)
    with pytest.raises(ValueError, match="exceeds"):
        predict_local(X, Y, X[:1], NeighborhoodConfig(nn=11, n0=3))
