import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyngp.design import latin_hypercube, simulator_example1
from dyngp.gp import (
    DegenerateResponseWarning,
    GPConfig,
    _profile_terms,
    fit_scalar_gp,
    predict_scalar,
    profile_loglik,
)
from dyngp.kernel import InputScaling, JitterPolicy, distance_powers, gap_rate_cap
from dyngp.optimize import OptimConfig

from oracles import scalar_gp_condition

EXACT = JitterPolicy(start=0.0)


def _fixed(theta, power=2.0):
    return GPConfig(power=power, theta=np.atleast_1d(theta), jitter=EXACT)


def test_frozen_oracle_instance():
    X = np.array([[0.0], [0.25], [0.6], [1.0]])
    y = np.array([1.0, -0.5, 0.3, 2.0])
    model = fit_scalar_gp(X, y, _fixed(3.0))
    assert model.corr.jitter == 0.0
    assert model.mu_hat == pytest.approx(1.478041412779274, abs=1e-12)
    assert model.sigma2_hat == pytest.approx(2.8765994232579715, abs=1e-12)
    pred = model.predict([[0.4], [0.8]])
    np.testing.assert_allclose(pred.mean, [-0.5729072124538739, 1.4198910116783796], atol=1e-12)
    np.testing.assert_allclose(pred.variance_conditional, [0.006899372922696906, 0.026273754466154875], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(1, 2), st.integers(0, 2**32 - 1), st.sampled_from([1.95, 2.0]))
def test_matches_mvn_conditioning(n, q, seed, power):
    rng = np.random.default_rng(seed)
    X = rng.random((n, q)) * 3.0 - 1.0
    y = rng.normal(size=n)
    theta = rng.uniform(0.2, 3.0, size=q)
    x0 = rng.random(q) * 3.0 - 1.0
    model = fit_scalar_gp(X, y, _fixed(theta, power))
    if model.corr.jitter > 0:  # near-duplicate rows; the oracle is exact only without jitter
        return
    mean, var, mu, sigma2 = scalar_gp_condition(X, y, x0, theta, power)
    pred = predict_scalar(model, x0)
    assert pred.mean == pytest.approx(mean, abs=1e-8)
    assert pred.variance_conditional == pytest.approx(var, abs=1e-8)
    assert model.mu_hat == pytest.approx(mu, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 10), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_mle_variance_dominates(n, q, seed):
    rng = np.random.default_rng(seed)
    X = latin_hypercube(n, q, seed=rng)
    y = np.sin(3 * X).sum(axis=1) + 0.1 * rng.normal(size=n)
    model = fit_scalar_gp(X, y, GPConfig(optim=OptimConfig(nstarts=2, seed=seed % 1000)))
    pred = model.predict(rng.random((50, q)))
    assert np.all(pred.variance_mle >= pred.variance_conditional)
    assert np.all(pred.variance_conditional >= 0)


def test_interpolates_training_points():
    x = latin_hypercube(7, 1, seed=4)
    y = simulator_example1(x[:, 0])
    model = fit_scalar_gp(x, y)
    pred = model.predict(x)
    np.testing.assert_allclose(pred.mean, y, atol=1e-6)
    assert np.all(pred.variance_conditional < 1e-6 * model.sigma2_hat)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_translation_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    X = rng.random((6, 2))
    y = rng.normal(size=6)
    x0 = rng.random((4, 2))
    a = fit_scalar_gp(X, y, _fixed([2.0, 0.7])).predict(x0)
    b = fit_scalar_gp(X, y + shift, _fixed([2.0, 0.7])).predict(x0)
    np.testing.assert_allclose(b.mean, a.mean + shift, atol=1e-9 * max(1.0, abs(shift)))
    np.testing.assert_allclose(b.variance_conditional, a.variance_conditional, rtol=1e-9, atol=1e-12)


def test_translation_invariance_with_fitting():
    X = latin_hypercube(10, 2, seed=2)
    y = np.cos(4 * X[:, 0]) + X[:, 1] ** 2
    a = fit_scalar_gp(X, y)
    b = fit_scalar_gp(X, y + 50.0)
    np.testing.assert_allclose(b.params.theta, a.params.theta, rtol=1e-6)
    assert b.mu_hat == pytest.approx(a.mu_hat + 50.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_fit_is_local_optimum(seed):
    rng = np.random.default_rng(seed)
    X = latin_hypercube(12, 2, seed=rng)
    y = np.sin(5 * X[:, 0]) * X[:, 1] + X[:, 0]
    config = GPConfig()
    model = fit_scalar_gp(X, y, config)
    lo, hi = config.optim.bounds
    cap = np.log(gap_rate_cap(InputScaling.fit(X).transform(X), config.power, config.max_gap_correlation))
    upper = np.minimum(hi, cap)
    z = np.log(model.params.theta)
    best = model.loglik
    for k in range(2):
        for step in (-0.1, 0.1):
            zz = z.copy()
            zz[k] = np.clip(zz[k] + step, lo, upper[k])
            assert profile_loglik(X, y, np.exp(zz), config.power) <= best + 1e-7


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    X = rng.random((8, 3))
    y = rng.normal(size=8)
    D = distance_powers(X, X, np.full(3, 1.95))
    z = np.log([0.5, 3.0, 12.0])
    _, grad, *_ = _profile_terms(z, D, y - y.mean(), None, JitterPolicy(), True)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        up = _profile_terms(z + e, D, y - y.mean(), None, JitterPolicy(), False)[0]
        dn = _profile_terms(z - e, D, y - y.mean(), None, JitterPolicy(), False)[0]
        assert grad[k] == pytest.approx((up - dn) / (2 * h), rel=1e-5, abs=1e-7)


def test_loglik_reported_matches_profile():
    X = latin_hypercube(9, 2, seed=5)
    y = X[:, 0] - 2 * X[:, 1] ** 2
    model = fit_scalar_gp(X, y)
    assert profile_loglik(X, y, model.params.theta) == pytest.approx(model.loglik, abs=1e-9)


def test_seeded_fit_is_deterministic():
    X = latin_hypercube(10, 2, seed=1)
    y = np.sin(6 * X[:, 0]) + X[:, 1]
    a = fit_scalar_gp(X, y, GPConfig(optim=OptimConfig(seed=3)))
    b = fit_scalar_gp(X, y, GPConfig(optim=OptimConfig(seed=3)))
    np.testing.assert_array_equal(a.params.theta, b.params.theta)


def test_constant_responses_warn():
    X = latin_hypercube(5, 2, seed=0)
    with pytest.warns(DegenerateResponseWarning):
        model = fit_scalar_gp(X, np.full(5, 3.5))
    pred = model.predict(np.random.default_rng(0).random((3, 2)))
    np.testing.assert_array_equal(pred.mean, 3.5)
    np.testing.assert_array_equal(pred.variance_mle, 0.0)


@pytest.mark.parametrize("X, y, match", [
    (np.array([[0.1], [0.1], [0.5]]), np.array([1.0, 2.0, 3.0]), "duplicated"),
    (np.array([[0.1]]), np.array([1.0]), "at least 2"),
    (np.array([[0.1], [0.5]]), np.array([1.0, 2.0, 3.0]), "responses"),
    (np.array([[0.1], [np.nan]]), np.array([1.0, 2.0]), "non-finite"),
    (np.array([[0.1], [0.4]]), np.array([1.0, np.inf]), "finite"),
])
def test_input_validation(X, y, match):
    with pytest.raises(ValueError, match=match):
        fit_scalar_gp(X, y)


def test_query_validation():
    model = fit_scalar_gp(np.array([[0.0], [0.5], [1.0]]), np.array([0.0, 1.0, 0.0]), _fixed(2.0))
    with pytest.raises(ValueError):
        predict_scalar(model, [0.1, 0.2])
    with pytest.raises(ValueError):
        model.predict([[np.nan]])


def test_single_point_matches_batch():
    X = latin_hypercube(8, 2, seed=9)
    y = X.sum(axis=1) ** 2
    model = fit_scalar_gp(X, y)
    Q = np.random.default_rng(1).random((5, 2))
    batch = model.predict(Q)
    for j, x in enumerate(Q):
        one = predict_scalar(model, x)
        assert one.mean == pytest.approx(batch.mean[j], abs=1e-14)
        assert one.variance_mle == pytest.approx(batch.variance_mle[j], abs=1e-14)


def test_no_runtime_warnings_on_flat_likelihood():
    x = latin_hypercube(7, 1, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit_scalar_gp(x, simulator_example1(x[:, 0]))
