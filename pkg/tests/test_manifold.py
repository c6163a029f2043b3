import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import bures, gradient_check_instance, simplex_ball_projection

from rwgauss.core import center_and_norm
from rwgauss.discrete_ot import exact_ot_cost
from rwgauss.errors import InputError
from rwgauss.experiments import counterexample_cloud
from rwgauss.manifold import (
    GaussianFactor,
    NearestConfig,
    canonical,
    counterexample_grid_search,
    gaussian_w2_closed_form,
    nearest_gaussian,
    pca_separable_rw2,
    principal_angle,
    project_lambda,
    retract,
    riemannian_step,
    rotation,
    sigma_lambda_theta,
    triple_angle,
)
from rwgauss.onedim import bin_means
from rwgauss.semidual import AscentConfig


@pytest.mark.parametrize("seed", range(6))
def test_gradients_match_finite_differences(seed):
    err_R, err_l = gradient_check_instance(seed)
    assert err_R < 1e-4
    assert err_l < 1e-4


def test_retraction_is_orthogonal_with_positive_diagonal():
    A = np.random.default_rng(0).normal(size=(5, 5))
    Q = retract(A)
    np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-12)
    # Q^T A is upper triangular with a positive diagonal
    T = Q.T @ A
    np.testing.assert_allclose(np.tril(T, -1), 0.0, atol=1e-10)
    assert np.all(np.diag(T) > 0)


def test_retraction_falls_back_to_polar_for_singular_input():
    A = np.diag([1.0, 0.0, 2.0])
    Q = retract(A)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)


def test_riemannian_step_stays_on_group_and_ignores_normal_part():
    rng = np.random.default_rng(1)
    R = retract(rng.normal(size=(4, 4)))
    S = rng.normal(size=(4, 4))
    S = S + S.T
    # R @ symmetric is normal to the tangent space at R
    np.testing.assert_allclose(riemannian_step(R, R @ S, 0.3), R, atol=1e-12)
    R2 = riemannian_step(R, rng.normal(size=(4, 4)), 0.3)
    np.testing.assert_allclose(R2.T @ R2, np.eye(4), atol=1e-12)


@given(arrays(float, st.integers(1, 8), elements=st.floats(-3, 3)))
@settings(max_examples=100, deadline=None)
def test_project_lambda_matches_bisection(v):
    got = project_lambda(v)
    assert got.min() >= 0 and got.sum() <= 1 + 1e-12
    np.testing.assert_allclose(got, simplex_ball_projection(v), atol=1e-9)


def test_bures_closed_form():
    rng = np.random.default_rng(2)
    for d in (1, 2, 5):
        A, B = rng.normal(size=(d, d)), rng.normal(size=(d, d))
        S1, S2 = A @ A.T + 0.1 * np.eye(d), B @ B.T
        assert gaussian_w2_closed_form(S1, S2) == pytest.approx(bures(S1, S2), rel=1e-8)
    # commuting case
    assert gaussian_w2_closed_form(np.diag([4.0, 1.0]), np.diag([1.0, 9.0])) == pytest.approx(np.sqrt(1 + 4))
    with pytest.raises(InputError):
        gaussian_w2_closed_form(np.eye(2), np.eye(3))


def test_factor_roundtrip():
    S = sigma_lambda_theta(0.7, 0.4)
    fac = GaussianFactor.from_sigma(S)
    np.testing.assert_allclose(fac.sigma, S, atol=1e-14)
    np.testing.assert_allclose(fac.lam, [0.7, 0.3])
    np.testing.assert_allclose(fac.root @ fac.root.T, S, atol=1e-14)


def test_two_dimensional_parametrization():
    for lam, th in [(0.9, 0.3), (0.6, 2.9), (0.51, 1.5)]:
        S = sigma_lambda_theta(lam, th)
        assert np.trace(S) == pytest.approx(1.0)
        assert principal_angle(S) == pytest.approx(th % np.pi)
    assert canonical(0.2, 0.1) == pytest.approx((0.8, 0.1 + np.pi / 2))
    np.testing.assert_allclose(sigma_lambda_theta(0.2, 0.1), sigma_lambda_theta(0.8, 0.1 + np.pi / 2), atol=1e-15)
    np.testing.assert_allclose(rotation(np.pi / 2) @ [1.0, 0.0], [0.0, 1.0], atol=1e-15)


def product_cloud_check(k=120, seed=1):
    """Separable estimate and exact OT to a k x k quantile grid for a 6 x 6 product cloud."""
    rng = np.random.default_rng(seed)
    u = np.sort(rng.normal(size=6))
    v = np.sort(rng.gamma(2.0, size=6))
    X = np.array([[a, b] for a in u for b in v])
    cloud = center_and_norm(X).normalized()
    sep = pca_separable_rw2(cloud)
    z = bin_means("gaussian", k)
    sd = np.sqrt(sep.variances)
    # grid in the principal basis, mapped back to data coordinates
    Y = np.array([[sd[0] * a, sd[1] * b] for a in z for b in z]) @ sep.basis.T
    exact, _ = exact_ot_cost(cloud.data, None, Y, None)
    return sep, float(np.sqrt(exact))


def test_separable_estimator_on_product_cloud():
    sep, exact = product_cloud_check()
    assert sep.separable
    # the quantile grid drops the within-bin variance, so it sits slightly closer
    assert 0.0 <= sep.rw2 - exact < 5e-3


def test_separable_flags_dependent_cloud():
    t = np.random.default_rng(3).uniform(0, 2 * np.pi, 400)
    ring = np.column_stack([np.cos(t), np.sin(t)])
    assert not pca_separable_rw2(ring).separable


def test_triple_angle():
    assert triple_angle(1.0, 1.0, 1.0) == pytest.approx(np.pi / 3)
    assert triple_angle(1.0, 0.25, np.sqrt(0.75)) == pytest.approx(np.pi / 3)


def test_config_validation():
    with pytest.raises(InputError):
        NearestConfig(inner=0)
    with pytest.raises(InputError):
        NearestConfig(decay=0.0)


def _small_config(**kw):
    base = {"outer": 60, "warmup_steps": 500, "dual": AscentConfig(steps=30),
                "final": AscentConfig(steps=1500), "patience": 1000}
    base.update(kw)
    return NearestConfig(**base)


def test_nearest_gaussian_beats_moment_match_on_three_points():
    res = nearest_gaussian(counterexample_cloud(), _small_config())
    assert res.theta_star < res.theta_mm
    assert res.p_star < res.p_mm
    S = res.sigma_star
    assert np.trace(S) <= 1.0 + 1e-12
    assert np.all(np.linalg.eigvalsh(S) >= -1e-12)
    assert len(res.trajectory) == 60
    assert {"iteration", "rw2", "objective", "trace"} <= set(res.trajectory[0])


def test_nearest_gaussian_deterministic():
    cfg = _small_config(outer=10, final=AscentConfig(steps=200))
    a = nearest_gaussian(counterexample_cloud(), cfg)
    b = nearest_gaussian(counterexample_cloud(), cfg)
    np.testing.assert_array_equal(a.sigma_star, b.sigma_star)
    assert a.p_star == b.p_star


def test_early_stop_warns():
    cfg = _small_config(outer=100, patience=3, rtol=10.0, final=AscentConfig(steps=100))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        res = nearest_gaussian(counterexample_cloud(), cfg)
    assert res.stopped_early
    assert len(res.trajectory) == 6
    assert any(issubclass(w.category, RuntimeWarning) for w in rec)


def test_grid_search_small():
    res = counterexample_grid_search(counterexample_cloud(), n_lambda=6, n_theta=8, m=200, seeds=(0, 1))
    assert res.landscape.shape == (6, 8)
    assert res.per_seed.shape == (2, 6, 8)
    assert res.lam_star >= 0.5
    assert res.value_star == pytest.approx(res.landscape.min())
    assert 0.0 <= res.theta_star < np.pi
    with pytest.raises(InputError):
        counterexample_grid_search(np.zeros((3, 3)) + np.eye(3), n_lambda=2, n_theta=2, m=10, seeds=(0,))
