import numpy as np
import pytest

from rwgauss.experiments import (
    counterexample_cloud,
    counterexample_experiment,
    gmm1d_experiment,
    gmm_grid_experiment,
    grid_means,
    mm_angle,
    mm_eigenstructure,
    sample_gmm1d,
    trial_rng,
)
from rwgauss.manifold import NearestConfig
from rwgauss.semidual import AscentConfig


def test_trial_rng_is_keyed_by_cell():
    a = trial_rng(0, 1, 2).random(3)
    np.testing.assert_array_equal(a, trial_rng(0, 1, 2).random(3))
    assert not np.array_equal(a, trial_rng(0, 2, 1).random(3))
    assert not np.array_equal(a, trial_rng(1, 1, 2).random(3))


def test_sample_gmm1d_components():
    x = sample_gmm1d(np.random.default_rng(0), 3.0, 20000)
    assert abs(x.mean()) < 0.1
    assert x.var() == pytest.approx(1 + 9, rel=0.05)


def test_gmm1d_small_run_structure():
    rep = gmm1d_experiment(m_values=(1, 2), N_values=(4, 16), reps=3, limit_N=128, overlay_N=8)
    assert len(rep.cells) == 4 and len(rep.trials) == 12
    assert {c["reps"] for c in rep.cells} == {3}
    assert set(rep.summary["flags"]) >= {"theta_nonincreasing_m1", "p_increasing_in_m",
                                         "p_var_exceeds_theta_var_N16"}
    assert [lim["N"] for lim in rep.summary["limits"]] == [128, 128]
    ov = rep.series["overlay"]
    assert ov["x"].shape == ov["nearest_m2"].shape
    # the nearest Gaussian never has larger scale than the moment match
    assert ov["sigma_nearest_m1"] <= ov["sigma_moment_m1"]


def test_gmm1d_independent_of_worker_count():
    a = gmm1d_experiment(N_values=(4, 16), reps=4, limit_N=0, overlay_N=0, workers=1)
    b = gmm1d_experiment(N_values=(4, 16), reps=4, limit_N=0, overlay_N=0, workers=2)
    assert a.as_dict() == b.as_dict()


def test_gmm1d_expected_trends_hold_with_many_replicates():
    rep = gmm1d_experiment(reps=2000, limit_N=0, overlay_N=0)
    assert rep.summary["all_flags"], rep.summary["flags"]


@pytest.mark.xfail(reason="10 replicates cannot resolve the N=256 -> 1024 decrease for m=3 at seed 0",
                   strict=False)
def test_gmm1d_default_flags():
    assert gmm1d_experiment().summary["all_flags"]


def test_gmm1d_default_shape_claims_that_are_robust():
    flags = gmm1d_experiment().summary["flags"]
    assert flags["theta_increasing_in_m"] and flags["p_increasing_in_m"]
    assert flags["p_var_exceeds_theta_var_N16"]


def test_grid_means_are_centered_lattice():
    g = grid_means(2, 3, 4.0)
    assert g.shape == (6, 2)
    np.testing.assert_allclose(g.mean(axis=0), 0.0)
    assert sorted(set(g[:, 0])) == [-4.0, 0.0, 4.0]


def test_mm_angle_small_for_gaussian_cloud():
    X = np.random.default_rng(0).normal(size=(1500, 2)) @ np.diag([2.0, 0.5])
    theta, dist, norm = mm_angle(X, 1500, seed=1)
    assert theta < 0.15
    assert dist < norm


@pytest.mark.slow
def test_grid_angle_increases_with_components_at_moderate_spacing():
    rep = gmm_grid_experiment(spacing=2.5, n=1500, m=1500, reps=2)
    th = dict(zip(rep.summary["components"], rep.summary["theta_by_components"]))
    assert th[1] < 0.12
    assert th[1] < th[4] < th[9]
    assert rep.summary["theta_increasing_on_square_grids"]


def test_grid_experiment_small():
    rep = gmm_grid_experiment(r_values=(1, 2), c_values=(1,), n=300, m=300)
    assert rep.summary["components"] == [1, 2]
    assert rep.series["samples"]["2x1"].shape == (300, 2)
    assert rep.as_dict() == gmm_grid_experiment(r_values=(1, 2), c_values=(1,), n=300, m=300).as_dict()


def test_counterexample_eigenstructure_exact():
    w, theta, cov = mm_eigenstructure(counterexample_cloud())
    np.testing.assert_allclose(w, [0.7778, 0.2222], atol=1e-3)
    assert theta / np.pi == pytest.approx(0.8340, abs=1e-3)
    assert np.trace(cov) == pytest.approx(1.0)


def test_counterexample_small_run():
    near = NearestConfig(outer=5, warmup_steps=100, dual=AscentConfig(steps=10), final=AscentConfig(steps=100))
    rep = counterexample_experiment(n_lambda=4, n_theta=6, m=100, seeds=(0, 1), nearest=near)
    s = rep.summary
    assert rep.series["landscape"].shape == (4, 6)
    assert len(s["w2sq_mm_per_seed"]) == 2
    assert s["gap"] == pytest.approx(s["w2sq_mm"] - s["w2sq_star"])
    assert s["nearest"]["iterations"] == 5
    assert 0.0 <= s["axis_agreement_over_pi"] <= 0.5
