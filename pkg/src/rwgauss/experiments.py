"""Scripted numerical studies: 1-D mixtures, 2-D grid mixtures, 3-point example.

Every trial draws from ``numpy.random.default_rng(SeedSequence([seed, *cell]))``
so any number in a report can be regenerated from its ``(seed, cell)`` pair,
independently of execution order or worker count.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import SideTriple, angle_from_sides, center_and_norm, moment_matching
from .discrete_ot import mc_gaussian_rw2
from .manifold import (
    NearestConfig,
    counterexample_grid_search,
    nearest_gaussian,
    principal_angle,
)
from .onedim import gaussian_projection

log = logging.getLogger(__name__)

COUNTEREXAMPLE_POINTS = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])


def trial_rng(seed, *cell):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, cell)]))


def _map(fn, jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


@dataclass
class ExperimentReport:
    """Configuration echo, per-cell statistics, raw trials and derived checks."""

    name: str
    config: dict
    cells: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "name": self.name,
            "config": self.config,
            "summary": self.summary,
            "cells": self.cells,
            "trials": self.trials,
            "files": self.files,
        }


def _stats(values):
    v = np.asarray(values, dtype=float)
    var = float(v.var(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), var


def _nonincreasing(seq):
    return bool(np.all(np.diff(seq) <= 0))


def _increasing(seq):
    return bool(np.all(np.diff(seq) > 0))


# ---------------------------------------------------------------------------
# 1-D two-component mixtures


def sample_gmm1d(rng, m, n):
    """``n`` draws from ``0.5 N(-m, 1) + 0.5 N(m, 1)``."""
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return signs * m + rng.standard_normal(n)


def _gmm1d_trial(seed, mi, ni, rep, m, n):
    x = sample_gmm1d(trial_rng(seed, mi, ni, rep), m, n)
    rep_ = gaussian_projection(x)
    return {"m": m, "N": n, "rep": rep, "seed": seed, "cell": [mi, ni, rep],
            "theta": rep_.theta, "p": rep_.p, "l": rep_.l, "sigma_mu": rep_.sigma_mu}


def gmm1d_experiment(m_values=(1, 2, 3), N_values=(4, 16, 64, 256, 1024), reps=10, seed=0,
                     limit_N=2**14, overlay_N=64, workers=1):
    """Angle and projection distance of 1-D mixture samples versus sample size.

    Returns the per-trial values, per-(m, N) means and unbiased variances, the
    trend flags, large-``N`` reference values and density-overlay data for the
    nearest and the moment-matched Gaussian at ``N = overlay_N``.
    """
    t0 = time.perf_counter()
    m_values = [float(m) for m in m_values]
    N_values = [int(n) for n in N_values]
    jobs = [(seed, mi, ni, r, m, n) for mi, m in enumerate(m_values)
            for ni, n in enumerate(N_values) for r in range(reps)]
    trials = _map(_gmm1d_trial, jobs, workers)
    cells = []
    for mi, m in enumerate(m_values):
        for ni, n in enumerate(N_values):
            rows = [t for t in trials if t["cell"][0] == mi and t["cell"][1] == ni]
            th_mean, th_var = _stats([t["theta"] for t in rows])
            p_mean, p_var = _stats([t["p"] for t in rows])
            cells.append({"m": m, "N": n, "theta_mean": th_mean, "theta_var": th_var,
                          "p_mean": p_mean, "p_var": p_var, "reps": len(rows)})

    def cell(m, n):
        return next(c for c in cells if c["m"] == m and c["N"] == n)

    flags = {}
    for m in m_values:
        flags[f"theta_nonincreasing_m{m:g}"] = _nonincreasing([cell(m, n)["theta_mean"] for n in N_values])
        flags[f"p_nonincreasing_m{m:g}"] = _nonincreasing([cell(m, n)["p_mean"] for n in N_values])
    n_big = max(N_values)
    flags["theta_increasing_in_m"] = _increasing([cell(m, n_big)["theta_mean"] for m in m_values])
    flags["p_increasing_in_m"] = _increasing([cell(m, n_big)["p_mean"] for m in m_values])
    if 16 in N_values:
        flags["p_var_exceeds_theta_var_N16"] = all(cell(m, 16)["p_var"] > cell(m, 16)["theta_var"]
                                                   for m in m_values)

    limits = []
    if limit_N:
        for mi, m in enumerate(m_values):
            t = _gmm1d_trial(seed, mi, len(N_values), 0, m, int(limit_N))
            limits.append({"m": m, "N": int(limit_N), "theta": t["theta"], "p": t["p"]})

    overlay = {}
    if overlay_N:
        grid = np.linspace(-8.0, 8.0, 401)
        overlay["x"] = grid
        for mi, m in enumerate(m_values):
            x = sample_gmm1d(trial_rng(seed, mi, len(N_values) + 1, 0), m, int(overlay_N))
            rep_ = gaussian_projection(x)
            mu = float(x.mean())
            overlay[f"nearest_m{m:g}"] = _normal_pdf(grid, mu, rep_.l)
            overlay[f"moment_m{m:g}"] = _normal_pdf(grid, mu, rep_.sigma_mu)
            overlay[f"sigma_nearest_m{m:g}"] = rep_.l
            overlay[f"sigma_moment_m{m:g}"] = rep_.sigma_mu

    report = ExperimentReport(
        name="gmm1d",
        config={"m_values": m_values, "N_values": N_values, "reps": reps, "seed": seed,
                "limit_N": limit_N, "overlay_N": overlay_N},
        cells=cells, trials=trials,
        summary={"flags": flags, "all_flags": all(flags.values()), "limits": limits},
        series={"overlay": overlay},
    )
    report.timings["total_s"] = time.perf_counter() - t0
    return report


def _normal_pdf(x, mu, sigma):
    if sigma <= 0:
        return np.zeros_like(x)
    z = (x - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))


# ---------------------------------------------------------------------------
# 2-D mixtures on a grid of centres


def grid_means(r, c, spacing):
    """``r * c`` centres on a centred rectangular lattice."""
    rows = (np.arange(r) - (r - 1) / 2.0) * spacing
    cols = (np.arange(c) - (c - 1) / 2.0) * spacing
    return np.array([[x, y] for y in rows for x in cols])


def sample_grid_gmm(rng, r, c, spacing, n):
    means = grid_means(r, c, spacing)
    return means[rng.integers(0, len(means), n)] + rng.standard_normal((n, 2))


def mm_angle(X, m, seed):
    """Angle between a cloud and the ray of its moment-matched Gaussian.

    RW2 to ``N(0, Sigma_mu)`` comes from exact OT against ``m`` draws; both
    sides of the triple have length ``||mu||``.
    """
    cloud = center_and_norm(X)
    _, cov = moment_matching(cloud)
    dist = mc_gaussian_rw2(cloud.data, cov, m=m, seed=seed)
    theta = angle_from_sides(SideTriple(cloud.rw2_norm, cloud.rw2_norm, dist), tol=None)
    return theta, dist, cloud.rw2_norm


def _grid_trial(seed, ri, ci, rep, r, c, spacing, n, m):
    rng = trial_rng(seed, ri, ci, rep)
    X = sample_grid_gmm(rng, r, c, spacing, n)
    theta, dist, norm = mm_angle(X, m, int(rng.integers(0, 2**31 - 1)))
    return {"r": r, "c": c, "rep": rep, "seed": seed, "cell": [ri, ci, rep],
            "theta": theta, "rw2": dist, "norm": norm}


def gmm_grid_experiment(r_values=(1, 2, 3), c_values=(1, 2, 3), spacing=4.0, n=2000, m=2000,
                        reps=1, seed=0, workers=1, keep_samples=True):
    """Angle to the moment-matched Gaussian for 2-D mixtures with ``r x c`` centres."""
    t0 = time.perf_counter()
    r_values = [int(v) for v in r_values]
    c_values = [int(v) for v in c_values]
    jobs = [(seed, ri, ci, k, r, c, float(spacing), int(n), int(m))
            for ri, r in enumerate(r_values) for ci, c in enumerate(c_values) for k in range(reps)]
    trials = _map(_grid_trial, jobs, workers)
    cells, samples = [], {}
    for ri, r in enumerate(r_values):
        for ci, c in enumerate(c_values):
            rows = [t for t in trials if t["cell"][:2] == [ri, ci]]
            th_mean, th_var = _stats([t["theta"] for t in rows])
            cells.append({"r": r, "c": c, "components": r * c, "theta_mean": th_mean,
                          "theta_var": th_var, "reps": len(rows)})
            if keep_samples:
                samples[f"{r}x{c}"] = sample_grid_gmm(trial_rng(seed, ri, ci, 0), r, c, spacing, n)
    by_k = {}
    for cl in cells:
        by_k.setdefault(cl["components"], []).append(cl["theta_mean"])
    ks = sorted(by_k)
    trend = [float(np.mean(by_k[k])) for k in ks]
    # square grids 1x1, 2x2, ... isolate the effect of adding components per axis
    diagonal = [cl["theta_mean"] for cl in cells if cl["r"] == cl["c"]]
    report = ExperimentReport(
        name="gmm-grid",
        config={"r_values": r_values, "c_values": c_values, "spacing": float(spacing), "n": n,
                "m": m, "reps": reps, "seed": seed},
        cells=cells, trials=trials,
        summary={"components": ks, "theta_by_components": trend,
                 "theta_increasing_in_components": _increasing(trend),
                 "theta_square_grids": diagonal,
                 "theta_increasing_on_square_grids": _increasing(diagonal)},
        series={"samples": samples},
    )
    report.timings["total_s"] = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# three-point counterexample


def counterexample_cloud(points=COUNTEREXAMPLE_POINTS):
    """Centred, unit-RW2-norm version of the raw points."""
    return center_and_norm(points).normalized()


def mm_eigenstructure(cloud):
    """Exact eigenvalues and leading-axis angle of the moment-matched covariance."""
    _, cov = moment_matching(cloud)
    w = np.linalg.eigvalsh(cov)[::-1]
    return w, principal_angle(cov), cov


def counterexample_experiment(n_lambda=50, n_theta=50, m=2000, seeds=(0, 1, 2, 3, 4),
                              nearest=None, run_nearest=True, points=COUNTEREXAMPLE_POINTS):
    """Grid search and alternating optimizer on the normalized 3-point cloud."""
    t0 = time.perf_counter()
    cloud = counterexample_cloud(points)
    w_mm, theta_mm, cov = mm_eigenstructure(cloud)
    grid = counterexample_grid_search(cloud, n_lambda, n_theta, m, tuple(seeds))
    t_grid = time.perf_counter() - t0
    summary = {
        "sigma_mm": cov,
        "spec_mm": w_mm,
        "theta_mm": theta_mm,
        "theta_mm_over_pi": theta_mm / np.pi,
        "w2sq_mm": grid.value_mm,
        "w2sq_mm_per_seed": grid.value_mm_per_seed,
        "w2sq_star": grid.value_star,
        "gap": grid.value_mm - grid.value_star,
        "gap_per_seed": grid.value_mm_per_seed - grid.per_seed.reshape(len(seeds), -1).min(axis=1),
        "lambda_star": grid.lam_star,
        "theta_star": grid.theta_star,
        "theta_star_over_pi": grid.theta_star / np.pi,
        "lambda_refined": grid.lam_refined,
        "theta_refined_over_pi": grid.theta_refined / np.pi,
        "spec_star": [grid.lam_star, 1.0 - grid.lam_star],
        "eigenvalue_gap": abs(grid.lam_star - w_mm[0]),
        "axis_gap_over_pi": _axis_gap(grid.theta_star, theta_mm) / np.pi,
    }
    timings = {"grid_s": t_grid}
    if run_nearest:
        t1 = time.perf_counter()
        res = nearest_gaussian(cloud, nearest or NearestConfig())
        S = res.sigma_star
        ws = np.linalg.eigvalsh(S)[::-1]
        summary["nearest"] = {
            "sigma_star": S,
            "trace": float(np.trace(S)),
            "spec_normalized": ws / ws.sum(),
            "axis_over_pi": principal_angle(S) / np.pi,
            "w2sq_star": res.p_star ** 2,
            "w2sq_mm": res.p_mm ** 2,
            "gap": res.p_mm ** 2 - res.p_star ** 2,
            "theta_star": res.theta_star,
            "theta_mm": res.theta_mm,
            "p_star": res.p_star,
            "iterations": len(res.trajectory),
            "stopped_early": res.stopped_early,
        }
        summary["axis_agreement_over_pi"] = _axis_gap(principal_angle(S), grid.theta_star) / np.pi
        timings["nearest_s"] = time.perf_counter() - t1
    report = ExperimentReport(
        name="counterexample",
        config={"n_lambda": n_lambda, "n_theta": n_theta, "m": m, "seeds": list(seeds),
                "points": np.asarray(points).tolist()},
        cells=[], trials=[{"seed": s, "w2sq_mm": v} for s, v in zip(seeds, grid.value_mm_per_seed)],
        summary=summary,
        series={"landscape": grid.landscape, "lambdas": grid.lambdas, "thetas": grid.thetas},
    )
    timings["total_s"] = time.perf_counter() - t0
    report.timings = timings
    return report


def _axis_gap(a, b):
    """Distance between two axis angles modulo pi."""
    d = abs(a - b) % np.pi
    return float(min(d, np.pi - d))

