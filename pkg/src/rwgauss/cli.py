"""Command-line entry point: ``rwgauss <command> ...``.

stdout carries exactly one JSON envelope per invocation; human-readable
diagnostics go to stderr.  Exit codes: 0 success, 2 bad input or
configuration, 3 degenerate input (zero spread), 4 optimizer failure.
"""

import argparse
import logging
import shutil
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, plotting
from . import io as rio
from .core import center_and_norm, moment_matching
from .discrete_ot import DEFAULT_MAX_ENTRIES, mc_gaussian_rw2
from .errors import AscentError, DegenerateRayError, InputError, RWGaussError, SizeError
from .experiments import (
    counterexample_experiment,
    gmm1d_experiment,
    gmm_grid_experiment,
)
from .manifold import (
    NearestConfig,
    gaussian_w2_closed_form,
    nearest_gaussian,
    pca_separable_rw2,
)
from .onedim import FAMILIES, family_projection
from .semidual import AscentConfig, dual_ascent, gaussian_root

log = logging.getLogger("rwgauss")

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_OPTIMIZER = 0, 2, 3, 4


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _positive(conv):
    def f(text):
        v = conv(text)
        if v <= 0:
            raise ValueError("must be positive")
        return v
    return f


def _positive_list(conv):
    def f(text):
        vals = conv(text)
        if not vals or any(v <= 0 for v in vals):
            raise ValueError("need a non-empty list of positive values")
        return vals
    return f


def _nonnegative_list(conv):
    def f(text):
        vals = conv(text)
        if not vals or any(v < 0 for v in vals):
            raise ValueError("need a non-empty list of nonnegative values")
        return vals
    return f


EXPERIMENT_SCHEMAS = {
    "gmm1d": {
        "m_values": rio.float_list,
        "N_values": _positive_list(rio.int_list),
        "reps": _positive(int),
        "seed": int,
        "limit_N": int,
        "overlay_N": int,
    },
    "gmm-grid": {
        "r_values": _positive_list(rio.int_list),
        "c_values": _positive_list(rio.int_list),
        "spacing": float,
        "n": _positive(int),
        "m": _positive(int),
        "reps": _positive(int),
        "seed": int,
    },
    "counterexample": {
        "n_lambda": _positive(int),
        "n_theta": _positive(int),
        "m": _positive(int),
        "seeds": _nonnegative_list(rio.int_list),
        "run_nearest": _bool,
        "nearest_outer": int,
        "final_steps": _positive(int),
    },
}


# ---------------------------------------------------------------------------
# helpers


def _read_samples(path):
    X = rio.read_matrix(path)
    if X.shape[0] == 0:
        raise InputError(f"{path}: no samples")
    return X


def _emit(obj):
    sys.stdout.write(rio.dumps(obj) + "\n")
    sys.stdout.flush()


def _progress_printer(enabled, kind):
    if not enabled:
        return None

    def cb(*args):
        if len(args) == 1:
            rec = dict(args[0])
        else:
            rec = {"iteration": args[0], "objective": args[1]}
        rec["kind"] = kind
        sys.stderr.write(rio.dumps(rec, indent=0).replace("\n", "") + "\n")
    return cb


# ---------------------------------------------------------------------------
# commands


def cmd_angle1d(args):
    X = _read_samples(args.input)
    if X.shape[1] != 1:
        raise InputError(f"angle1d needs one column, got {X.shape[1]}")
    rep = family_projection(X[:, 0], args.family)
    out = rep.as_dict()
    out["mean"] = float(X[:, 0].mean())
    out["n"] = int(X.shape[0])
    return {"family": args.family}, out, {}


def _nearest_config(args):
    cfg = NearestConfig(seed=args.seed or 0)
    if args.iters is not None:
        cfg = replace(cfg, outer=args.iters)
    if args.batch is not None:
        cfg = replace(cfg, dual=replace(cfg.dual, batch=args.batch))
    if args.final_steps is not None:
        cfg = replace(cfg, final=replace(cfg.final, steps=args.final_steps))
    return replace(cfg, final=replace(cfg.final, seed=cfg.seed))


def cmd_nearest_gauss(args):
    X = _read_samples(args.input)
    cloud = center_and_norm(X)
    if cloud.rw2_norm == 0.0:
        raise DegenerateRayError("all samples coincide; there is no ray to compare")
    cfg = _nearest_config(args)
    res = nearest_gaussian(cloud, cfg, callback=_progress_printer(args.progress, "trajectory"))
    scale = cloud.rw2_norm
    sigma = res.sigma_star * scale**2
    files = {}
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        rio.write_csv_matrix(out, sigma)
        traj = out.with_name(out.stem + "_trajectory.csv")
        rows = [[r["iteration"], r["rw2"], r["objective"], r["trace"]] for r in res.trajectory]
        rio.write_csv_matrix(traj, np.array(rows).reshape(-1, 4),
                             header=["iteration", "rw2", "objective", "trace"])
        files = {"sigma": str(out), "trajectory": str(traj)}
    w = np.linalg.eigvalsh(res.sigma_star)[::-1]
    results = {
        "normalization": {"mean": cloud.mean, "rw2_norm": scale},
        "sigma_star": sigma,
        "sigma_star_normalized": res.sigma_star,
        "spectrum_normalized": w,
        "p_star": res.p_star,
        "p_star_se": res.p_star_se,
        "theta_star": res.theta_star,
        "theta_star_deg": float(np.degrees(res.theta_star)),
        "p_mm": res.p_mm,
        "theta_mm": res.theta_mm,
        "theta_mm_deg": float(np.degrees(res.theta_mm)),
        "gap": res.p_mm**2 - res.p_star**2,
        "iterations": len(res.trajectory),
        "stopped_early": res.stopped_early,
        "files": files,
    }
    config = {"outer": cfg.outer, "dual_batch": cfg.dual.batch, "dual_steps": cfg.dual.steps,
              "final_steps": cfg.final.steps, "cov_batch": cfg.cov_batch}
    return config, results, {}


def _replicates(fn, seed, k):
    vals = np.array([fn(seed + i) for i in range(k)], dtype=float)
    se = float(vals.std(ddof=1) / np.sqrt(k)) if k > 1 else float("nan")
    return float(vals.mean()), se, vals


def cmd_rw2_eval(args):
    X = _read_samples(args.input)
    d = X.shape[1]
    if args.sigma is not None:
        sigma = rio.read_matrix(args.sigma)
        if sigma.shape != (d, d):
            raise InputError(f"sigma is {sigma.shape}, data dimension is {d}")
    else:
        sigma = moment_matching(center_and_norm(X))[1]
    gaussian_root(sigma)  # validates symmetry and PSD before any work
    cloud = center_and_norm(X)
    seed = args.seed or 0
    k = args.seeds
    config = {"method": args.method, "replicates": k}
    res = {"normalization": {"mean": cloud.mean, "rw2_norm": cloud.rw2_norm}}
    if args.method == "semidual":
        cfg = AscentConfig()
        if args.iters is not None:
            cfg = replace(cfg, steps=args.iters)
        if args.batch is not None:
            cfg = replace(cfg, batch=args.batch)
        config.update(steps=cfg.steps, batch=cfg.batch, eta0=cfg.eta0,
                      eval_batch=cfg.evaluation_batch)
        progress = _progress_printer(args.progress, "dual")
        if progress is not None:
            cfg = replace(cfg, log_every=max(1, cfg.steps // 100))
        runs = [dual_ascent(cloud, sigma, replace(cfg, seed=seed + i), callback=progress)
                for i in range(k)]
        vals = np.array([r.rw2 for r in runs])
        se = (float(vals.std(ddof=1) / np.sqrt(k)) if k > 1 else runs[0].rw2_se)
        res.update(rw2=float(vals.mean()), std_err=se, replicates=vals)
    elif args.method == "mc-exact":
        m = args.m or min(2000, max(1, DEFAULT_MAX_ENTRIES // X.shape[0]))
        config["m"] = m
        mean, se, vals = _replicates(lambda s: mc_gaussian_rw2(cloud.data, sigma, m=m, seed=s), seed, k)
        res.update(rw2=mean, std_err=se, replicates=vals)
    elif args.method == "separable":
        sep = pca_separable_rw2(cloud, sigma=sigma)
        res.update(rw2=sep.rw2, per_axis_sq=sep.per_axis_sq, separable=sep.separable,
                   note="exact for coordinate-separable clouds, heuristic otherwise")
    else:
        cov = moment_matching(cloud)[1]
        res.update(rw2=gaussian_w2_closed_form(cov, sigma), note="moment-matched covariance vs sigma")
    return config, res, {}


def _experiment_files(name, report, out, figures):
    files = []

    def add(fname):
        files.append(fname)
        return out / fname

    if name == "gmm1d":
        rio.write_csv_matrix(add("cells.csv"),
                             [[c["m"], c["N"], c["theta_mean"], c["theta_var"], c["p_mean"], c["p_var"]]
                              for c in report.cells],
                             header=["m", "N", "theta_mean", "theta_var", "p_mean", "p_var"])
        rio.write_csv_matrix(add("trials.csv"),
                             [[t["m"], t["N"], t["rep"], t["theta"], t["p"], t["sigma_mu"]]
                              for t in report.trials],
                             header=["m", "N", "rep", "theta", "p", "sigma_mu"])
        ov = report.series["overlay"]
        if "x" in ov:
            keys = [k for k in ov if k != "x" and not k.startswith("sigma_")]
            rio.write_csv_matrix(add("overlay.csv"), np.column_stack([ov["x"]] + [ov[k] for k in keys]),
                                 header=["x", *keys])
        if figures and plotting.gmm1d_figure(report, out / "gmm1d.png"):
            files.append("gmm1d.png")
    elif name == "gmm-grid":
        rio.write_csv_matrix(add("cells.csv"),
                             [[c["r"], c["c"], c["theta_mean"], c["theta_var"]] for c in report.cells],
                             header=["r", "c", "theta_mean", "theta_var"])
        rio.write_csv_matrix(add("trials.csv"),
                             [[t["r"], t["c"], t["rep"], t["theta"], t["rw2"], t["norm"]] for t in report.trials],
                             header=["r", "c", "rep", "theta", "rw2", "norm"])
        rows = [[int(k.split("x")[0]), int(k.split("x")[1]), x, y]
                for k, X in report.series["samples"].items() for x, y in X]
        if rows:
            rio.write_csv_matrix(add("samples.csv"), rows, header=["r", "c", "x", "y"])
        if figures and plotting.gmm_grid_figure(report, out / "gmm_grid.png"):
            files.append("gmm_grid.png")
    else:
        rio.write_csv_matrix(add("landscape.csv"), report.series["landscape"])
        s = report.summary
        header = {
            "rows": "lambda", "cols": "theta",
            "lambdas": report.series["lambdas"], "thetas": report.series["thetas"],
            "minimizer": {"lambda": s["lambda_star"], "theta": s["theta_star"], "w2sq": s["w2sq_star"]},
            "moment_match": {"lambda": s["spec_mm"][0] / np.sum(s["spec_mm"]), "theta": s["theta_mm"],
                             "w2sq": s["w2sq_mm"]},
        }
        add("landscape.json").write_text(rio.dumps(header) + "\n")
        rows = [["moment_match", s["w2sq_mm"], s["theta_mm"] / np.pi, s["spec_mm"][0]],
                ["grid_minimum", s["w2sq_star"], s["theta_star_over_pi"], s["lambda_star"]]]
        if "nearest" in s:
            nb = s["nearest"]
            rows.append(["alternating", nb["w2sq_star"], nb["axis_over_pi"], nb["spec_normalized"][0]])
        with open(add("comparison.csv"), "w") as fh:
            fh.write("method,w2sq,axis_over_pi,lambda_leading\n")
            fh.writelines(",".join([r[0]] + [rio.format_float(v) for v in r[1:]]) + "\n" for r in rows)
        if figures and plotting.landscape_figure(report, out / "landscape.png"):
            files.append("landscape.png")
    report.files = files
    (out / "report.json").write_text(rio.dumps(report.as_dict()) + "\n")
    files.append("report.json")
    return files


def cmd_experiment(args):
    schema = EXPERIMENT_SCHEMAS[args.name]
    cfg = rio.read_config(args.config, schema) if args.config else {}
    if args.name == "gmm1d":
        if args.seed is not None:
            cfg["seed"] = args.seed
        report = gmm1d_experiment(**cfg, workers=args.workers)
    elif args.name == "gmm-grid":
        if args.seed is not None:
            cfg["seed"] = args.seed
        report = gmm_grid_experiment(**cfg, workers=args.workers)
    else:
        seeds = cfg.pop("seeds", [0, 1, 2, 3, 4])
        if args.seed is not None:
            seeds = [args.seed + i for i in range(len(seeds))]
        nearest = NearestConfig(seed=seeds[0])
        if "nearest_outer" in cfg:
            nearest = replace(nearest, outer=cfg.pop("nearest_outer"))
        if args.iters is not None:
            nearest = replace(nearest, outer=args.iters)
        if "final_steps" in cfg:
            nearest = replace(nearest, final=replace(nearest.final, steps=cfg.pop("final_steps")))
        nearest = replace(nearest, final=replace(nearest.final, seed=seeds[0]))
        report = counterexample_experiment(seeds=tuple(seeds), nearest=nearest, **cfg)

    files = []
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        # stage in a sibling directory so a failure leaves nothing behind
        stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out))
        try:
            files = _experiment_files(args.name, report, stage, not args.no_figures)
            for f in files:
                shutil.move(str(stage / f), str(out / f))
        finally:
            shutil.rmtree(stage, ignore_errors=True)
        files = [str(out / f) for f in files]
    results = {"summary": report.summary, "cells": report.cells, "files": files}
    return report.config, results, report.timings


# ---------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common.add_argument("--iters", type=int, default=None, help="iteration budget override")
    common.add_argument("--batch", type=int, default=None, help="dual batch size override")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="rwgauss", description="Relative Wasserstein angles and nearest Gaussians.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("angle1d", parents=[common], help="closed-form angle of a 1-D sample to a family ray")
    a.add_argument("input")
    a.add_argument("--family", choices=FAMILIES, default="gaussian")
    a.set_defaults(func=cmd_angle1d)

    n = sub.add_parser("nearest-gauss", parents=[common], help="alternating nearest-Gaussian search")
    n.add_argument("input")
    n.add_argument("--final-steps", type=int, default=None, help="dual steps for the final evaluations")
    n.add_argument("--progress", action="store_true", help="stream trajectory records to stderr")
    n.set_defaults(func=cmd_nearest_gauss)

    r = sub.add_parser("rw2-eval", parents=[common], help="RW2 between a cloud and N(0, sigma)")
    r.add_argument("input")
    r.add_argument("--sigma", default=None, help="d x d covariance file (default: moment match)")
    r.add_argument("--method", choices=("semidual", "mc-exact", "separable", "bures"), default="semidual")
    r.add_argument("--seeds", type=int, default=1, help="replicates for stochastic methods")
    r.add_argument("--m", type=int, default=None, help="Gaussian draws for mc-exact")
    r.add_argument("--progress", action="store_true", help="stream dual objective records to stderr")
    r.set_defaults(func=cmd_rw2_eval)

    e = sub.add_parser("experiment", parents=[common], help="run a scripted study")
    e.add_argument("name", choices=sorted(EXPERIMENT_SCHEMAS))
    e.add_argument("--config", default=None, help="key = value file")
    e.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.captureWarnings(True)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    t0 = time.perf_counter()
    seed = args.seed if args.seed is not None else 0
    try:
        config, results, timings = args.func(args)
        code = EXIT_OK
    except AscentError as exc:
        code, config, timings = EXIT_OPTIMIZER, {}, {}
        results = {"error": str(exc), "diagnostics": exc.diagnostics}
    except DegenerateRayError as exc:
        code, config, timings = EXIT_DEGENERATE, {}, {}
        results = {"error": str(exc)}
    except (InputError, SizeError, ValueError) as exc:
        code, config, timings = EXIT_INPUT, {}, {}
        results = {"error": str(exc)}
    except RWGaussError as exc:
        code, config, timings = EXIT_OPTIMIZER, {}, {}
        results = {"error": str(exc)}
    if code != EXIT_OK:
        print(f"rwgauss {args.command}: {results['error']}", file=sys.stderr)
    timings = dict(timings)
    timings["wall_s"] = time.perf_counter() - t0
    _emit(rio.envelope(args.command, config, seed, results, timings, __version__))
    return code


if __name__ == "__main__":
    sys.exit(main())
