"""Figure rendering for experiment reports.

matplotlib is optional: :func:`available` reports whether it can be imported
and every renderer returns ``None`` when it cannot.  Figures are written with
the non-interactive Agg backend.
"""

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def available():
    return _pyplot() is not None


def gmm1d_figure(report, path):
    """Mean curves with one-standard-deviation bands, plus the N=64 overlay."""
    plt = _pyplot()
    if plt is None:
        return None
    cfg = report.config
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    for m in cfg["m_values"]:
        rows = [c for c in report.cells if c["m"] == m]
        N = np.array([c["N"] for c in rows])
        for ax, key in zip(axes[:2], ("theta", "p")):
            mean = np.array([c[f"{key}_mean"] for c in rows])
            sd = np.sqrt([c[f"{key}_var"] for c in rows])
            ax.plot(N, mean, marker="o", label=f"m={m:g}")
            ax.fill_between(N, mean - sd, mean + sd, alpha=0.2)
    for ax, lab in zip(axes[:2], ("angle (rad)", "projection distance")):
        ax.set_xscale("log", base=2)
        ax.set_xlabel("N")
        ax.set_ylabel(lab)
        ax.legend()
    ov = report.series.get("overlay") or {}
    if "x" in ov:
        ax = axes[2]
        for k, m in enumerate(cfg["m_values"]):
            color = f"C{k}"
            ax.plot(ov["x"], ov[f"nearest_m{m:g}"], color=color, label=f"nearest, m={m:g}")
            ax.plot(ov["x"], ov[f"moment_m{m:g}"], color=color, ls="--", label=f"moment, m={m:g}")
        ax.set_title(f"N = {cfg['overlay_N']}")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def gmm_grid_figure(report, path):
    """One scatter panel per ``(r, c)`` with its angle in the title."""
    plt = _pyplot()
    if plt is None:
        return None
    samples = report.series.get("samples") or {}
    rs, cs = report.config["r_values"], report.config["c_values"]
    fig, axes = plt.subplots(len(rs), len(cs), figsize=(3 * len(cs), 3 * len(rs)), squeeze=False)
    for i, r in enumerate(rs):
        for j, c in enumerate(cs):
            ax = axes[i, j]
            X = samples.get(f"{r}x{c}")
            if X is not None:
                ax.scatter(X[:, 0], X[:, 1], s=1, alpha=0.4)
            cell = next(cl for cl in report.cells if cl["r"] == r and cl["c"] == c)
            ax.set_title(f"{r}x{c}: angle {cell['theta_mean']:.3f}")
            ax.set_aspect("equal")
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def landscape_figure(report, path):
    """Contour plot of the averaged W2^2 landscape with both reference points."""
    plt = _pyplot()
    if plt is None:
        return None
    s = report.summary
    lam, th = report.series["lambdas"], report.series["thetas"]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    cs = ax.contourf(th / np.pi, lam, report.series["landscape"], levels=30, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="W2^2")
    ax.plot(s["theta_mm_over_pi"], s["spec_mm"][0] / np.sum(s["spec_mm"]), "w^", label="moment match")
    ax.plot(s["theta_star_over_pi"], s["lambda_star"], "r*", ms=12, label="grid minimum")
    ax.set_xlabel("rotation / pi")
    ax.set_ylabel("lambda")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
