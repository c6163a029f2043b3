"""Stochastic semi-discrete dual ascent for RW2 between a cloud and a Gaussian.

With cost ``c(x, y) = ||x - y||^2 / 2`` and atoms ``x_i`` of mass ``1/n``,

    L(f) = mean(f) + E_Y[ min_i (||x_i - Y||^2 / 2 - f_i) ]

is concave in ``f`` and ``2 max_f L(f) = RW2^2``.  Any fixed ``f`` yields a
lower bound.  Supergradient: ``1/n - (share of Y whose argmin is i)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .core import SampleCloud, center_and_norm
from .errors import AscentError, InputError

_EVAL_CHUNK = 2048


@dataclass(frozen=True)
class AscentConfig:
    """Dual ascent settings.

    The step at iteration ``k`` is ``eta0 * scale / sqrt(1 + k / decay)``.
    With ``step_scale='auto'`` the scale is ``n * h^2 / d``, ``h`` being the
    mean nearest-neighbour spacing of the atoms, which makes ``eta0``
    roughly problem independent; a number fixes the scale instead.
    ``average`` returns the tail (second-half) average of the iterates.
    """

    batch: int = 256
    steps: int = 20000
    eta0: float = 0.5
    decay: float = 100.0
    seed: int = 0
    eval_batch: int | None = None
    step_scale: float | str = "auto"
    average: bool = True
    log_every: int = 0

    def __post_init__(self):
        if self.batch <= 0 or self.steps < 0 or self.eta0 <= 0 or self.decay <= 0:
            raise InputError("batch, eta0 and decay must be positive; steps nonnegative")
        if self.eval_batch is not None and self.eval_batch <= 0:
            raise InputError("eval_batch must be positive")
        if self.step_scale != "auto" and not float(self.step_scale) > 0:
            raise InputError("step_scale must be 'auto' or a positive number")

    @property
    def evaluation_batch(self):
        return self.eval_batch if self.eval_batch is not None else 10 * self.batch

    def stepsize(self, k, scale):
        return self.eta0 * scale / np.sqrt(1.0 + k / self.decay)


@dataclass
class DualPotential:
    """Mean-centered Kantorovich potential on the atoms."""

    f: np.ndarray
    iteration: int = 0
    objective: float = float("nan")


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point set used as a stand-in target (e.g. a quantized Gaussian)."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def uniform(cls, points):
        points = np.asarray(points, dtype=float)
        return cls(points, np.full(points.shape[0], 1.0 / points.shape[0]))


@dataclass
class AscentResult:
    potential: DualPotential
    rw2: float
    rw2_se: float
    objective: float
    objective_se: float
    trace: list = field(default_factory=list)


def _as_cloud(cloud):
    if isinstance(cloud, SampleCloud):
        return cloud
    return center_and_norm(cloud)


def gaussian_root(sigma, d=None):
    """Matrix ``A`` with ``A A^T = Sigma``.

    Accepts a PSD matrix (eigenvalues floored at zero) or any object with
    ``R`` and ``lam`` attributes describing ``R diag(lam) R^T``.
    """
    if hasattr(sigma, "R") and hasattr(sigma, "lam"):
        return np.asarray(sigma.R) * np.sqrt(np.clip(np.asarray(sigma.lam), 0.0, None))
    S = np.atleast_2d(np.asarray(sigma, dtype=float))
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InputError(f"sigma must be square, got shape {S.shape}")
    if d is not None and S.shape[0] != d:
        raise InputError(f"sigma is {S.shape[0]}x{S.shape[0]}, data dimension is {d}")
    if not np.all(np.isfinite(S)):
        raise InputError("sigma has non-finite entries")
    scale = max(float(np.abs(S).max()), 1.0)
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise InputError("sigma is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w.min() < -1e-10 * scale:
        raise InputError(f"sigma is not positive semidefinite (min eigenvalue {w.min():.3g})")
    return V * np.sqrt(np.clip(w, 0.0, None))


class _Target:
    """Sampler over either a Gaussian (through its root) or a discrete measure."""

    def __init__(self, sigma, d):
        if isinstance(sigma, DiscreteMeasure):
            pts = np.asarray(sigma.points, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != d:
                raise InputError("discrete target has the wrong dimension")
            self.points = pts
            self.weights = np.asarray(sigma.weights, dtype=float)
            self.cdf = np.cumsum(self.weights)
            self.cdf[-1] = 1.0
            self.root = None
        else:
            self.root = gaussian_root(sigma, d)
            self.points = None

    @property
    def discrete(self):
        return self.points is not None

    def sample(self, rng, m):
        if self.discrete:
            idx = np.searchsorted(self.cdf, rng.random(m), side="right")
            return self.points[np.minimum(idx, len(self.cdf) - 1)]
        return rng.standard_normal((m, self.root.shape[1])) @ self.root.T


def _scores(X, half_sq, f, Y):
    # min_i (||x_i - y||^2/2 - f_i) - ||y||^2/2 over the rows of Y
    return (half_sq - f)[None, :] - Y @ X.T


class _Scorer:
    """Assignment kernel with ``f - ||x||^2/2`` folded into one matrix product.

    ``[y, 1] @ [x_i, f_i - ||x_i||^2/2]^T`` is the negated score, so a single
    GEMM plus ``argmax`` (lowest index on ties) gives the assignment.
    """

    def __init__(self, X, f):
        n, d = X.shape
        self.d = d
        self.half_sq = 0.5 * np.sum(X * X, axis=1)
        self.XA = np.empty((n, d + 1))
        self.XA[:, :d] = X
        self.set_f(f)

    def set_f(self, f):
        self.XA[:, self.d] = f - self.half_sq

    def assign(self, Y):
        """Assignments and ``min_i (||x_i - y||^2/2 - f_i)`` for each row of ``Y``."""
        YA = np.empty((Y.shape[0], self.d + 1))
        YA[:, :self.d] = Y
        YA[:, self.d] = 1.0
        G = YA @ self.XA.T
        idx = G.argmax(axis=1)
        return idx, 0.5 * np.sum(Y * Y, axis=1) - G[np.arange(len(idx)), idx]


def nearest_atom(cloud, y, f=None):
    """Index minimizing ``||x_i - y||^2 / 2 - f_i``; ties go to the lowest index.

    ``y`` may be a single point or a batch of points (one per row).
    """
    cloud = _as_cloud(cloud)
    X = cloud.data
    f = np.zeros(cloud.n) if f is None else np.asarray(getattr(f, "f", f), dtype=float)
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    idx = _scores(X, 0.5 * np.sum(X * X, axis=1), f, Y).argmin(axis=1)
    return int(idx[0]) if np.ndim(y) == 1 else idx


def _min_terms(X, f, Y):
    scorer = _Scorer(X, f)
    out = np.empty(Y.shape[0])
    for s in range(0, Y.shape[0], _EVAL_CHUNK):
        out[s:s + _EVAL_CHUNK] = scorer.assign(Y[s:s + _EVAL_CHUNK])[1]
    return out


def dual_objective(cloud, target, f):
    """Exact ``L(f)`` for a :class:`DiscreteMeasure` target."""
    cloud = _as_cloud(cloud)
    X = cloud.data
    f = np.asarray(getattr(f, "f", f), dtype=float)
    vals = _min_terms(X, f, np.asarray(target.points, dtype=float))
    return float(f.mean() + target.weights @ vals)


def dual_objective_mc(cloud, sigma, f=None, m=10000, seed=0):
    """Unbiased Monte-Carlo estimate of ``L(f, Sigma)`` and its standard error."""
    cloud = _as_cloud(cloud)
    X = cloud.data
    f = np.zeros(cloud.n) if f is None else np.asarray(getattr(f, "f", f), dtype=float)
    if f.shape != (cloud.n,):
        raise InputError(f"potential has shape {f.shape}, expected ({cloud.n},)")
    target = _Target(sigma, cloud.d)
    Y = target.sample(np.random.default_rng(seed), m)
    vals = _min_terms(X, f, Y)
    se = float(vals.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return float(f.mean() + vals.mean()), se


def auto_step_scale(X, max_queries=512):
    """``n * h^2 / d`` with ``h^2`` the mean squared nearest-neighbour distance."""
    n, d = X.shape
    if n < 2:
        return 1.0
    q = X[: min(n, max_queries)]
    D = np.sum(q * q, axis=1)[:, None] + np.sum(X * X, axis=1)[None, :] - 2.0 * q @ X.T
    D[np.arange(q.shape[0]), np.arange(q.shape[0])] = np.inf
    D = np.maximum(D, 0.0)
    nn = D.min(axis=1)
    nn = nn[nn > 0]
    if nn.size == 0:
        h2 = float(np.mean(np.sum(X * X, axis=1))) or 1.0
    else:
        h2 = float(nn.mean())
    return n * h2 / d


def ascend(X, target, cfg, f0=None, rng=None, scale=None, callback=None, k_start=0):
    """Run the stochastic supergradient loop; returns ``(f, trace)``.

    Low-level entry used by :func:`dual_ascent` and the alternating scheme;
    ``k_start`` offsets the step schedule so warm restarts keep decaying.
    """
    n = X.shape[0]
    half_sq = 0.5 * np.sum(X * X, axis=1)
    f = np.zeros(n) if f0 is None else np.array(f0, dtype=float)
    f -= f.mean()
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if scale is None:
        scale = auto_step_scale(X) if cfg.step_scale == "auto" else float(cfg.step_scale)
    favg = np.zeros(n)
    navg = 0
    start_avg = cfg.steps // 2
    trace = []
    limit = 1e8 * max(1.0, float(half_sq.max()))
    scorer = _Scorer(X, f)
    for k in range(cfg.steps):
        Y = target.sample(rng, cfg.batch)
        scorer.set_f(f)
        idx, terms = scorer.assign(Y)
        grad = 1.0 / n - np.bincount(idx, minlength=n) / cfg.batch
        f_before_mean = f.mean()
        f += cfg.stepsize(k_start + k, scale) * grad
        f -= f.mean()
        if cfg.log_every and (k % cfg.log_every == 0 or k == cfg.steps - 1):
            # objective of the potential that produced this batch's assignments
            est = float(f_before_mean + terms.mean())
            if not np.isfinite(est) or np.abs(f).max() > limit:
                raise AscentError(
                    "dual ascent diverged",
                    {"iteration": k, "objective": est, "max_abs_f": float(np.abs(f).max())},
                )
            trace.append((k, est))
            if callback is not None:
                callback(k, est)
        if cfg.average and k >= start_avg:
            navg += 1
            favg += (f - favg) / navg
    if not np.all(np.isfinite(f)) or np.abs(f).max() > limit:
        raise AscentError(
            "dual ascent diverged",
            {"iteration": cfg.steps, "max_abs_f": float(np.nanmax(np.abs(f)))},
        )
    out = favg if (cfg.average and navg > 0) else f
    return out - out.mean(), trace


def dual_ascent(cloud, sigma, cfg=None, f0=None, callback=None):
    """Estimate ``RW2(mu, N(0, Sigma))`` by stochastic dual ascent.

    Parameters
    ----------
    cloud : SampleCloud or array_like
        Source atoms (centered internally if raw samples are given).
    sigma : ndarray, GaussianFactor or DiscreteMeasure
        Target covariance, factor, or a discrete stand-in target.
    cfg : AscentConfig, optional
    f0 : array_like, optional
        Warm-start potential.
    callback : callable, optional
        Called as ``callback(iteration, objective_estimate)`` every
        ``cfg.log_every`` steps.

    Returns
    -------
    AscentResult
        ``rw2 = sqrt(max(0, 2 L))`` with ``L`` evaluated on a fresh batch
        (exactly for discrete targets).
    """
    cfg = AscentConfig() if cfg is None else cfg
    cloud = _as_cloud(cloud)
    X = cloud.data
    target = _Target(sigma, cloud.d)
    rng = np.random.default_rng(cfg.seed)
    f, trace = ascend(X, target, cfg, f0=f0, rng=rng, callback=callback)
    if target.discrete:
        vals = _min_terms(X, f, target.points)
        L = float(f.mean() + target.weights @ vals)
        L_se = 0.0
    else:
        Y = target.sample(rng, cfg.evaluation_batch)
        vals = _min_terms(X, f, Y)
        L = float(f.mean() + vals.mean())
        L_se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    if not np.isfinite(L):
        raise AscentError("objective estimate is not finite", {"iteration": cfg.steps})
    rw2 = float(np.sqrt(max(0.0, 2.0 * L)))
    rw2_se = float(L_se / rw2) if rw2 > 0 else float(np.sqrt(2.0 * L_se))
    pot = DualPotential(f, cfg.steps, L)
    return AscentResult(pot, rw2, rw2_se, L, L_se, trace)


def with_seed(cfg, seed):
    return replace(cfg, seed=seed)
