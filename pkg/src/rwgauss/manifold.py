"""Nearest-Gaussian search over covariances ``Sigma = R diag(lam) R^T``.

The alternating scheme refreshes a semi-discrete dual potential for the
current covariance, then takes stochastic Riemannian steps on ``R`` and
projected steps on ``lam`` with the potential frozen.  Also here: the
PCA-separable estimator, the Gaussian-Gaussian closed form, and a
brute-force 2-D grid search driven by exact Monte-Carlo OT.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    SampleCloud,
    SideTriple,
    angle_from_sides,
    center_and_norm,
    moment_matching,
)
from .discrete_ot import _check_weights, solve_transport, sq_cost_matrix
from .errors import InputError
from .onedim import quantile_w2_1d
from .semidual import (
    AscentConfig,
    _Scorer,
    _Target,
    ascend,
    auto_step_scale,
    dual_ascent,
    gaussian_root,
)

log = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-8
ORTHO_TOL = 1e-8


@dataclass
class GaussianFactor:
    """Covariance factor ``R diag(lam) R^T`` with orthogonal ``R``."""

    R: np.ndarray
    lam: np.ndarray

    @property
    def sigma(self):
        S = (self.R * self.lam) @ self.R.T
        return 0.5 * (S + S.T)

    @property
    def root(self):
        return self.R * np.sqrt(np.clip(self.lam, 0.0, None))

    @classmethod
    def from_sigma(cls, sigma):
        w, V = np.linalg.eigh(0.5 * (sigma + sigma.T))
        order = np.argsort(w)[::-1]
        return cls(V[:, order], np.clip(w[order], 0.0, None))

    def copy(self):
        return GaussianFactor(self.R.copy(), self.lam.copy())


def grad_R(residuals, xi, lam):
    """Sample-average gradient ``mean_l r_l (Lambda^{1/2} xi_l)^T`` in ``R``."""
    r = np.atleast_2d(residuals)
    z = np.atleast_2d(xi) * np.sqrt(np.clip(lam, 0.0, None))
    return r.T @ z / r.shape[0]


def grad_lambda(residuals, xi, R, lam, floor=LAMBDA_FLOOR):
    """Sample-average gradient in ``lam``; entries below ``floor`` use ``floor``."""
    r = np.atleast_2d(residuals)
    s = np.sqrt(np.maximum(lam, floor))
    return np.mean((r @ R) * np.atleast_2d(xi), axis=0) / (2.0 * s)


def _polar(A):
    U, _, Vt = np.linalg.svd(A)
    return U @ Vt


def retract(A):
    """Orthonormalize ``A`` by thin QR with a positive diagonal; polar fallback."""
    Q, T = np.linalg.qr(A)
    diag = np.diag(T)
    if np.min(np.abs(diag)) <= 1e-12 * max(1.0, np.max(np.abs(diag))):
        return _polar(A)
    return Q * np.sign(diag)


def riemannian_step(R, G, eta):
    """One descent step on the orthogonal group.

    ``G`` is projected to the tangent space at ``R`` (``G - R sym(R^T G)``),
    then ``R - eta G_tan`` is retracted by QR.
    """
    RtG = R.T @ G
    G_tan = G - R @ (0.5 * (RtG + RtG.T))
    out = retract(R - eta * G_tan)
    if np.abs(out.T @ out - np.eye(R.shape[1])).max() > ORTHO_TOL:
        out = _polar(out)
    return out


def project_lambda(v):
    """Euclidean projection onto ``{lam >= 0, sum(lam) <= 1}``."""
    v = np.asarray(v, dtype=float)
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= 1.0:
        return clipped
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def gaussian_w2_closed_form(sigma1, sigma2):
    """W2 between ``N(0, sigma1)`` and ``N(0, sigma2)`` (Bures metric)."""
    r1 = gaussian_root(sigma1)
    r2 = gaussian_root(sigma2)
    if r1.shape != r2.shape:
        raise InputError("covariances have different sizes")
    S1 = r1 @ r1.T
    S2 = r2 @ r2.T
    w, V = np.linalg.eigh(S2)
    half = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    M = half @ S1 @ half
    m = np.linalg.eigvalsh(0.5 * (M + M.T))
    cross = np.sum(np.sqrt(np.clip(m, 0.0, None)))
    return float(np.sqrt(max(0.0, np.trace(S1) + np.trace(S2) - 2.0 * cross)))


@dataclass
class SeparableResult:
    """PCA-basis estimate: exact only for coordinate-separable measures."""

    rw2: float
    per_axis_sq: np.ndarray
    variances: np.ndarray
    basis: np.ndarray
    separable: bool


def _separability_score(Z):
    # largest correlation between squared PCA coordinates: zero for product measures
    # with independent coordinates (up to sampling), a cheap heuristic only
    if Z.shape[1] < 2:
        return 0.0
    Q = Z * Z
    Q = Q - Q.mean(axis=0)
    sd = Q.std(axis=0)
    ok = sd > 0
    if ok.sum() < 2:
        return 0.0
    C = np.corrcoef(Q[:, ok].T)
    np.fill_diagonal(C, 0.0)
    return float(np.abs(C).max())


def pca_separable_rw2(cloud, sigma=None, separability_tol=0.1):
    """Sum of 1-D RW2^2 terms along the principal axes of the cloud.

    Each coordinate in the PCA basis is compared in closed form with
    ``N(0, sigma_k^2)``, ``sigma_k^2`` the variance along that axis, and the
    square root of the total is returned.  This is the exact RW2 to the
    moment-matched Gaussian when the cloud is a product measure in that
    basis; otherwise it is a heuristic, reported through ``separable``.
    Passing ``sigma`` uses its eigenbasis and eigenvalues instead.
    """
    cloud = cloud if isinstance(cloud, SampleCloud) else center_and_norm(cloud)
    if sigma is None:
        _, cov = moment_matching(cloud)
    else:
        root = gaussian_root(sigma, cloud.d)
        cov = root @ root.T
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, V = np.clip(w[order], 0.0, None), V[:, order]
    Z = cloud.data @ V
    terms = np.array([quantile_w2_1d(Z[:, k], family="gaussian", scale=np.sqrt(w[k]))
                      for k in range(cloud.d)])
    score = _separability_score(Z)
    return SeparableResult(float(np.sqrt(terms.sum())), terms, w, V, score <= separability_tol)


# ---------------------------------------------------------------------------
# alternating scheme


@dataclass(frozen=True)
class NearestConfig:
    """Alternating-scheme settings.

    Covariance steps use ``eta_R * d / tr0`` and ``eta_lambda * tr0 / d``
    (``tr0`` the initial trace) so both move relative to the typical
    eigenvalue, with the same ``1 / sqrt(1 + t / decay)`` schedule as the
    dual.  ``dual`` configures each warm-started dual refresh, ``warmup_steps``
    the first one, and ``final`` the fresh evaluations used for the reported
    distances.
    """

    outer: int = 200
    inner: int = 1
    cov_batch: int = 1024
    eta_R: float = 0.5
    eta_lambda: float = 0.5
    decay: float = 50.0
    dual: AscentConfig = field(default_factory=lambda: AscentConfig(steps=50))
    warmup_steps: int = 1000
    final: AscentConfig = field(default_factory=lambda: AscentConfig(steps=3000))
    patience: int = 20
    rtol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.outer < 0 or self.inner < 1 or self.cov_batch < 1 or self.patience < 1:
            raise InputError("outer >= 0, inner >= 1, cov_batch >= 1, patience >= 1 required")
        if self.eta_R < 0 or self.eta_lambda < 0 or self.decay <= 0:
            raise InputError("step sizes must be nonnegative and decay positive")


@dataclass
class NearestGaussianResult:
    """Optimized covariance and its relation to the cloud.

    ``p_star`` is the RW2 estimate to ``N(0, sigma_star)`` and
    ``theta_star`` the angle from the side triple ``(|mu|, sqrt(tr), p)``;
    the ``*_mm`` fields hold the same quantities for the moment-matched
    covariance, evaluated with an identical fresh dual ascent.
    """

    sigma_star: np.ndarray
    p_star: float
    theta_star: float
    p_mm: float
    theta_mm: float
    sigma_mm: np.ndarray
    norm: float
    trajectory: list = field(default_factory=list)
    stopped_early: bool = False
    p_star_se: float = float("nan")
    p_mm_se: float = float("nan")


def triple_angle(norm, trace, dist):
    """Angle between a cloud of RW2 norm ``norm`` and the ray of a Gaussian."""
    return angle_from_sides(SideTriple(norm, float(np.sqrt(max(trace, 0.0))), dist), tol=None)


def _covariance_step(X, f, fac, rng, cfg):
    d = X.shape[1]
    xi = rng.standard_normal((cfg.cov_batch, d))
    Y = xi @ fac.root.T
    idx, terms = _Scorer(X, f).assign(Y)
    r = Y - X[idx]
    value = float(terms.mean() + f.mean())
    GR = grad_R(r, xi, fac.lam)
    Gl = grad_lambda(r, xi, fac.R, fac.lam)
    return value, GR, Gl


def nearest_gaussian(cloud, cfg=None, callback=None):
    """Search for the RW2-nearest zero-mean Gaussian by alternating updates.

    Parameters
    ----------
    cloud : SampleCloud or array_like
        Samples; they are centered and scaled to unit RW2 norm internally
        and ``sigma_star`` is returned in the normalized units.
    cfg : NearestConfig, optional
    callback : callable, optional
        Receives each trajectory record (a dict).

    Returns
    -------
    NearestGaussianResult
    """
    cfg = NearestConfig() if cfg is None else cfg
    cloud = cloud if isinstance(cloud, SampleCloud) else center_and_norm(cloud)
    cloud = cloud.normalized()
    X = cloud.data
    d = X.shape[1]
    _, sigma_mm = moment_matching(cloud)
    fac = GaussianFactor.from_sigma(sigma_mm)
    tr0 = float(fac.lam.sum())
    if tr0 > 1.0:
        fac.lam = fac.lam / tr0
        tr0 = 1.0
    tr0 = max(tr0, 1e-12)
    eta_R0 = cfg.eta_R * d / tr0
    eta_l0 = cfg.eta_lambda * tr0 / d
    lam_bar = tr0 / d

    rng = np.random.default_rng(cfg.seed)
    f = None
    trajectory = []
    stopped = False
    scale = None
    k_done = 0
    for t in range(cfg.outer):
        steps = cfg.warmup_steps if t == 0 else cfg.dual.steps
        dcfg = replace(cfg.dual, steps=steps)
        if scale is None:
            scale = auto_step_scale(X) if dcfg.step_scale == "auto" else float(dcfg.step_scale)
        f, _ = ascend(X, _Target(fac, d), dcfg, f0=f, rng=rng, scale=scale, k_start=k_done)
        k_done += steps
        refreshed = None
        for _ in range(cfg.inner):
            value, GR, Gl = _covariance_step(X, f, fac, rng, cfg)
            if refreshed is None:
                refreshed = value
            shrink = 1.0 / np.sqrt(1.0 + t / cfg.decay)
            fac.R = riemannian_step(fac.R, GR, eta_R0 * shrink)
            # sqrt(lam / mean lam) preconditioning cancels the 1/sqrt(lam) blow-up of
            # the raw gradient near zero while leaving typical eigenvalues unchanged
            precond = np.sqrt(np.maximum(fac.lam, LAMBDA_FLOOR) / lam_bar)
            fac.lam = project_lambda(fac.lam - eta_l0 * shrink * precond * Gl)
        rec = {
            "iteration": t,
            "rw2": float(np.sqrt(max(0.0, 2.0 * refreshed))),
            "objective": refreshed,
            "trace": float(fac.lam.sum()),
        }
        trajectory.append(rec)
        if callback is not None:
            callback(rec)
        w = cfg.patience
        if t + 1 >= 2 * w:
            recent = np.mean([r["objective"] for r in trajectory[-w:]])
            before = np.mean([r["objective"] for r in trajectory[-2 * w:-w]])
            if before - recent < cfg.rtol * abs(before):
                stopped = True
                warnings.warn(f"nearest_gaussian stopped early at iteration {t}: "
                              "objective no longer decreasing", RuntimeWarning, stacklevel=2)
                break

    sigma_star = fac.sigma
    ev_mm = dual_ascent(cloud, sigma_mm, cfg.final)
    ev_star = dual_ascent(cloud, sigma_star, cfg.final)
    return NearestGaussianResult(
        sigma_star=sigma_star,
        p_star=ev_star.rw2,
        theta_star=triple_angle(1.0, np.trace(sigma_star), ev_star.rw2),
        p_mm=ev_mm.rw2,
        theta_mm=triple_angle(1.0, np.trace(sigma_mm), ev_mm.rw2),
        sigma_mm=sigma_mm,
        norm=float(center_and_norm(cloud.data).rw2_norm),
        trajectory=trajectory,
        stopped_early=stopped,
        p_star_se=ev_star.rw2_se,
        p_mm_se=ev_mm.rw2_se,
    )


# ---------------------------------------------------------------------------
# two-dimensional grid search


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def sigma_lambda_theta(lam, theta):
    """``R(theta) diag(lam, 1 - lam) R(theta)^T``."""
    Rt = rotation(theta)
    return (Rt * np.array([lam, 1.0 - lam])) @ Rt.T


def principal_angle(sigma):
    """Angle in ``[0, pi)`` of the leading eigenvector of a 2x2 covariance."""
    s11, s12, s22 = sigma[0, 0], sigma[0, 1], sigma[1, 1]
    return float(np.mod(0.5 * np.arctan2(2.0 * s12, s11 - s22), np.pi))


def canonical(lam, theta):
    """Representative of ``(lam, theta) ~ (1 - lam, theta + pi/2)`` with ``lam >= 1/2``."""
    if lam < 0.5:
        lam, theta = 1.0 - lam, theta + 0.5 * np.pi
    return lam, float(np.mod(theta, np.pi))


@dataclass
class GridSearchResult:
    lam_star: float
    theta_star: float
    value_star: float
    lambdas: np.ndarray
    thetas: np.ndarray
    landscape: np.ndarray
    per_seed: np.ndarray
    lam_mm: float
    theta_mm: float
    value_mm: float
    value_mm_per_seed: np.ndarray
    lam_refined: float = float("nan")
    theta_refined: float = float("nan")


def _refine(landscape, lambdas, thetas, i, j):
    """Quadratic vertex through the 3x3 neighbourhood (periodic in theta)."""
    nl, nt = landscape.shape
    ii = np.clip(i, 1, nl - 2)
    rows = [ii - 1, ii, ii + 1]
    cols = [(j - 1) % nt, j, (j + 1) % nt]
    dl = lambdas[1] - lambdas[0]
    dt = thetas[1] - thetas[0]
    A, b = [], []
    for a, r in enumerate(rows):
        for c_, col in enumerate(cols):
            u, v = (a - 1) * dl, (c_ - 1) * dt
            A.append([1, u, v, u * u, u * v, v * v])
            b.append(landscape[r, col])
    c = np.linalg.lstsq(np.array(A), np.array(b), rcond=None)[0]
    H = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    try:
        if np.all(np.linalg.eigvalsh(H) > 0):
            step = -np.linalg.solve(H, c[1:3])
            if abs(step[0]) <= dl and abs(step[1]) <= dt:
                return lambdas[ii] + step[0], thetas[j] + step[1]
    except np.linalg.LinAlgError:
        pass
    return lambdas[i], thetas[j]


def counterexample_grid_search(cloud, n_lambda=50, n_theta=50, m=2000, seeds=(0, 1, 2, 3, 4),
                               weights=None):
    """Brute-force ``W2^2(mu, N(0, Sigma(lam, theta)))`` over a 2-D grid.

    ``lam_k = (k + 1/2) / n_lambda`` and ``theta_j = j pi / n_theta``.  Each
    seed fixes one standard-normal draw shared by all cells (common random
    numbers); each cell solves an exact OT problem against that draw mapped
    through ``Sigma^{1/2}`` and centered, warm-started from its neighbour.
    Values are averaged over seeds.  The minimizer is reported with
    ``lam >= 1/2`` since ``(lam, theta)`` and ``(1 - lam, theta + pi/2)``
    give the same covariance.
    """
    cloud = cloud if isinstance(cloud, SampleCloud) else center_and_norm(cloud)
    X = cloud.data
    if cloud.d != 2:
        raise InputError(f"grid search needs a 2-D cloud, got d = {cloud.d}")
    a = _check_weights(weights, cloud.n, "weights")
    b = np.full(m, 1.0 / m)
    lambdas = (np.arange(n_lambda) + 0.5) / n_lambda
    thetas = np.arange(n_theta) * np.pi / n_theta
    _, sigma_mm = moment_matching(cloud)
    w, _ = np.linalg.eigh(sigma_mm)
    lam_mm = float(w[-1] / w.sum())
    theta_mm = principal_angle(sigma_mm)

    def cost(xi, S, basis):
        wS, V = np.linalg.eigh(S)
        Y = xi @ (V * np.sqrt(np.clip(wS, 0.0, None))).T
        Y -= Y.mean(axis=0)
        c, _, nb = solve_transport(sq_cost_matrix(X, Y), a, b, basis=basis, return_basis=True)
        return c, nb

    per_seed = np.empty((len(seeds), n_lambda, n_theta))
    mm_vals = np.empty(len(seeds))
    for s, seed in enumerate(seeds):
        xi = np.random.default_rng(seed).standard_normal((m, 2))
        basis = None
        for i, lam in enumerate(lambdas):
            cols = range(n_theta) if i % 2 == 0 else range(n_theta - 1, -1, -1)
            for j in cols:
                per_seed[s, i, j], basis = cost(xi, sigma_lambda_theta(lam, thetas[j]), basis)
        mm_vals[s], _ = cost(xi, sigma_mm / np.trace(sigma_mm), basis)
        log.info("grid seed %s done", seed)
    land = per_seed.mean(axis=0)
    i, j = np.unravel_index(np.argmin(land), land.shape)
    lam_s, th_s = canonical(lambdas[i], thetas[j])
    lam_r, th_r = canonical(*_refine(land, lambdas, thetas, i, j))
    return GridSearchResult(
        lam_star=float(lam_s), theta_star=th_s, value_star=float(land[i, j]),
        lambdas=lambdas, thetas=thetas, landscape=land, per_seed=per_seed,
        lam_mm=lam_mm, theta_mm=theta_mm, value_mm=float(mm_vals.mean()),
        value_mm_per_seed=mm_vals, lam_refined=float(lam_r), theta_refined=th_r,
    )
