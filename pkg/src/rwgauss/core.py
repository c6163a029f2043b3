"""Cone geometry of the translation-quotient W2 space.

Points are centered empirical measures; the apex is the class of Dirac
masses.  Distances, angles and projections are computed from side lengths
through the law of cosines, which is exact on the flat two-ray filling cone.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CoefficientError, DegenerateRayError, GeometryError, InputError

TRIANGLE_TOL = 1e-9


@dataclass(frozen=True)
class SampleCloud:
    """Centered sample matrix together with its mean and RW2 norm.

    ``data`` holds the centered samples (one per row); ``mean`` the removed
    translation; ``rw2_norm`` the distance to the apex,
    ``sqrt(mean_i ||x_i - mean||^2)``.
    """

    data: np.ndarray
    mean: np.ndarray
    rw2_norm: float

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def normalized(self):
        """Return the cloud rescaled to unit RW2 norm (mean unchanged)."""
        if self.rw2_norm == 0.0:
            raise DegenerateRayError("cannot normalize a cloud at the apex")
        return SampleCloud(self.data / self.rw2_norm, self.mean, 1.0)


@dataclass(frozen=True)
class SideTriple:
    """Side lengths of the apex triangle: |mu|, |nu| and RW2(mu, nu)."""

    a: float
    b: float
    c: float


@dataclass(frozen=True)
class ConeCoefficients:
    """Constant metric coefficients of a two-ray filling cone.

    With ``T`` the optimal map from ``mu``: ``A = E||x||^2``,
    ``B = E<x, T(x)>`` and ``C = E||T(x)||^2``.
    """

    A: float
    B: float
    C: float

    @classmethod
    def from_map(cls, x, tx):
        """Empirical coefficients from paired samples ``x`` and ``T(x)``."""
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        tx = np.asarray(tx, dtype=float).reshape(len(tx), -1)
        return cls(
            float(np.mean(np.sum(x * x, axis=1))),
            float(np.mean(np.sum(x * tx, axis=1))),
            float(np.mean(np.sum(tx * tx, axis=1))),
        )


def as_matrix(samples):
    """Coerce ``samples`` to a finite 2-D float array with one sample per row."""
    arr = np.array(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"expected a non-empty n x d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("samples contain non-finite entries")
    return arr


def center_and_norm(samples):
    """Center a sample matrix and record its mean and RW2 norm.

    Parameters
    ----------
    samples : array_like, shape (n, d) or (n,)
        Samples, one per row.  The input is never modified.

    Returns
    -------
    SampleCloud
    """
    arr = as_matrix(samples)
    mean = arr.mean(axis=0)
    centered = arr - mean
    # second pass removes the O(eps * |mean|) residue of the first
    centered -= centered.mean(axis=0)
    norm = float(np.sqrt(np.mean(np.sum(centered * centered, axis=1))))
    return SampleCloud(centered, mean, norm)


def w2_decompose(mean_gap, rw2):
    """Full W2 distance from the mean gap and the translation-free part."""
    if rw2 < 0:
        raise InputError("rw2 must be nonnegative")
    gap = np.atleast_1d(np.asarray(mean_gap, dtype=float))
    return float(np.sqrt(gap @ gap + rw2 * rw2))


def _check_triangle(a, b, c, tol):
    scale = max(a, b, c, 1.0)
    if c < abs(a - b) - tol * scale or c > a + b + tol * scale:
        raise GeometryError(
            f"sides ({a!r}, {b!r}, {c!r}) violate the triangle inequality"
        )


def angle_from_sides(t, tol=TRIANGLE_TOL):
    """Angle at the apex of the triangle with sides ``(a, b, c)``.

    ``tol=None`` skips the feasibility check; this is meant for Monte-Carlo
    side estimates, where the clamped cosine absorbs small violations.
    """
    a, b, c = float(t.a), float(t.b), float(t.c)
    if min(a, b, c) < 0:
        raise GeometryError("side lengths must be nonnegative")
    if a == 0.0 or b == 0.0:
        raise DegenerateRayError("angle undefined at the apex (zero-length side)")
    if tol is not None:
        _check_triangle(a, b, c, tol)
    cos = (a * a + b * b - c * c) / (2.0 * a * b)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def projection_distance(norm, theta):
    """Distance from a point to the full line through a ray: ``norm sin(theta)``."""
    return float(norm * np.sin(theta))


def ray_distance(norm, theta):
    """Distance from a point to a closed ray; the apex is nearest when obtuse."""
    if theta >= np.pi / 2:
        return float(norm)
    return float(norm * np.sin(theta))


def inner_product(norm_a, norm_b, theta):
    return float(norm_a * norm_b * np.cos(theta))


def moment_matching(cloud):
    """Mean and (1/n)-normalized covariance of a cloud.

    The 1/n normalization makes ``trace(cov) == rw2_norm**2``.
    """
    x = cloud.data
    cov = (x.T @ x) / x.shape[0]
    cov = 0.5 * (cov + cov.T)
    return cloud.mean.copy(), cov


def filling_cone_distance(coef, p1, p2):
    """Distance between two filling-cone points in affine ``(a, b)`` coordinates."""
    da = float(p1[0]) - float(p2[0])
    db = float(p1[1]) - float(p2[1])
    sq = da * da * coef.A + 2.0 * da * db * coef.B + db * db * coef.C
    if sq < -1e-12:
        raise CoefficientError(f"negative squared distance {sq!r}")
    return float(np.sqrt(max(sq, 0.0)))
