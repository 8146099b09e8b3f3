"""Covariance model, confidence sets and their Monte Carlo volumes.

All sets live in log coordinates: under the eta isometry a point S maps to
eta(log S) in R^q, q = d(d+1)/2, and both set families are closed balls or
ellipsoids there.  Volumes are measured in the cone coordinates
(x, y, z) = (S_11, S_22, S_12) of Sym+(2), where the sets are curved.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel
from scipy import special

from spdwave.config import settings
from spdwave.curves import NoiseSpec
from spdwave.errors import (
    DegenerateSetError,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    SingularCovarianceError,
)
from spdwave.refinement import kappa
from spdwave.rng import RngStream
from spdwave.spd import (
    MatrixRecord,
    SpdMat,
    SymMat,
    dim_from_eta,
    eta_inv_stack,
    eta_layout,
    eta_stack,
    exp_stack,
    log_stack,
    sym_eigen_stack,
)

logger = logging.getLogger(__name__)

ELLIPSOID_SLACK = 1e-12  # relative, on the quadratic form
BALL_SLACK = 1e-10  # absolute, on the distance
MESH_POINTS = 2000
SINGULAR_RTOL = 1e-12


# ── Chi-square quantile ────────────────────────────────────────────────────


def chi2_quantile(dof: int, p: float, tol: float = 1e-12) -> float:
    """p-quantile of the chi-square distribution with dof degrees of freedom.

    Starts from scipy's inverse regularized gamma and polishes with Newton
    steps on the regularized lower incomplete gamma, falling back to
    bisection whenever a step leaves the bracket.
    """
    if dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    a = dof / 2.0
    x = 2.0 * float(special.gammaincinv(a, p))
    lo, hi = 0.0, max(2.0 * x, 1.0)
    while special.gammainc(a, hi / 2.0) < p:
        hi *= 2.0
    log_norm = a * math.log(2.0) + special.gammaln(a)
    for _ in range(100):
        f = float(special.gammainc(a, x / 2.0)) - p
        if abs(f) <= tol * p:
            break
        if f > 0:
            hi = x
        else:
            lo = x
        density = 0.0
        if x > 0:
            density = math.exp((a - 1.0) * math.log(x) - x / 2.0 - log_norm)
        step = x - f / density if density > 0 else -1.0
        x = step if lo < step < hi else 0.5 * (lo + hi)
    return x


# ── Covariance operator ────────────────────────────────────────────────────


def _sym_eigen(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return sym_eigen_stack(0.5 * (m + m.T))


@dataclass(frozen=True, eq=False)
class CovTensor:
    """Covariance operator C of the log-noise.

    Stored as its q x q matrix C~ = eta C eta^-1, which is the covariance of
    eta(xi).  The four-index coefficients sigma_ijnm = Cov(xi_ij, xi_nm) are
    derived from it.
    """

    eta_matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.eta_matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(
                f"Expected a square matrix, got shape {m.shape}"
            )
        dim_from_eta(m.shape[0])
        if not np.all(np.isfinite(m)):
            raise ValueError("Covariance matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("Covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        lam, _ = _sym_eigen(m)
        if lam[-1] < -SINGULAR_RTOL * max(1.0, float(lam[0])):
            raise NotPositiveDefiniteError(
                lam, "Covariance matrix has a negative eigenvalue"
            )
        m.setflags(write=False)
        object.__setattr__(self, "eta_matrix", m)

    @classmethod
    def from_eta_matrix(
        cls, matrix: np.ndarray | Sequence[Sequence[float]]
    ) -> CovTensor:
        return cls(np.asarray(matrix, dtype=np.float64))

    @classmethod
    def from_noise(cls, noise: NoiseSpec) -> CovTensor:
        """diag(sigma_11^2, sigma_22^2, 2 sigma_12^2) for independent entries."""
        s = noise.scales
        return cls(np.diag([s[0] ** 2, s[1] ** 2, 2.0 * s[2] ** 2]))

    @classmethod
    def from_coefficients(cls, sigma: np.ndarray) -> CovTensor:
        """Build from sigma_ijnm, shape (d, d, d, d).

        Raises:
            ValueError: If the coefficients lack the symmetries
                sigma_ijnm = sigma_jinm = sigma_ijmn = sigma_nmij.
        """
        s = np.asarray(sigma, dtype=np.float64)
        d = s.shape[0]
        if s.shape != (d, d, d, d):
            raise DimensionMismatchError(f"Expected shape (d, d, d, d), got {s.shape}")
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if not np.allclose(s, s.transpose(perm), atol=1e-14, rtol=0.0):
                raise ValueError(f"Coefficients are not symmetric under axes {perm}")
        rows, cols, w = eta_layout(d)
        picked = s[rows[:, None], cols[:, None], rows[None, :], cols[None, :]]
        return cls(picked * np.outer(w, w))

    @property
    def dim(self) -> int:
        return dim_from_eta(self.eta_matrix.shape[0])

    @property
    def q(self) -> int:
        return self.eta_matrix.shape[0]

    @property
    def coefficients(self) -> np.ndarray:
        """sigma_ijnm with all index symmetries filled in."""
        d = self.dim
        rows, cols, w = eta_layout(d)
        vals = self.eta_matrix / np.outer(w, w)
        out = np.zeros((d, d, d, d))
        for a in range(self.q):
            for b in range(self.q):
                i, j, n, m = rows[a], cols[a], rows[b], cols[b]
                for ii, jj in ((i, j), (j, i)):
                    for nn, mm in ((n, m), (m, n)):
                        out[ii, jj, nn, mm] = vals[a, b]
        return out

    def variance(self, a: SymMat) -> float:
        """Var <xi, A>_F = eta(A)^T C~ eta(A)."""
        if a.dim != self.dim:
            raise DimensionMismatchError(
                f"Matrix dim {a.dim} does not match covariance dim {self.dim}"
            )
        v = eta_stack(a.entries)
        return float(v @ self.eta_matrix @ v)

    def sqrt(self) -> np.ndarray:
        """Symmetric square root of C~."""
        lam, vecs = _sym_eigen(self.eta_matrix)
        return (vecs * np.sqrt(np.clip(lam, 0.0, None))) @ vecs.T

    def inverse(self) -> np.ndarray:
        """C~^-1.

        Raises:
            SingularCovarianceError: If C~ is (numerically) singular.
        """
        lam, vecs = _sym_eigen(self.eta_matrix)
        if lam[-1] <= SINGULAR_RTOL * max(float(lam[0]), 0.0):
            shown = np.array2string(lam, precision=3)
            raise SingularCovarianceError(
                f"Covariance is singular (eigenvalues {shown})"
            )
        return (vecs / lam) @ vecs.T


def empirical_covariance_eta(samples: Sequence[SymMat] | np.ndarray) -> np.ndarray:
    """Unbiased sample covariance (divisor n-1) of eta-vectorised samples."""
    stack = (
        np.asarray(samples, dtype=np.float64)
        if isinstance(samples, np.ndarray)
        else np.stack([s.entries for s in samples])
    )
    if stack.shape[0] < 2:
        raise ValueError(f"Need at least 2 samples, got {stack.shape[0]}")
    return np.atleast_2d(np.cov(eta_stack(stack), rowvar=False, ddof=1))


def sample_log_normal(
    center: SpdMat, cov: CovTensor, rng: np.random.Generator, n: int
) -> np.ndarray:
    """n draws exp(log S + eta^-1(C~^(1/2) Z)), Z standard normal; shape (n, d, d)."""
    if cov.dim != center.dim:
        raise DimensionMismatchError(
            f"Covariance dim {cov.dim} does not match center dim {center.dim}"
        )
    z = rng.standard_normal((n, cov.q)) @ cov.sqrt()
    return exp_stack(log_stack(center.entries) + eta_inv_stack(z))


# ── Confidence sets ────────────────────────────────────────────────────────


class ConfidenceSetRecord(BaseModel):
    """JSON form of a confidence set."""

    kind: Literal["asym", "boot"]
    center: MatrixRecord
    level: float | None = None
    radius: float | None = None
    radius_sq: float | None = None
    metric_matrix: list[list[float]] | None = None


@dataclass(frozen=True, eq=False)
class EllipsoidCS:
    """Asymptotic set {S : (e - eta log S)^T M (e - eta log S) <= radius_sq}.

    ``metric_matrix`` is M = 2^(J-J0) kappa_N^-1 C~^-1 and e = eta(log center).
    """

    center: SpdMat
    metric_matrix: np.ndarray
    radius_sq: float
    level: float
    J: int
    J0: int
    N: int

    @property
    def scale(self) -> float:
        return 2.0 ** (self.J - self.J0) / kappa(self.N)

    @property
    def center_eta(self) -> np.ndarray:
        return eta_stack(log_stack(self.center.entries))

    def statistic_eta(self, points_eta: np.ndarray) -> np.ndarray:
        diff = np.asarray(points_eta) - self.center_eta
        return np.einsum("...i,ij,...j->...", diff, self.metric_matrix, diff)

    def contains_eta(self, points_eta: np.ndarray) -> np.ndarray:
        bound = self.radius_sq * (1.0 + ELLIPSOID_SLACK)
        return self.statistic_eta(points_eta) <= bound

    def boundary_eta(self, unit: np.ndarray) -> np.ndarray:
        """Map unit vectors onto the ellipsoid surface."""
        lam, vecs = _sym_eigen(self.metric_matrix)
        half = (vecs / np.sqrt(lam)) @ vecs.T
        return self.center_eta + math.sqrt(self.radius_sq) * unit @ half

    def to_record(self) -> ConfidenceSetRecord:
        return ConfidenceSetRecord(
            kind="asym",
            center=self.center.to_record(),
            level=self.level,
            radius_sq=self.radius_sq,
            metric_matrix=self.metric_matrix.tolist(),
        )


@dataclass(frozen=True, eq=False)
class BallCS:
    """Closed log-Euclidean ball around ``center``."""

    center: SpdMat
    radius: float
    level: float | None = None

    def __post_init__(self) -> None:
        if not self.radius >= 0:
            raise ValueError(f"Radius must be non-negative, got {self.radius}")

    @property
    def center_eta(self) -> np.ndarray:
        return eta_stack(log_stack(self.center.entries))

    def contains_eta(self, points_eta: np.ndarray) -> np.ndarray:
        dist = np.linalg.norm(np.asarray(points_eta) - self.center_eta, axis=-1)
        return dist <= self.radius + BALL_SLACK

    def boundary_eta(self, unit: np.ndarray) -> np.ndarray:
        return self.center_eta + self.radius * unit

    def to_record(self) -> ConfidenceSetRecord:
        return ConfidenceSetRecord(
            kind="boot",
            center=self.center.to_record(),
            level=self.level,
            radius=self.radius,
        )


ConfidenceSet = EllipsoidCS | BallCS


def asymptotic_scale(J: int, J0: int, N: int) -> float:
    """2^(J-J0) / kappa_N, the factor in front of the quadratic form."""
    if not 0 <= J0 <= J:
        raise ValueError(f"J0 must be in 0..{J}, got {J0}")
    return 2.0 ** (J - J0) / kappa(N)


def asymptotic_cs(
    estimate: SpdMat, cov: CovTensor, J: int, J0: int, N: int, level: float
) -> EllipsoidCS:
    """Asymptotic confidence ellipsoid around a wavelet estimate.

    Args:
        estimate: The estimate M_hat at the point of interest.
        cov: Noise covariance (the true one in simulations).
        J: Finest scale.
        J0: Smoothing scale of the estimator.
        N: Refinement order.
        level: Confidence level, e.g. 0.9.

    Raises:
        SingularCovarianceError: If C~ cannot be inverted.
    """
    if cov.dim != estimate.dim:
        raise DimensionMismatchError(
            f"Covariance dim {cov.dim} does not match estimate dim {estimate.dim}"
        )
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    metric = asymptotic_scale(J, J0, N) * cov.inverse()
    metric.setflags(write=False)
    return EllipsoidCS(
        center=estimate,
        metric_matrix=metric,
        radius_sq=chi2_quantile(cov.q, level),
        level=level,
        J=J,
        J0=J0,
        N=N,
    )


def ellipsoid_statistics(
    estimate_log: np.ndarray,
    target_log: np.ndarray,
    cov: CovTensor,
    J: int,
    J0: int,
    N: int,
) -> np.ndarray:
    """Quadratic forms of many (estimate, target) pairs at once.

    Both inputs have shape (..., d, d) in the log domain.
    """
    diff = eta_stack(estimate_log) - eta_stack(target_log)
    metric = asymptotic_scale(J, J0, N) * cov.inverse()
    return np.einsum("...i,ij,...j->...", diff, metric, diff)


def cs_contains(cs: ConfidenceSet, s: SpdMat) -> bool:
    """Closed-set membership."""
    if s.dim != cs.center.dim:
        raise DimensionMismatchError(
            f"Matrix dim {s.dim} does not match set dim {cs.center.dim}"
        )
    return bool(cs.contains_eta(eta_stack(log_stack(s.entries))))


# ── Monte Carlo volumes ────────────────────────────────────────────────────


def fibonacci_sphere(n: int) -> np.ndarray:
    """n nearly uniform unit vectors in R^3."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z**2)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _cone_coords(stack: np.ndarray) -> np.ndarray:
    return np.stack([stack[..., 0, 0], stack[..., 1, 1], stack[..., 0, 1]], axis=-1)


def bounding_box(
    cs: ConfidenceSet, inflation: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned (x, y, z) box around the exp-image of the set."""
    if inflation is None:
        inflation = settings.volume_inflation
    if cs.center.dim != 2:
        raise DimensionMismatchError(
            f"Volumes are defined for 2x2 matrices, got dim={cs.center.dim}"
        )
    pts = _cone_coords(
        exp_stack(eta_inv_stack(cs.boundary_eta(fibonacci_sphere(MESH_POINTS))))
    )
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    width = hi - lo
    if np.any(width <= 0):
        raise DegenerateSetError(f"Bounding box has zero width: lo={lo}, hi={hi}")
    lo, hi = lo - inflation * width, hi + inflation * width
    logger.debug("Volume box lo=%s hi=%s", lo, hi)
    return lo, hi


def cs_volume_mc(
    cs: ConfidenceSet,
    rng: np.random.Generator,
    n_samples: int,
    inflation: float | None = None,
) -> tuple[float, float]:
    """Lebesgue volume of the set in (x, y, z) cone coordinates.

    Samples the bounding box uniformly and counts members.

    Returns:
        (volume, standard error).

    Raises:
        DegenerateSetError: If the set has an empty interior.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    lo, hi = bounding_box(cs, inflation)
    pts = lo + (hi - lo) * rng.random((n_samples, 3))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    spd = (x > 0) & (x * y > z * z)
    hits = 0
    if np.any(spd):
        p = pts[spd]
        mats = np.empty((p.shape[0], 2, 2))
        mats[:, 0, 0], mats[:, 1, 1] = p[:, 0], p[:, 1]
        mats[:, 0, 1] = mats[:, 1, 0] = p[:, 2]
        hits = int(np.count_nonzero(cs.contains_eta(eta_stack(log_stack(mats)))))
    box = float(np.prod(hi - lo))
    frac = hits / n_samples
    return box * frac, box * math.sqrt(frac * (1.0 - frac) / n_samples)


def unit_ball_volume(
    center: SpdMat, rng: np.random.Generator, n_samples: int
) -> tuple[float, float]:
    """Volume of the exp-image of the unit eta-ball at ``center``."""
    return cs_volume_mc(BallCS(center=center, radius=1.0), rng, n_samples)


def scaled_volume(
    cs: ConfidenceSet, stream: RngStream, n_samples: int, unit: float | None = None
) -> float:
    """Volume of the set divided by the unit-ball volume at the same center.

    Without ``unit`` both estimates use the same substream, so the unit ball
    scales to 1. A ball of radius zero has volume 0.
    """
    if isinstance(cs, BallCS) and cs.radius == 0.0:
        return 0.0
    vol, _ = cs_volume_mc(cs, stream.generator(), n_samples)
    if unit is None:
        unit, _ = unit_ball_volume(cs.center, stream.generator(), n_samples)
    return vol / unit
