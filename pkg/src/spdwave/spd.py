"""Log-Euclidean geometry on symmetric positive-definite matrices.

Everything here is built on one primitive, a cyclic Jacobi eigensolver that
works on whole stacks of matrices at once (arrays of shape ``(..., d, d)``).
Matrix log/exp, distances, geodesics and weighted means are thin layers on
top of it.  The ``SymMat``/``SpdMat`` value types wrap single matrices for
the public API; the batched ``*_stack`` helpers are what the wavelet code
uses internally.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cache

import numpy as np
from pydantic import BaseModel, model_validator

from spdwave.config import settings
from spdwave.errors import (
    DimensionMismatchError,
    EigenConvergenceError,
    MatrixOverflowError,
    NotPositiveDefiniteError,
    NotSymmetricError,
)

logger = logging.getLogger(__name__)

# Largest eigenvalue whose exponential is still a finite double.
EXP_LIMIT = math.log(np.finfo(np.float64).max)

WEIGHT_SUM_TOL = 1e-12


class MatrixRecord(BaseModel):
    """JSON form of a symmetric matrix: dimension plus row-major upper triangle."""

    dim: int
    upper: list[float]

    @model_validator(mode="after")
    def _check_length(self) -> MatrixRecord:
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        expected = self.dim * (self.dim + 1) // 2
        if len(self.upper) != expected:
            raise ValueError(
                f"upper has {len(self.upper)} entries, expected {expected} "
                f"for dim={self.dim}"
            )
        return self


# ── Value types ────────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class SymMat:
    """Immutable real symmetric matrix (an element of Sym(d)).

    Construction copies the upper triangle into the lower one, so stored
    entries are exactly symmetric.  Inputs that are not symmetric to within
    rounding are rejected.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionMismatchError(
                f"Expected a square matrix, got shape {a.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise NotSymmetricError("Matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise NotSymmetricError("Matrix is not symmetric")
        a = np.triu(a) + np.triu(a, 1).T
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def upper(self) -> np.ndarray:
        """Row-major upper triangle including the diagonal."""
        return self.entries[np.triu_indices(self.dim)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymMat):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.upper, other.upper))

    def __hash__(self) -> int:
        return hash((self.dim, self.upper.tobytes()))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.entries.tolist()})"

    def allclose(self, other: SymMat | np.ndarray, tol: float = 1e-10) -> bool:
        """Frobenius-norm comparison, relative to max(1, ||self||_F)."""
        b = other.entries if isinstance(other, SymMat) else np.asarray(other)
        scale = max(1.0, float(np.linalg.norm(self.entries)))
        return float(np.linalg.norm(self.entries - b)) <= tol * scale

    def to_record(self) -> MatrixRecord:
        return MatrixRecord(dim=self.dim, upper=self.upper.tolist())

    @classmethod
    def from_record(cls, record: MatrixRecord | dict) -> SymMat:
        rec = MatrixRecord.model_validate(record)
        a = np.zeros((rec.dim, rec.dim))
        a[np.triu_indices(rec.dim)] = rec.upper
        return cls(a + np.triu(a, 1).T)


@dataclass(frozen=True, eq=False, repr=False)
class SpdMat(SymMat):
    """Immutable symmetric positive-definite matrix (an element of Sym+(d)).

    Positivity is checked with no slack: every eigenvalue returned by the
    eigensolver must be strictly greater than zero.
    """

    def __post_init__(self) -> None:
        super().__post_init__()
        lam, _ = sym_eigen_stack(self.entries)
        if lam[-1] <= 0:
            raise NotPositiveDefiniteError(lam)


# ── Eigendecomposition ─────────────────────────────────────────────────────


def sym_eigen_stack(
    stack: np.ndarray,
    max_sweeps: int | None = None,
    tol: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a stack of symmetric matrices.

    Args:
        stack: Array of shape (..., d, d).
        max_sweeps: Sweep cap (defaults to settings.jacobi_max_sweeps).
        tol: Off-diagonal Frobenius tolerance relative to ||S||_F
            (defaults to settings.jacobi_tol).

    Returns:
        (eigenvalues, eigenvectors) with shapes (..., d) and (..., d, d).
        Eigenvalues are sorted in descending order; column i of the
        eigenvector matrix belongs to eigenvalue i.

    Raises:
        EigenConvergenceError: If any matrix misses the tolerance after
            max_sweeps sweeps.  The error carries the offending input.
    """
    max_sweeps = settings.jacobi_max_sweeps if max_sweeps is None else max_sweeps
    tol = settings.jacobi_tol if tol is None else tol

    a = np.array(stack, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatchError(f"Expected (..., d, d) stack, got shape {a.shape}")
    batch_shape = a.shape[:-2]
    d = a.shape[-1]
    a = a.reshape(-1, d, d)
    n = a.shape[0]
    v = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    threshold = tol * np.linalg.norm(a, axis=(1, 2))

    sweeps = 0
    while True:
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2, axis=(1, 2)))
        if np.all(off <= threshold):
            break
        if sweeps >= max_sweeps:
            bad = int(np.argmax(off - threshold))
            raise EigenConvergenceError(
                np.asarray(stack).reshape(-1, d, d)[bad], sweeps
            )
        for p in range(d - 1):
            for q in range(p + 1, d):
                _rotate(a, v, p, q)
        sweeps += 1

    logger.debug("Jacobi converged in %d sweeps for %d matrices", sweeps, n)

    lam = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(-lam, axis=1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return lam.reshape(*batch_shape, d), v.reshape(*batch_shape, d, d)


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Apply one Jacobi rotation zeroing a[:, p, q] in place."""
    apq = a[:, p, q]
    active = apq != 0.0
    if not np.any(active):
        return
    safe = np.where(active, apq, 1.0)
    with np.errstate(over="ignore"):
        theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
        sign = np.where(theta >= 0.0, 1.0, -1.0)
        t = sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(active & np.isfinite(t), t, 0.0)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    g = np.broadcast_to(np.eye(a.shape[1]), a.shape).copy()
    g[:, p, p] = c
    g[:, q, q] = c
    g[:, p, q] = s
    g[:, q, p] = -s
    a[:] = np.swapaxes(g, 1, 2) @ a @ g
    a[:, p, q] = 0.0
    a[:, q, p] = 0.0
    v[:] = v @ g


def _as_array(m: SymMat | np.ndarray) -> np.ndarray:
    return m.entries if isinstance(m, SymMat) else np.asarray(m, dtype=np.float64)


def _rebuild(lam: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    out = (vecs * lam[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def sym_eigen(s: SymMat | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthogonal eigenvectors of one symmetric matrix."""
    return sym_eigen_stack(_as_array(s))


# ── Matrix log / exp ───────────────────────────────────────────────────────


def log_stack(stack: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm of a stack of SPD matrices."""
    lam, vecs = sym_eigen_stack(stack)
    if np.any(lam[..., -1] <= 0):
        raise NotPositiveDefiniteError(lam[..., -1])
    return _rebuild(np.log(lam), vecs)


def exp_stack(stack: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack of symmetric matrices."""
    lam, vecs = sym_eigen_stack(stack)
    if np.any(lam[..., 0] > EXP_LIMIT):
        raise MatrixOverflowError(
            f"Eigenvalue {float(np.max(lam[..., 0])):.6g} exceeds exp range"
        )
    return _rebuild(np.exp(lam), vecs)


def mat_log(s: SpdMat) -> SymMat:
    """Principal logarithm of an SPD matrix."""
    return SymMat(log_stack(_as_array(s)))


def mat_exp(a: SymMat) -> SpdMat:
    """Matrix exponential of a symmetric matrix."""
    return SpdMat(exp_stack(_as_array(a)))


# ── Metric, geodesics and means ────────────────────────────────────────────


def _check_same_dim(*mats: SymMat) -> None:
    dims = {m.dim for m in mats}
    if len(dims) > 1:
        raise DimensionMismatchError(
            f"Matrices have different dimensions: {sorted(dims)}"
        )


def le_distance(s1: SpdMat, s2: SpdMat) -> float:
    """Log-Euclidean distance ||log S2 - log S1||_F."""
    _check_same_dim(s1, s2)
    return float(np.linalg.norm(log_stack(s2.entries) - log_stack(s1.entries)))


def weighted_ave(matrices: Sequence[SpdMat], weights: Sequence[float]) -> SpdMat:
    """Weighted log-Euclidean average exp(sum_i w_i log S_i).

    Weights may be negative (the refinement scheme extrapolates) but must
    sum to one.
    """
    if len(matrices) == 0:
        raise ValueError("weighted_ave needs at least one matrix")
    if len(weights) != len(matrices):
        raise ValueError(f"Got {len(matrices)} matrices but {len(weights)} weights")
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("Weights must be finite")
    if abs(float(w.sum()) - 1.0) >= WEIGHT_SUM_TOL:
        raise ValueError(f"Weights must sum to 1, got {float(w.sum())!r}")
    _check_same_dim(*matrices)
    logs = log_stack(np.stack([m.entries for m in matrices]))
    return SpdMat(exp_stack(np.einsum("i,ijk->jk", w, logs)))


def frechet_mean(matrices: Sequence[SpdMat]) -> SpdMat:
    """Unweighted log-Euclidean Frechet mean."""
    if len(matrices) == 0:
        raise ValueError("frechet_mean needs at least one matrix")
    n = len(matrices)
    return weighted_ave(matrices, [1.0 / n] * n)


def geodesic(t: float, s1: SpdMat, s2: SpdMat) -> SpdMat:
    """Point at time t on the geodesic through S1 (t=0) and S2 (t=1).

    Any real t is allowed; values outside [0, 1] extrapolate.
    """
    _check_same_dim(s1, s2)
    return weighted_ave([s1, s2], [1.0 - t, t])


# ── eta isometry ───────────────────────────────────────────────────────────


@cache
def eta_layout(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = list(range(d))
    cols = list(range(d))
    for i in range(d):
        for j in range(i + 1, d):
            rows.append(i)
            cols.append(j)
    weights = np.where(np.array(rows) == np.array(cols), 1.0, math.sqrt(2.0))
    return np.array(rows), np.array(cols), weights


def eta_dim(d: int) -> int:
    return d * (d + 1) // 2


def dim_from_eta(q: int) -> int:
    """Recover d from q = d(d+1)/2, raising ValueError if q has no such form."""
    d = int(round((math.sqrt(8 * q + 1) - 1) / 2))
    if d < 1 or eta_dim(d) != q:
        raise ValueError(f"Length {q} is not of the form d(d+1)/2")
    return d


def eta_stack(stack: np.ndarray) -> np.ndarray:
    """eta-vectorise a stack (..., d, d) into (..., q)."""
    a = np.asarray(stack, dtype=np.float64)
    rows, cols, weights = eta_layout(a.shape[-1])
    return a[..., rows, cols] * weights


def eta_inv_stack(vecs: np.ndarray) -> np.ndarray:
    """Inverse of eta_stack: (..., q) back to symmetric (..., d, d)."""
    x = np.asarray(vecs, dtype=np.float64)
    d = dim_from_eta(x.shape[-1])
    rows, cols, weights = eta_layout(d)
    out = np.zeros((*x.shape[:-1], d, d))
    vals = x / weights
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


def eta_vec(a: SymMat) -> np.ndarray:
    """(A_11, ..., A_dd, sqrt2*A_12, ..., sqrt2*A_{d-1,d})."""
    return eta_stack(a.entries)


def eta_inv(x: Sequence[float] | np.ndarray) -> SymMat:
    return SymMat(eta_inv_stack(np.asarray(x, dtype=np.float64)))
