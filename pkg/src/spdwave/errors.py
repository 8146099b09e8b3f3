"""Exception hierarchy for spdwave."""

from __future__ import annotations

import numpy as np


class SpdwaveError(Exception):
    """Base class for all spdwave errors."""


class DimensionMismatchError(SpdwaveError, ValueError):
    """Matrices or vectors of incompatible size were combined."""


class NotSymmetricError(SpdwaveError, ValueError):
    """Input matrix is not symmetric or has non-finite entries."""


class NotPositiveDefiniteError(SpdwaveError, ValueError):
    """An eigenvalue of a supposedly SPD matrix is not strictly positive."""

    def __init__(self, eigenvalues: np.ndarray, message: str | None = None):
        self.eigenvalues = np.asarray(eigenvalues)
        lam_min = float(np.min(self.eigenvalues))
        super().__init__(
            message
            or f"Matrix is not positive definite (min eigenvalue {lam_min:.6g})"
        )


class EigenConvergenceError(SpdwaveError, ArithmeticError):
    """Jacobi sweeps did not reach the off-diagonal tolerance."""

    def __init__(self, matrix: np.ndarray, sweeps: int):
        self.matrix = np.array(matrix)
        self.sweeps = sweeps
        super().__init__(f"Jacobi eigensolver did not converge after {sweeps} sweeps")


class MatrixOverflowError(SpdwaveError, OverflowError):
    """Matrix exponential would exceed the floating point range."""


class ConvergenceError(SpdwaveError, ArithmeticError):
    """An iterative limit did not settle within its iteration cap."""


class SingularCovarianceError(SpdwaveError, ValueError):
    """Covariance matrix cannot be inverted."""


class DegenerateSetError(SpdwaveError, ValueError):
    """A confidence set has a zero-width bounding box."""
