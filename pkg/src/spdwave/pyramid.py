"""Midpoint pyramid and the intrinsic AI wavelet transform.

The forward transform coarsens by geodesic midpoints and stores, per scale,
the whitened difference between each odd child and its AI prediction.  The
backward transform re-predicts and adds the differences back.  Because both
steps are linear in matrix logarithms, the engine (the ``*_log`` functions)
works on log-domain arrays of shape (2^J, ...) where the trailing axes can
hold a matrix, or a stack of replicates and a matrix.

Boundary windows use half-sample reflection (see
``refinement.reflect_indices``) in both directions, so the transform stays
exactly invertible at the edges.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from spdwave.refinement import RefinementOrder, predict_level
from spdwave.spd import SpdMat, SymMat, exp_stack, log_stack


def _scale_count(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"Sequence length must be a power of two, got {n}")
    return n.bit_length() - 1


def _spd_stack(finest: Sequence[SpdMat] | np.ndarray) -> np.ndarray:
    if isinstance(finest, np.ndarray):
        return finest.astype(np.float64)
    return np.stack([m.entries for m in finest])


def _to_spd_list(stack: np.ndarray) -> list[SpdMat]:
    return [SpdMat(m) for m in stack]


# ── Midpoint pyramid ───────────────────────────────────────────────────────


def coarsen_log(level: np.ndarray) -> np.ndarray:
    """Geodesic midpoints of consecutive pairs, in the log domain."""
    return 0.5 * (level[0::2] + level[1::2])


def midpoint_levels_log(finest_log: np.ndarray) -> list[np.ndarray]:
    """All pyramid levels j = 0..J from the finest log-midpoints."""
    J = _scale_count(finest_log.shape[0])
    levels = [finest_log]
    for _ in range(J):
        levels.append(coarsen_log(levels[-1]))
    return levels[::-1]


@dataclass(frozen=True, eq=False)
class MidpointPyramid:
    """Midpoints M_{j,k} for j = 0..J, kept in the log domain."""

    J: int
    log_levels: tuple[np.ndarray, ...]

    @cached_property
    def levels(self) -> tuple[tuple[SpdMat, ...], ...]:
        return tuple(tuple(_to_spd_list(exp_stack(lv))) for lv in self.log_levels)

    def level(self, j: int) -> list[SpdMat]:
        return list(self.levels[j])


def build_pyramid(finest: Sequence[SpdMat] | np.ndarray) -> MidpointPyramid:
    """Midpoint pyramid of 2^J SPD matrices."""
    stack = _spd_stack(finest)
    J = _scale_count(stack.shape[0])
    return MidpointPyramid(J=J, log_levels=tuple(midpoint_levels_log(log_stack(stack))))


# ── Wavelet transform ──────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class WaveletPyramid:
    """Coarsest midpoint plus whitened wavelet coefficients.

    ``coeffs[j - 1]`` holds the 2^(j-1) coefficients of scale j, i.e. those
    paired with the prediction from level j-1 to level j.
    """

    J: int
    coarsest_log: np.ndarray
    coeffs: tuple[np.ndarray, ...]
    order: RefinementOrder

    def __post_init__(self) -> None:
        if len(self.coeffs) != self.J:
            raise ValueError(
                f"Expected {self.J} coefficient scales, got {len(self.coeffs)}"
            )
        tail = self.coarsest_log.shape
        for j, c in enumerate(self.coeffs, start=1):
            if c.shape != (2 ** (j - 1), *tail):
                raise ValueError(
                    f"Scale {j} coefficients have shape {c.shape}, "
                    f"expected {(2 ** (j - 1), *tail)}"
                )

    @property
    def coarsest(self) -> SpdMat:
        return SpdMat(exp_stack(self.coarsest_log))

    def scale(self, j: int) -> list[SymMat]:
        """Whitened coefficients D_{j,k}, k = 0..2^(j-1)-1."""
        if not 1 <= j <= self.J:
            raise ValueError(f"Scale must be in 1..{self.J}, got {j}")
        return [SymMat(c) for c in self.coeffs[j - 1]]

    def energy(self) -> float:
        """Sum of squared Frobenius norms over all coefficients."""
        return float(sum(np.sum(c**2) for c in self.coeffs))

    def truncated(self, J0: int) -> WaveletPyramid:
        """Copy with every scale above J0 set to zero."""
        coeffs = tuple(
            c if j <= J0 else np.zeros_like(c) for j, c in enumerate(self.coeffs, 1)
        )
        return WaveletPyramid(
            J=self.J, coarsest_log=self.coarsest_log, coeffs=coeffs, order=self.order
        )


def forward_transform_log(
    finest_log: np.ndarray, order: RefinementOrder
) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Forward transform on log-midpoints: (coarsest, per-scale coefficients)."""
    levels = midpoint_levels_log(finest_log)
    coeffs = []
    for j in range(1, len(levels)):
        _, odd_pred = predict_level(levels[j - 1], order)
        coeffs.append(2.0 ** (-j / 2) * (levels[j][1::2] - odd_pred))
    return levels[0][0], tuple(coeffs)


def refine_log(
    coarse: np.ndarray,
    order: RefinementOrder,
    coeffs: np.ndarray | None = None,
    j: int = 1,
) -> np.ndarray:
    """One backward step from level j-1 to level j.

    Without coefficients this is pure AI refinement.
    """
    _, odd = predict_level(coarse, order)
    if coeffs is not None:
        odd = odd + 2.0 ** (j / 2) * coeffs
    even = 2.0 * coarse - odd
    fine = np.empty((2 * coarse.shape[0], *coarse.shape[1:]))
    fine[0::2] = even
    fine[1::2] = odd
    return fine


def backward_transform_log(
    coarsest_log: np.ndarray, coeffs: Sequence[np.ndarray], order: RefinementOrder
) -> np.ndarray:
    """Inverse of forward_transform_log."""
    level = coarsest_log[None, ...]
    for j, c in enumerate(coeffs, start=1):
        level = refine_log(level, order, c, j)
    return level


def forward_transform(
    finest: Sequence[SpdMat] | np.ndarray, order: RefinementOrder
) -> WaveletPyramid:
    """Intrinsic AI wavelet transform of 2^J SPD matrices (J >= 1)."""
    stack = _spd_stack(finest)
    J = _scale_count(stack.shape[0])
    if J < 1:
        raise ValueError("forward_transform needs at least two matrices")
    coarsest, coeffs = forward_transform_log(log_stack(stack), order)
    return WaveletPyramid(J=J, coarsest_log=coarsest, coeffs=coeffs, order=order)


def backward_transform(pyr: WaveletPyramid) -> list[SpdMat]:
    """Reconstruct the 2^J finest SPD matrices."""
    return _to_spd_list(
        exp_stack(backward_transform_log(pyr.coarsest_log, pyr.coeffs, pyr.order))
    )


# ── Linear wavelet estimator ───────────────────────────────────────────────


def linear_estimate_log(
    data_log: np.ndarray, J0: int, order: RefinementOrder
) -> np.ndarray:
    """Keep scales 1..J0, zero the finer ones, reconstruct.

    Equivalent to lifting the level-J0 midpoints back to scale J with the
    AI refinement, which is how it is computed.
    """
    J = _scale_count(data_log.shape[0])
    if not 0 <= J0 <= J:
        raise ValueError(f"J0 must be in 0..{J}, got {J0}")
    level = data_log
    for _ in range(J - J0):
        level = coarsen_log(level)
    for _ in range(J - J0):
        level = refine_log(level, order)
    return level


def linear_estimate(
    data: Sequence[SpdMat] | np.ndarray, J0: int, order: RefinementOrder
) -> list[SpdMat]:
    """Linear wavelet estimator smoothing at scales above J0.

    J0 == J returns the data unchanged.
    """
    stack = _spd_stack(data)
    J = _scale_count(stack.shape[0])
    if not 0 <= J0 <= J:
        raise ValueError(f"J0 must be in 0..{J}, got {J0}")
    if J0 == J:
        return _to_spd_list(stack)
    return _to_spd_list(exp_stack(linear_estimate_log(log_stack(stack), J0, order)))


def lift_weights(J: int, J0: int, order: RefinementOrder, k: int) -> np.ndarray:
    """Weights alpha_v with log M_hat_{J,k} = sum_v alpha_v log M_{J0,v}."""
    if not 0 <= J0 <= J:
        raise ValueError(f"J0 must be in 0..{J}, got {J0}")
    if not 0 <= k < 2**J:
        raise ValueError(f"k must be in 0..{2**J - 1}, got {k}")
    level = np.eye(2**J0)
    for _ in range(J - J0):
        level = refine_log(level, order)
    return level[k]
