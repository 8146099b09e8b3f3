"""Wild bootstrap for the linear wavelet estimator.

Residuals of a pilot estimate are multiplied by one scalar per grid index,
added back to the pilot, and re-smoothed.  Everything happens in the log
domain, where each step is linear.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field, model_validator

from spdwave.inference import BallCS
from spdwave.pyramid import (
    coarsen_log,
    lift_weights,
    linear_estimate_log,
)
from spdwave.refinement import RefinementOrder
from spdwave.rng import SEED_MAX, RngStream
from spdwave.spd import SpdMat, exp_stack, log_stack

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
TWO_POINT_LOW = -(SQRT5 - 1.0) / 2.0
TWO_POINT_HIGH = (SQRT5 + 1.0) / 2.0
TWO_POINT_P_LOW = (SQRT5 + 1.0) / (2.0 * SQRT5)

# Replicates smoothed together in one batched pass.
CHUNK = 64


class MultiplierKind(str, Enum):
    """Distribution of the wild bootstrap multipliers."""

    GAUSSIAN = "gaussian"
    TWO_POINT = "two_point"
    UNIT = "unit"  # always +1, reproduces the data


class BootstrapConfig(BaseModel):
    """Parameters of one wild bootstrap run."""

    J0_star: int = Field(ge=0)
    J0: int = Field(ge=0)
    N: int = 5
    B: int = Field(default=100, ge=1)
    multiplier: MultiplierKind = MultiplierKind.GAUSSIAN
    seed: int = Field(ge=0, le=SEED_MAX)

    @model_validator(mode="after")
    def _check_order(self) -> BootstrapConfig:
        RefinementOrder.from_N(self.N)
        return self

    @property
    def order(self) -> RefinementOrder:
        return RefinementOrder.from_N(self.N)

    def validate_for(self, J: int) -> None:
        """Raise ValueError unless both smoothing scales fit a scale-J sample."""
        for name, value in (("J0_star", self.J0_star), ("J0", self.J0)):
            if value > J:
                raise ValueError(f"{name}={value} exceeds the finest scale J={J}")


def multiplier_sample(
    kind: MultiplierKind | str,
    rng: np.random.Generator,
    size: int | tuple[int, ...] | None = None,
) -> float | np.ndarray:
    """Draw wild bootstrap multipliers (mean 0, variance 1, except UNIT).

    TWO_POINT takes -(sqrt5-1)/2 with probability (sqrt5+1)/(2 sqrt5) and
    (sqrt5+1)/2 otherwise, so E[V] = 0 and E[V^2] = E[V^3] = 1.
    """
    kind = MultiplierKind(kind)
    if kind is MultiplierKind.GAUSSIAN:
        out = rng.standard_normal(size)
    elif kind is MultiplierKind.TWO_POINT:
        out = np.where(
            rng.random(size) < TWO_POINT_P_LOW, TWO_POINT_LOW, TWO_POINT_HIGH
        )
    else:
        out = np.ones(size) if size is not None else np.float64(1.0)
    return float(out) if size is None else out


def _replicate_multipliers(
    cfg: BootstrapConfig, stream: RngStream, b: int, n: int
) -> np.ndarray:
    return multiplier_sample(cfg.multiplier, stream.child(b).generator(), n)


def pilot_residuals_log(
    data_log: np.ndarray, cfg: BootstrapConfig
) -> tuple[np.ndarray, np.ndarray]:
    """(pilot, residual) with pilot the J0_star estimate and residual = data - pilot."""
    pilot = linear_estimate_log(data_log, cfg.J0_star, cfg.order)
    return pilot, data_log - pilot


def wild_bootstrap_log(
    data_log: np.ndarray, cfg: BootstrapConfig, stream: RngStream | None = None
) -> np.ndarray:
    """Bootstrap replicates of the estimator, shape (B, 2^J, d, d), log domain.

    Replicate b draws its multipliers from ``stream.child(b)``, so results
    do not depend on how replicates are grouped.
    """
    n = data_log.shape[0]
    cfg.validate_for(n.bit_length() - 1)
    stream = stream or RngStream(cfg.seed)
    pilot, resid = pilot_residuals_log(data_log, cfg)
    out = np.empty((cfg.B, *data_log.shape))
    for start in range(0, cfg.B, CHUNK):
        stop = min(start + CHUNK, cfg.B)
        v = np.stack(
            [_replicate_multipliers(cfg, stream, b, n) for b in range(start, stop)],
            axis=1,
        )
        boot = pilot[:, None] + v[..., None, None] * resid[:, None]
        est = linear_estimate_log(boot, cfg.J0, cfg.order)
        out[start:stop] = np.moveaxis(est, 1, 0)
    logger.debug("Computed %d bootstrap replicates", cfg.B)
    return out


def wild_bootstrap_point_log(
    data_log: np.ndarray, cfg: BootstrapConfig, k: int, stream: RngStream | None = None
) -> np.ndarray:
    """Replicates at a single grid index k, shape (B, d, d), log domain.

    Uses the lifted weights of the level-J0 midpoints and draws the same
    multipliers as wild_bootstrap_log, so the values agree with column k
    of the full run.
    """
    n = data_log.shape[0]
    J = n.bit_length() - 1
    cfg.validate_for(J)
    stream = stream or RngStream(cfg.seed)
    alpha = lift_weights(J, cfg.J0, cfg.order, k)
    pilot, resid = pilot_residuals_log(data_log, cfg)
    pilot_coarse = pilot
    for _ in range(J - cfg.J0):
        pilot_coarse = coarsen_log(pilot_coarse)
    base = np.tensordot(alpha, pilot_coarse, axes=1)
    block = n // 2**cfg.J0
    out = np.empty((cfg.B, *data_log.shape[1:]))
    for b in range(cfg.B):
        v = _replicate_multipliers(cfg, stream, b, n)
        weighted = v[:, None, None] * resid
        means = weighted.reshape(2**cfg.J0, block, *resid.shape[1:]).mean(axis=1)
        out[b] = base + np.tensordot(alpha, means, axes=1)
    return out


def wild_bootstrap(
    data: Sequence[SpdMat], cfg: BootstrapConfig, stream: RngStream | None = None
) -> list[list[SpdMat]]:
    """B bootstrap replicates of the linear wavelet estimate of ``data``."""
    data_log = log_stack(np.stack([m.entries for m in data]))
    reps = exp_stack(wild_bootstrap_log(data_log, cfg, stream))
    return [[SpdMat(m) for m in rep] for rep in reps]


# ── Confidence balls ───────────────────────────────────────────────────────


def order_statistic_index(B: int, level: float) -> int:
    """Zero-based index of the ceil(B * level)-th order statistic."""
    if B < 1:
        raise ValueError("Need at least one bootstrap replicate")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    return min(max(math.ceil(B * level - 1e-9), 1), B) - 1


def bootstrap_radii(
    estimate_log: np.ndarray, replicates_log: np.ndarray, levels: Sequence[float]
) -> np.ndarray:
    """Ball radii per level and grid index, shape (len(levels), 2^J).

    Args:
        estimate_log: (2^J, d, d) log-estimate.
        replicates_log: (B, 2^J, d, d) log-replicates.
        levels: Confidence levels.
    """
    dist = np.linalg.norm(replicates_log - estimate_log[None], axis=(-2, -1))
    dist = np.sort(dist, axis=0)
    B = dist.shape[0]
    return np.stack([dist[order_statistic_index(B, lv)] for lv in levels])


def bootstrap_ball(
    estimate_at_k: SpdMat, replicates_at_k: Sequence[SpdMat], level: float
) -> BallCS:
    """Bootstrap confidence ball: radius is the ceil(B*level)-th smallest distance."""
    if len(replicates_at_k) == 0:
        raise ValueError("bootstrap_ball needs at least one replicate")
    est = log_stack(estimate_at_k.entries)
    reps = log_stack(np.stack([m.entries for m in replicates_at_k]))
    dist = np.sort(np.linalg.norm(reps - est, axis=(-2, -1)))
    radius = float(dist[order_statistic_index(len(dist), level)])
    return BallCS(center=estimate_at_k, radius=radius, level=level)
