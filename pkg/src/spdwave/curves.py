"""Test curves and the intrinsic signal-plus-noise model.

Observations are X_k = exp(log c(t_k) + xi_k) on the interval-midpoint grid
t_k = (2k+1) / 2^(J+1), where xi_k is a symmetric 2x2 matrix with
independent Gaussian entries N(0, sigma_ij^2).
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field

from spdwave.errors import DimensionMismatchError, NotPositiveDefiniteError
from spdwave.spd import SpdMat, exp_stack, log_stack, sym_eigen_stack

logger = logging.getLogger(__name__)

CurveFunc = Callable[[np.ndarray], np.ndarray]


class CurveId(str, Enum):
    """Built-in Sym+(2) test curves."""

    C1 = "c1"
    C2 = "c2"
    C3 = "c3"


class NoiseSpec(BaseModel):
    """Standard deviations of the independent Gaussian log-noise entries."""

    sigma_11: float = Field(ge=0)
    sigma_22: float = Field(ge=0)
    sigma_12: float = Field(ge=0)

    @classmethod
    def for_curve(cls, curve: CurveId | str) -> NoiseSpec:
        """Noise level used with each built-in curve in the simulation study."""
        return _DEFAULT_NOISE[CurveId(curve)]

    @property
    def scales(self) -> np.ndarray:
        """(sigma_11, sigma_22, sigma_12) as an array."""
        return np.array([self.sigma_11, self.sigma_22, self.sigma_12])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.scales)


_DEFAULT_NOISE = {
    CurveId.C1: NoiseSpec(sigma_11=0.05, sigma_22=0.1, sigma_12=0.01),
    CurveId.C2: NoiseSpec(sigma_11=0.1, sigma_22=0.05, sigma_12=0.1),
    CurveId.C3: NoiseSpec(sigma_11=0.1, sigma_22=0.1, sigma_12=0.1),
}

# Smoothing scale J0 used with each curve at J = 10, N = 5.
DEFAULT_J0 = {CurveId.C1: 7, CurveId.C2: 5, CurveId.C3: 6}


# ── Built-in curves ────────────────────────────────────────────────────────


def _sym2(a: np.ndarray, b: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = np.empty((*a.shape, 2, 2))
    out[..., 0, 0] = a
    out[..., 1, 1] = b
    out[..., 0, 1] = z
    out[..., 1, 0] = z
    return out


def _c1(t: np.ndarray) -> np.ndarray:
    # |1 - (2t)^2| keeps the entry real for t > 1/2
    x = 50.0 * np.sqrt(np.abs(1.0 - (2.0 * t) ** 2)) + 0.1
    z = 2.0 * np.sin(17.0 * np.pi * t)
    return _sym2(x, 50.0 * t + 1.0, z)


def _c2(t: np.ndarray) -> np.ndarray:
    a = 5.0 * np.pi * (t + 0.1) / 11.0
    z = 50.0 * np.sqrt(np.clip(np.sin(2.0 * a), 0.0, None) / 2.0)
    return _sym2(55.0 * np.cos(a), 55.0 * np.sin(a), z)


def _c3(t: np.ndarray) -> np.ndarray:
    u = 5.0 - 10.0 * t
    return _sym2(2.0 * u**2, np.ones_like(t), u)


_BUILTIN: dict[CurveId, CurveFunc] = {CurveId.C1: _c1, CurveId.C2: _c2, CurveId.C3: _c3}


@dataclass(frozen=True, eq=False)
class CurveSpec:
    """A curve t -> SPD matrix on [0, 1].

    ``func`` is vectorised: it maps an array of n times to an (n, d, d) stack.
    """

    name: str
    func: CurveFunc
    dim: int = 2

    @classmethod
    def builtin(cls, curve: CurveId | str) -> CurveSpec:
        cid = CurveId(curve)
        return cls(name=cid.value, func=_BUILTIN[cid])

    @classmethod
    def custom(cls, name: str, func: CurveFunc, dim: int = 2) -> CurveSpec:
        return cls(name=name, func=func, dim=dim)

    @classmethod
    def constant(cls, value: SpdMat) -> CurveSpec:
        entries = value.entries

        def func(t: np.ndarray) -> np.ndarray:
            return np.broadcast_to(entries, (*np.shape(t), value.dim, value.dim)).copy()

        return cls(name="constant", func=func, dim=value.dim)

    def __call__(self, t: np.ndarray) -> np.ndarray:
        out = np.asarray(self.func(np.asarray(t, dtype=np.float64)), dtype=np.float64)
        if out.shape[-2:] != (self.dim, self.dim):
            raise DimensionMismatchError(
                f"Curve {self.name!r} returned shape {out.shape}, "
                f"expected trailing ({self.dim}, {self.dim})"
            )
        return out


def curve_grid(J: int) -> np.ndarray:
    """Interval midpoints t_k = (2k+1) / 2^(J+1), k = 0..2^J-1."""
    if J < 0:
        raise ValueError(f"J must be non-negative, got {J}")
    return (2.0 * np.arange(2**J) + 1.0) / 2 ** (J + 1)


def curve_eval(spec: CurveSpec, t: float) -> SpdMat:
    """Value of the curve at one time t in [0, 1].

    Raises:
        NotPositiveDefiniteError: If the curve is not SPD at t.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    return SpdMat(spec(np.array([t]))[0])


# ── Sampling ───────────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """A curve evaluated on the dyadic midpoint grid, checked to be SPD."""

    curve: CurveSpec
    J: int
    t: np.ndarray
    truth: np.ndarray
    truth_log: np.ndarray

    @property
    def n(self) -> int:
        return self.t.shape[0]


def plan_sampling(spec: CurveSpec, J: int) -> SamplingPlan:
    """Evaluate the curve on the grid of scale J.

    Raises:
        NotPositiveDefiniteError: If the curve is singular at a grid point.
    """
    t = curve_grid(J)
    truth = spec(t)
    lam, _ = sym_eigen_stack(truth)
    bad = np.flatnonzero(lam[:, -1] <= 0)
    if bad.size:
        k = int(bad[0])
        raise NotPositiveDefiniteError(
            lam[k], f"Curve {spec.name!r} is not SPD at t={t[k]:.6g} (grid index {k})"
        )
    truth_log = log_stack(truth)
    for arr in (t, truth, truth_log):
        arr.setflags(write=False)
    return SamplingPlan(curve=spec, J=J, t=t, truth=truth, truth_log=truth_log)


def sample_noise_log(
    noise: NoiseSpec, shape: tuple[int, ...], rng: np.random.Generator
) -> np.ndarray:
    """Symmetric 2x2 Gaussian noise of shape (*shape, 2, 2).

    Draws (z_11, z_22, z_12) per matrix in that order.
    """
    z = rng.standard_normal((*shape, 3)) * noise.scales
    return _sym2(z[..., 0], z[..., 1], z[..., 2])


def sample_noisy_log(
    plan: SamplingPlan, noise: NoiseSpec, rng: np.random.Generator
) -> np.ndarray:
    """Log-observations log c(t_k) + xi_k, shape (2^J, 2, 2)."""
    if plan.curve.dim != 2:
        raise DimensionMismatchError(
            f"Entry-wise noise is defined for 2x2 curves, got dim={plan.curve.dim}"
        )
    return plan.truth_log + sample_noise_log(noise, (plan.n,), rng)


def sample_noisy_curve(
    spec: CurveSpec, noise: NoiseSpec, J: int, rng: np.random.Generator
) -> list[SpdMat]:
    """Draw 2^J noisy observations X_k = exp(log c(t_k) + xi_k)."""
    plan = plan_sampling(spec, J)
    return [SpdMat(m) for m in exp_stack(sample_noisy_log(plan, noise, rng))]
