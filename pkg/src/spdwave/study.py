"""Monte Carlo studies: coverage of confidence sets and statistical checks.

Each Monte Carlo sample k draws from substreams ``(k, role)`` below the
study seed, so a report depends only on its config, never on the number of
worker threads or the order in which samples finish.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_serializer,
    field_validator,
    model_validator,
)
from scipy import stats

from spdwave import __version__
from spdwave.bootstrap import (
    BootstrapConfig,
    MultiplierKind,
    bootstrap_radii,
    wild_bootstrap_log,
    wild_bootstrap_point_log,
)
from spdwave.config import settings
from spdwave.curves import (
    DEFAULT_J0,
    CurveId,
    CurveSpec,
    NoiseSpec,
    SamplingPlan,
    plan_sampling,
    sample_noise_log,
    sample_noisy_log,
)
from spdwave.errors import SingularCovarianceError
from spdwave.inference import (
    BALL_SLACK,
    ELLIPSOID_SLACK,
    BallCS,
    CovTensor,
    EllipsoidCS,
    asymptotic_scale,
    chi2_quantile,
    ellipsoid_statistics,
    empirical_covariance_eta,
    scaled_volume,
    unit_ball_volume,
)
from spdwave.pyramid import lift_weights, linear_estimate_log
from spdwave.refinement import RefinementOrder, kappa
from spdwave.rng import (
    GAUSSIAN_METHOD,
    ROLE_BOOTSTRAP,
    ROLE_DATA,
    ROLE_MEAN,
    ROLE_VOLUME,
    SEED_MAX,
    RngStream,
)
from spdwave.spd import SpdMat, eta_stack, exp_stack

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.9, 0.95, 0.975)

Kind = Literal["asym", "boot"]


def _map_ordered(fn, items: list[int], workers: int) -> list:
    """Apply fn to items, returning results in item order."""
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ── Coverage study ─────────────────────────────────────────────────────────


class StudyConfig(BaseModel):
    """One coverage/volume study of a curve."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    curve: CurveSpec
    noise: NoiseSpec
    J: int = Field(default=10, ge=1)
    J0: int = Field(ge=0)
    J0_star: int | None = None
    N: int = 5
    B: int = Field(default=100, ge=1)
    K: int = Field(default=100, ge=1)
    levels: list[float] = Field(default_factory=lambda: list(DEFAULT_LEVELS))
    boundary_trim: int = Field(default_factory=lambda: settings.boundary_trim, ge=0)
    seed: int = Field(ge=0, le=SEED_MAX)
    volume_samples: int = Field(default_factory=lambda: settings.volume_samples, ge=0)
    volume_stride: int = Field(default_factory=lambda: settings.volume_stride, ge=1)
    multiplier: MultiplierKind = MultiplierKind.GAUSSIAN
    target: Literal["truth", "estimator_mean"] = "truth"
    mean_reps: int = Field(default=50, ge=1)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)

    @field_validator("curve", mode="before")
    @classmethod
    def _builtin_curve(cls, value: Any) -> Any:
        if isinstance(value, str | CurveId):
            return CurveSpec.builtin(value)
        return value

    @field_serializer("curve")
    def _curve_name(self, curve: CurveSpec) -> str:
        return curve.name

    @model_validator(mode="after")
    def _check(self) -> StudyConfig:
        RefinementOrder.from_N(self.N)
        if self.J0 > self.J:
            raise ValueError(f"J0={self.J0} exceeds J={self.J}")
        if self.J0_star is not None and self.J0_star > self.J:
            raise ValueError(f"J0_star={self.J0_star} exceeds J={self.J}")
        if 2 * self.boundary_trim >= 2**self.J:
            raise ValueError(
                f"boundary_trim={self.boundary_trim} leaves no points "
                f"out of {2**self.J}"
            )
        if not self.levels or any(not 0.0 < lv < 1.0 for lv in self.levels):
            raise ValueError(
                f"levels must be non-empty and in (0, 1), got {self.levels}"
            )
        return self

    @classmethod
    def for_curve(
        cls, curve: CurveId | str, seed: int, **overrides: Any
    ) -> StudyConfig:
        """Study defaults for a built-in curve (noise level and J0 per curve)."""
        cid = CurveId(curve)
        values: dict[str, Any] = {
            "curve": cid.value,
            "noise": NoiseSpec.for_curve(cid),
            "J0": DEFAULT_J0[cid],
            "seed": seed,
        }
        values.update(overrides)
        return cls.model_validate(values)

    @property
    def order(self) -> RefinementOrder:
        return RefinementOrder.from_N(self.N)

    @property
    def bootstrap(self) -> BootstrapConfig:
        return BootstrapConfig(
            J0_star=self.J0 if self.J0_star is None else self.J0_star,
            J0=self.J0,
            N=self.N,
            B=self.B,
            multiplier=self.multiplier,
            seed=self.seed,
        )


class CoverageRow(BaseModel):
    """Summary of one confidence-set family at one level."""

    kind: Kind
    level: float
    coverage: float | None
    coverage_se: float | None
    scaled_volume: float | None
    volume_se: float | None


class PointCoverage(BaseModel):
    """Coverage at each evaluated grid point, for histograms."""

    kind: Kind
    level: float
    coverage: list[float]


class StudyReport(BaseModel):
    version: str = __version__
    gaussian_method: str = GAUSSIAN_METHOD
    config: dict[str, Any]
    rows: list[CoverageRow]
    t: list[float]
    points: list[PointCoverage]

    def row(self, kind: Kind, level: float) -> CoverageRow:
        for r in self.rows:
            if r.kind == kind and math.isclose(r.level, level):
                return r
        raise KeyError(f"No row for kind={kind!r} level={level}")


@dataclass
class _SampleResult:
    asym_hits: np.ndarray | None  # (levels, points)
    boot_hits: np.ndarray  # (levels, points)
    asym_volume: np.ndarray | None  # (levels, volume points)
    boot_volume: np.ndarray | None


@dataclass(frozen=True)
class _StudyContext:
    cfg: StudyConfig
    plan: SamplingPlan
    cov: CovTensor
    target_log: np.ndarray
    points: np.ndarray
    volume_points: np.ndarray
    chi2: np.ndarray
    asym_enabled: bool


def estimator_mean_log(cfg: StudyConfig, plan: SamplingPlan) -> np.ndarray:
    """Mean of log M_hat over cfg.mean_reps fresh samples."""
    root = RngStream(cfg.seed)
    total = np.zeros_like(plan.truth_log)
    for r in range(cfg.mean_reps):
        data_log = sample_noisy_log(
            plan, cfg.noise, root.child(r, ROLE_MEAN).generator()
        )
        total += linear_estimate_log(data_log, cfg.J0, cfg.order)
    return total / cfg.mean_reps


def _scaled_volumes(
    ctx: _StudyContext, k: int, est_log: np.ndarray, radii: np.ndarray
) -> tuple[np.ndarray | None, np.ndarray]:
    cfg = ctx.cfg
    n_levels = len(cfg.levels)
    shape = (n_levels, ctx.volume_points.size)
    boot = np.empty(shape)
    asym = metric = None
    if ctx.asym_enabled:
        asym = np.full(shape, np.nan)
        metric = asymptotic_scale(cfg.J, cfg.J0, cfg.N) * ctx.cov.inverse()
    centers = exp_stack(est_log[ctx.volume_points])
    base = RngStream(cfg.seed).child(k, ROLE_VOLUME)
    for i, center_arr in enumerate(centers):
        center = SpdMat(center_arr)
        stream = base.child(i)
        unit, _ = unit_ball_volume(
            center, stream.child(0).generator(), cfg.volume_samples
        )
        for li, level in enumerate(cfg.levels):
            radius = float(radii[li, ctx.volume_points[i]])
            boot[li, i] = scaled_volume(
                BallCS(center, radius), stream.child(1, li), cfg.volume_samples, unit
            )
            if asym is not None:
                cs = EllipsoidCS(
                    center=center,
                    metric_matrix=metric,
                    radius_sq=float(ctx.chi2[li]),
                    level=level,
                    J=cfg.J,
                    J0=cfg.J0,
                    N=cfg.N,
                )
                asym[li, i] = scaled_volume(
                    cs, stream.child(2, li), cfg.volume_samples, unit
                )
    return asym, boot


def _run_sample(ctx: _StudyContext, k: int) -> _SampleResult:
    cfg = ctx.cfg
    root = RngStream(cfg.seed)
    data_log = sample_noisy_log(
        ctx.plan, cfg.noise, root.child(k, ROLE_DATA).generator()
    )
    est_log = linear_estimate_log(data_log, cfg.J0, cfg.order)

    asym_hits = None
    if ctx.asym_enabled:
        q = ellipsoid_statistics(
            est_log[ctx.points],
            ctx.target_log[ctx.points],
            ctx.cov,
            cfg.J,
            cfg.J0,
            cfg.N,
        )
        asym_hits = q[None, :] <= ctx.chi2[:, None] * (1.0 + ELLIPSOID_SLACK)

    reps = wild_bootstrap_log(data_log, cfg.bootstrap, root.child(k, ROLE_BOOTSTRAP))
    radii = bootstrap_radii(est_log, reps, cfg.levels)
    dist = np.linalg.norm(est_log - ctx.target_log, axis=(-2, -1))
    boot_hits = dist[None, ctx.points] <= radii[:, ctx.points] + BALL_SLACK

    asym_vol = boot_vol = None
    if cfg.volume_samples > 0:
        asym_vol, boot_vol = _scaled_volumes(ctx, k, est_log, radii)
    logger.info("Sample %d/%d done", k + 1, cfg.K)
    return _SampleResult(asym_hits, boot_hits, asym_vol, boot_vol)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    flat = values.reshape(-1)
    mean = float(np.mean(flat))
    se = float(np.std(flat, ddof=1) / math.sqrt(flat.size)) if flat.size > 1 else 0.0
    return mean, se


def coverage_study(cfg: StudyConfig) -> StudyReport:
    """Empirical coverage and scaled volumes of asymptotic and bootstrap sets.

    The asymptotic family uses the true noise covariance.  If that
    covariance is singular (e.g. zero noise) the family is skipped and its
    rows carry ``None``.
    """
    plan = plan_sampling(cfg.curve, cfg.J)
    cov = CovTensor.from_noise(cfg.noise)
    asym_enabled = True
    try:
        cov.inverse()
    except SingularCovarianceError as e:
        logger.warning("Skipping asymptotic confidence sets: %s", e)
        asym_enabled = False

    if cfg.target == "truth":
        target_log = plan.truth_log
    else:
        target_log = estimator_mean_log(cfg, plan)
    points = np.arange(cfg.boundary_trim, plan.n - cfg.boundary_trim)
    ctx = _StudyContext(
        cfg=cfg,
        plan=plan,
        cov=cov,
        target_log=target_log,
        points=points,
        volume_points=points[:: cfg.volume_stride],
        chi2=np.array([chi2_quantile(cov.q, lv) for lv in cfg.levels]),
        asym_enabled=asym_enabled,
    )
    logger.info(
        "Coverage study on %s: J=%d J0=%d N=%d K=%d B=%d",
        cfg.curve.name, cfg.J, cfg.J0, cfg.N, cfg.K, cfg.B,
    )
    results = _map_ordered(
        lambda k: _run_sample(ctx, k), list(range(cfg.K)), cfg.workers
    )

    boot_hits = np.stack([r.boot_hits for r in results])  # (K, levels, points)
    asym_hits = np.stack([r.asym_hits for r in results]) if asym_enabled else None
    rows: list[CoverageRow] = []
    point_rows: list[PointCoverage] = []
    for li, level in enumerate(cfg.levels):
        for kind, hits in (("asym", asym_hits), ("boot", boot_hits)):
            if hits is None:
                rows.append(CoverageRow(
                    kind=kind, level=level, coverage=None, coverage_se=None,
                    scaled_volume=None, volume_se=None,
                ))
                continue
            cov_mean, cov_se = _mean_se(hits[:, li].astype(np.float64))
            vol = vol_se = None
            if cfg.volume_samples > 0:
                stack = np.stack([
                    getattr(r, f"{kind}_volume")[li] for r in results
                ])
                vol, vol_se = _mean_se(stack)
            rows.append(CoverageRow(
                kind=kind, level=level, coverage=cov_mean, coverage_se=cov_se,
                scaled_volume=vol, volume_se=vol_se,
            ))
            point_rows.append(PointCoverage(
                kind=kind, level=level, coverage=hits[:, li].mean(axis=0).tolist()
            ))
    return StudyReport(
        config=cfg.model_dump(mode="json"),
        rows=rows,
        t=plan.t[points].tolist(),
        points=point_rows,
    )


# ── Asymptotic normality and bootstrap validity ────────────────────────────


class CltConfig(BaseModel):
    """Constant-signal model for checking the estimator's limiting covariance."""

    J: int = Field(default=12, ge=1)
    J0: int = Field(default=6, ge=0)
    N: int = 3
    x: float = Field(default=33 / 64, ge=0.0, lt=1.0)
    R: int = Field(default=2000, ge=2)
    noise: NoiseSpec = Field(
        default_factory=lambda: NoiseSpec(sigma_11=0.1, sigma_22=0.1, sigma_12=0.1)
    )
    seed: int = Field(ge=0, le=SEED_MAX)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)

    @model_validator(mode="after")
    def _check(self) -> CltConfig:
        RefinementOrder.from_N(self.N)
        if self.J0 > self.J:
            raise ValueError(f"J0={self.J0} exceeds J={self.J}")
        return self

    @property
    def order(self) -> RefinementOrder:
        return RefinementOrder.from_N(self.N)

    @property
    def k(self) -> int:
        """Grid index whose interval starts at x."""
        return int(math.floor(self.x * 2**self.J))

    @property
    def on_coarse_grid(self) -> bool:
        return float(self.x * 2**self.J0).is_integer()


class CltReport(BaseModel):
    J: int
    J0: int
    N: int
    x: float
    k: int
    R: int
    on_coarse_grid: bool
    kappa: float
    lifted_factor: float
    empirical: list[list[float]]
    reference_kappa: list[list[float]]
    reference_lifted: list[list[float]]
    rel_error_kappa: float
    rel_error_lifted: float
    ks_pvalue: float


def _rel_max_error(emp: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(emp - ref)) / np.max(np.abs(ref)))


def _point_estimates_eta(cfg: CltConfig, alpha: np.ndarray) -> np.ndarray:
    """eta(log M_hat_{J,k}) over cfg.R fresh pure-noise samples, shape (R, q)."""
    root = RngStream(cfg.seed)
    n = 2**cfg.J
    block = n // 2**cfg.J0

    def one(r: int) -> np.ndarray:
        xi = sample_noise_log(cfg.noise, (n,), root.child(r, ROLE_DATA).generator())
        means = xi.reshape(2**cfg.J0, block, 2, 2).mean(axis=1)
        return eta_stack(np.tensordot(alpha, means, axes=1))

    return np.stack(_map_ordered(one, list(range(cfg.R)), cfg.workers))


def _references(
    cfg: CltConfig, alpha: np.ndarray
) -> tuple[float, float, np.ndarray, np.ndarray]:
    cov = CovTensor.from_noise(cfg.noise).eta_matrix
    shrink = 2.0 ** (-(cfg.J - cfg.J0))
    kap = kappa(cfg.N)
    lifted = float(np.sum(alpha**2))
    return kap, lifted, shrink * kap * cov, shrink * lifted * cov


def clt_check(cfg: CltConfig) -> CltReport:
    """Compare the covariance of eta(log M_hat_{J,k}) with its limit.

    The signal is the identity and the noise covariance is constant, so the
    estimator at k is a fixed linear combination of block means of the
    noise.  Two references are reported: 2^-(J-J0) kappa_N C~ (the limit at
    points of the J0 grid) and 2^-(J-J0) sum(alpha^2) C~ with the exact
    lifted weights alpha.
    """
    alpha = lift_weights(cfg.J, cfg.J0, cfg.order, cfg.k)
    samples = _point_estimates_eta(cfg, alpha)
    emp = np.cov(samples, rowvar=False, ddof=1)
    kap, lifted, ref_kappa, ref_lifted = _references(cfg, alpha)
    z = samples[:, 0] / math.sqrt(ref_lifted[0, 0])
    pvalue = float(stats.kstest(z - z.mean(), "norm").pvalue)
    logger.info("CLT check at k=%d: sum(alpha^2)=%.6f kappa=%.6f", cfg.k, lifted, kap)
    return CltReport(
        J=cfg.J, J0=cfg.J0, N=cfg.N, x=cfg.x, k=cfg.k, R=cfg.R,
        on_coarse_grid=cfg.on_coarse_grid,
        kappa=kap,
        lifted_factor=lifted,
        empirical=emp.tolist(),
        reference_kappa=ref_kappa.tolist(),
        reference_lifted=ref_lifted.tolist(),
        rel_error_kappa=_rel_max_error(emp, ref_kappa),
        rel_error_lifted=_rel_max_error(emp, ref_lifted),
        ks_pvalue=pvalue,
    )


class BootstrapValidityConfig(CltConfig):
    """CLT setting plus the bootstrap run compared against it."""

    J0_star: int | None = None
    B: int = Field(default=2000, ge=2)
    multiplier: MultiplierKind = MultiplierKind.GAUSSIAN
    datasets: int = Field(default=4, ge=1)


class BootstrapValidityReport(BaseModel):
    k: int
    B: int
    R: int
    datasets: int
    bootstrap_cov: list[list[float]]
    sampling_cov: list[list[float]]
    rel_error: float


def bootstrap_validity_check(cfg: BootstrapValidityConfig) -> BootstrapValidityReport:
    """Conditional bootstrap covariance versus the sampling covariance.

    Each of ``cfg.datasets`` data sets (substreams ``(R + m, data)``) is
    bootstrapped B times and the conditional covariances are averaged. The
    sampling covariance comes from the R fresh data sets of clt_check.
    """
    alpha = lift_weights(cfg.J, cfg.J0, cfg.order, cfg.k)
    sampling = np.cov(_point_estimates_eta(cfg, alpha), rowvar=False, ddof=1)

    root = RngStream(cfg.seed)
    n = 2**cfg.J
    bcfg = BootstrapConfig(
        J0_star=cfg.J0 if cfg.J0_star is None else cfg.J0_star,
        J0=cfg.J0,
        N=cfg.N,
        B=cfg.B,
        multiplier=cfg.multiplier,
        seed=cfg.seed,
    )

    def conditional_cov(m: int) -> np.ndarray:
        index = cfg.R + m
        data_log = sample_noise_log(
            cfg.noise, (n,), root.child(index, ROLE_DATA).generator()
        )
        reps = wild_bootstrap_point_log(
            data_log, bcfg, cfg.k, root.child(index, ROLE_BOOTSTRAP)
        )
        return empirical_covariance_eta(reps)

    covs = _map_ordered(conditional_cov, list(range(cfg.datasets)), cfg.workers)
    boot = np.mean(covs, axis=0)
    return BootstrapValidityReport(
        k=cfg.k,
        B=cfg.B,
        R=cfg.R,
        datasets=cfg.datasets,
        bootstrap_cov=boot.tolist(),
        sampling_cov=sampling.tolist(),
        rel_error=_rel_max_error(boot, sampling),
    )


# ── Mean squared error trend ───────────────────────────────────────────────


class MseRow(BaseModel):
    J: int
    J0: int
    mse: float
    se: float


class MseReport(BaseModel):
    curve: str
    N: int
    reps: int
    rows: list[MseRow]

    @property
    def strictly_decreasing(self) -> bool:
        values = [r.mse for r in self.rows]
        return all(b < a for a, b in zip(values, values[1:], strict=False))


def rate_scale(J: int, N: int, offset: int = 3) -> int:
    """J0 = floor(J / (2N+1)) + offset, capped at J."""
    return min(J // (2 * N + 1) + offset, J)


def mse_trend(
    curve: CurveSpec,
    noise: NoiseSpec,
    Js: list[int],
    N: int = 3,
    reps: int = 50,
    seed: int = 0,
    trim_fraction: float = 0.0,
    offset: int = 3,
) -> MseReport:
    """Average squared log-Euclidean error of the estimator for growing J.

    Args:
        curve: Signal curve.
        noise: Log-noise levels.
        Js: Finest scales to compare.
        N: Refinement order.
        reps: Replicates per scale.
        seed: Root seed; scale J uses substreams (J, r, data).
        trim_fraction: Fraction of grid points dropped at each end.
        offset: Undersmoothing offset added to the rate-optimal J0.
    """
    if not 0.0 <= trim_fraction < 0.5:
        raise ValueError(f"trim_fraction must be in [0, 0.5), got {trim_fraction}")
    order = RefinementOrder.from_N(N)
    root = RngStream(seed)
    rows = []
    for J in Js:
        plan = plan_sampling(curve, J)
        J0 = rate_scale(J, N, offset)
        trim = int(trim_fraction * plan.n)
        inner = slice(trim, plan.n - trim)
        errors = np.empty(reps)
        for r in range(reps):
            data_log = sample_noisy_log(
                plan, noise, root.child(J, r, ROLE_DATA).generator()
            )
            est = linear_estimate_log(data_log, J0, order)
            diff = est[inner] - plan.truth_log[inner]
            errors[r] = float(np.mean(np.sum(diff**2, axis=(-2, -1))))
        mse, se = _mean_se(errors)
        logger.info("MSE at J=%d (J0=%d): %.6g", J, J0, mse)
        rows.append(MseRow(J=J, J0=J0, mse=mse, se=se))
    return MseReport(curve=curve.name, N=N, reps=reps, rows=rows)

