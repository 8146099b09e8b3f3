"""Command-line interface for spdwave."""

import json
import logging
from pathlib import Path
from typing import Annotated

import numpy as np
import typer
from pydantic import BaseModel

from spdwave import __version__
from spdwave.bootstrap import (
    BootstrapConfig,
    MultiplierKind,
    bootstrap_radii,
    wild_bootstrap_log,
)
from spdwave.config import settings
from spdwave.curves import CurveId, CurveSpec, NoiseSpec, sample_noisy_curve
from spdwave.files import (
    export_point_coverage_csv,
    export_study_csv,
    read_curve,
    write_curve,
    write_json,
)
from spdwave.inference import BallCS, CovTensor, asymptotic_cs
from spdwave.pyramid import forward_transform, linear_estimate, linear_estimate_log
from spdwave.refinement import RefinementOrder, build_transition
from spdwave.rng import RngStream
from spdwave.spd import SpdMat, exp_stack, log_stack
from spdwave.study import (
    BootstrapValidityConfig,
    CltConfig,
    StudyConfig,
    bootstrap_validity_check,
    clt_check,
    coverage_study,
    mse_trend,
)

app = typer.Typer(
    name="spdwave",
    help="Wavelet smoothing and confidence sets for curves of SPD matrices.",
    no_args_is_help=True,
)

Order = Annotated[int, typer.Option("--order", "-N", help="Refinement order N (odd)")]
Seed = Annotated[int, typer.Option("--seed", help="Root seed (required)")]
Level = Annotated[
    float, typer.Option("--alpha", help="Confidence level, e.g. 0.9 for a 90% set")
]
Curve = Annotated[CurveId, typer.Option("--curve", "-c", help="Test curve")]
JsonOut = Annotated[Path | None, typer.Option("--out", "-o", help="Output JSON")]
Workers = Annotated[int, typer.Option("--workers", help="Worker threads")]


@app.callback()
def main(
    verbose: Annotated[
        int, typer.Option(
            "--verbose", "-v", count=True, help="-v for info, -vv for debug"
        )
    ] = 0,
) -> None:
    """Wavelet smoothing and confidence sets for curves of SPD matrices."""
    level = {0: settings.log_level, 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _noise(
    curve: str, sigma11: float | None, sigma22: float | None, sigma12: float | None
) -> NoiseSpec:
    base = NoiseSpec.for_curve(curve)
    return NoiseSpec(
        sigma_11=base.sigma_11 if sigma11 is None else sigma11,
        sigma_22=base.sigma_22 if sigma22 is None else sigma22,
        sigma_12=base.sigma_12 if sigma12 is None else sigma12,
    )


Sigma11 = Annotated[float | None, typer.Option("--sigma11", help="Override sigma_11")]
Sigma22 = Annotated[float | None, typer.Option("--sigma22", help="Override sigma_22")]
Sigma12 = Annotated[float | None, typer.Option("--sigma12", help="Override sigma_12")]


def _emit(model: BaseModel, output: Path | None) -> None:
    if output is None:
        typer.echo(model.model_dump_json(indent=2))
    else:
        write_json(model, output)
        typer.echo(f"Saved to {output}")


@app.command()
def version() -> None:
    """Show the installed version."""
    typer.echo(f"spdwave {__version__}")


@app.command()
def kappa(order: Order = 5) -> None:
    """Print kappa_N and the limit matrix E_inf as CSV."""
    try:
        tm = build_transition(RefinementOrder.from_N(order))
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    typer.echo(f"N,{tm.order.N}")
    typer.echo(f"kappa,{tm.kappa:.17g}")
    for row in tm.E_inf:
        typer.echo(",".join(f"{v:.17g}" for v in row))


@app.command()
def simulate(
    seed: Seed,
    output: Annotated[Path, typer.Option("--out", "-o", help="Output curve file")],
    curve: Curve = CurveId.C1,
    J: Annotated[int, typer.Option("--J", help="Finest scale (2^J samples)")] = 10,
    sigma11: Sigma11 = None,
    sigma22: Sigma22 = None,
    sigma12: Sigma12 = None,
) -> None:
    """Sample a noisy test curve on the dyadic midpoint grid."""
    try:
        noise = _noise(curve, sigma11, sigma22, sigma12)
        data = sample_noisy_curve(
            CurveSpec.builtin(curve), noise, J, RngStream(seed).generator()
        )
        write_curve(data, output)
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    typer.echo(f"Saved {len(data)} matrices to {output}")


class _PyramidDoc(BaseModel):
    J: int
    N: int
    coarsest: dict
    coeffs: list[list[dict]]


@app.command()
def transform(
    input_path: Annotated[Path, typer.Option("--in", help="Input curve file")],
    output: JsonOut = None,
    order: Order = 5,
    j0: Annotated[
        int | None, typer.Option("--j0", help="Zero all scales above J0")
    ] = None,
) -> None:
    """Forward wavelet transform; writes the coarsest midpoint and coefficients."""
    try:
        pyr = forward_transform(read_curve(input_path), RefinementOrder.from_N(order))
        if j0 is not None:
            pyr = pyr.truncated(j0)
        doc = _PyramidDoc(
            J=pyr.J,
            N=order,
            coarsest=pyr.coarsest.to_record().model_dump(),
            coeffs=[
                [m.to_record().model_dump() for m in pyr.scale(j)]
                for j in range(1, pyr.J + 1)
            ],
        )
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    _emit(doc, output)


@app.command()
def estimate(
    input_path: Annotated[Path, typer.Option("--in", help="Input curve file")],
    output: Annotated[Path, typer.Option("--out", "-o", help="Output curve file")],
    j0: Annotated[int, typer.Option("--j0", help="Smoothing scale J0")],
    order: Order = 5,
) -> None:
    """Linear wavelet estimate of a curve file."""
    try:
        est = linear_estimate(read_curve(input_path), j0, RefinementOrder.from_N(order))
        write_curve(est, output)
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    typer.echo(f"Saved to {output}")


class _BallsDoc(BaseModel):
    level: float
    B: int
    multiplier: MultiplierKind
    sets: list[dict]


@app.command()
def bootstrap(
    input_path: Annotated[Path, typer.Option("--in", help="Input curve file")],
    j0: Annotated[int, typer.Option("--j0", help="Estimator smoothing scale J0")],
    seed: Seed,
    output: JsonOut = None,
    j0star: Annotated[
        int | None, typer.Option("--j0star", help="Pilot scale J0* (defaults to J0)")
    ] = None,
    order: Order = 5,
    B: Annotated[int, typer.Option("--B", help="Bootstrap replicates")] = 100,
    level: Level = 0.9,
    multiplier: Annotated[
        MultiplierKind, typer.Option("--multiplier", help="Multiplier distribution")
    ] = MultiplierKind.GAUSSIAN,
) -> None:
    """Bootstrap confidence balls at every grid point."""
    try:
        data = read_curve(input_path)
        cfg = BootstrapConfig(
            J0_star=j0 if j0star is None else j0star,
            J0=j0,
            N=order,
            B=B,
            multiplier=multiplier,
            seed=seed,
        )
        data_log = log_stack(np.stack([m.entries for m in data]))
        est_log = linear_estimate_log(data_log, j0, cfg.order)
        radii = bootstrap_radii(est_log, wild_bootstrap_log(data_log, cfg), [level])[0]
        centers = exp_stack(est_log)
        sets = [
            BallCS(SpdMat(c), float(r), level).to_record().model_dump()
            for c, r in zip(centers, radii, strict=True)
        ]
        doc = _BallsDoc(level=level, B=B, multiplier=multiplier, sets=sets)
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    _emit(doc, output)


@app.command()
def cs(
    input_path: Annotated[Path, typer.Option("--in", help="Input curve file")],
    j0: Annotated[int, typer.Option("--j0", help="Smoothing scale J0")],
    index: Annotated[int, typer.Option("--index", "-k", help="Grid index k")],
    kind: Annotated[str, typer.Option("--type", help="asym or boot")] = "asym",
    output: JsonOut = None,
    order: Order = 5,
    level: Level = 0.9,
    curve: Annotated[
        CurveId, typer.Option("--curve", "-c", help="Curve whose noise level to assume")
    ] = CurveId.C1,
    sigma11: Sigma11 = None,
    sigma22: Sigma22 = None,
    sigma12: Sigma12 = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Seed (boot only)")] = None,
    B: Annotated[int, typer.Option("--B", help="Bootstrap replicates")] = 100,
) -> None:
    """Confidence set at one grid point of a curve file."""
    if kind not in ("asym", "boot"):
        typer.echo(f"Error: unknown set type {kind!r}, expected asym or boot", err=True)
        raise typer.Exit(1)
    if kind == "boot" and seed is None:
        typer.echo("Error: --seed is required for bootstrap sets", err=True)
        raise typer.Exit(1)

    try:
        data = read_curve(input_path)
        J = len(data).bit_length() - 1
        if not 0 <= index < len(data):
            raise ValueError(f"index must be in 0..{len(data) - 1}, got {index}")
        rn = RefinementOrder.from_N(order)
        data_log = log_stack(np.stack([m.entries for m in data]))
        est_log = linear_estimate_log(data_log, j0, rn)
        center = SpdMat(exp_stack(est_log[index]))
        if kind == "asym":
            cov = CovTensor.from_noise(_noise(curve, sigma11, sigma22, sigma12))
            record = asymptotic_cs(center, cov, J, j0, order, level).to_record()
        else:
            cfg = BootstrapConfig(J0_star=j0, J0=j0, N=order, B=B, seed=seed)
            reps = wild_bootstrap_log(data_log, cfg)
            radius = bootstrap_radii(est_log, reps, [level])[0, index]
            record = BallCS(center, float(radius), level).to_record()
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    _emit(record, output)


@app.command()
def coverage(
    seed: Seed,
    output: Annotated[Path, typer.Option("--out", "-o", help="Report CSV")],
    curve: Curve = CurveId.C1,
    config: Annotated[
        Path | None, typer.Option("--config", help="StudyConfig JSON (overrides flags)")
    ] = None,
    J: Annotated[int, typer.Option("--J", help="Finest scale")] = 10,
    j0: Annotated[int | None, typer.Option("--j0", help="Smoothing scale J0")] = None,
    order: Order = 5,
    B: Annotated[int, typer.Option("--B", help="Bootstrap replicates")] = 100,
    K: Annotated[int, typer.Option("--K", help="Monte Carlo samples")] = 100,
    trim: Annotated[
        int, typer.Option("--trim", help="Grid points dropped at each end")
    ] = settings.boundary_trim,
    volume_samples: Annotated[
        int, typer.Option("--volume-samples", help="MC samples per volume (0 = skip)")
    ] = settings.volume_samples,
    target: Annotated[
        str, typer.Option("--target", help="truth or estimator_mean")
    ] = "truth",
    workers: Workers = settings.workers,
    points: Annotated[
        Path | None, typer.Option("--points", help="Per-point coverage CSV")
    ] = None,
) -> None:
    """Coverage and volume study of asymptotic and bootstrap confidence sets."""
    try:
        if config is not None:
            values = json.loads(config.read_text(encoding="utf-8"))
            values.setdefault("seed", seed)
            cfg = StudyConfig.model_validate(values)
        else:
            overrides = {
                "J": J, "N": order, "B": B, "K": K, "boundary_trim": trim,
                "volume_samples": volume_samples, "target": target, "workers": workers,
            }
            if j0 is not None:
                overrides["J0"] = j0
            cfg = StudyConfig.for_curve(curve, seed, **overrides)
        typer.echo(
            f"Running {cfg.K} samples on {cfg.curve.name} (J={cfg.J}, J0={cfg.J0})..."
        )
        report = coverage_study(cfg)
        sidecar = export_study_csv(report, output)
        if points is not None:
            export_point_coverage_csv(report, points)
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    typer.echo()
    typer.echo(f"{'Level':>7} {'Kind':<5} {'Coverage':>9} {'Scaled vol':>11}")
    typer.echo("-" * 35)
    for row in report.rows:
        cov_str = "-" if row.coverage is None else f"{row.coverage:.4f}"
        vol_str = "-" if row.scaled_volume is None else f"{row.scaled_volume:.4f}"
        typer.echo(f"{row.level:>7} {row.kind:<5} {cov_str:>9} {vol_str:>11}")
    typer.echo(f"Saved to {output} and {sidecar}")


@app.command("clt-check")
def clt_check_cmd(
    seed: Seed,
    J: Annotated[int, typer.Option("--J", help="Finest scale")] = 12,
    j0: Annotated[int, typer.Option("--j0", help="Smoothing scale J0")] = 6,
    order: Order = 3,
    x: Annotated[float, typer.Option("--x", help="Dyadic point in [0, 1)")] = 33 / 64,
    R: Annotated[int, typer.Option("--R", help="Monte Carlo replicates")] = 2000,
    with_bootstrap: Annotated[
        bool, typer.Option("--bootstrap", help="Also compare the bootstrap covariance")
    ] = False,
    B: Annotated[int, typer.Option("--B", help="Bootstrap replicates")] = 2000,
    output: JsonOut = None,
) -> None:
    """Check the estimator covariance against its asymptotic limit."""
    try:
        if with_bootstrap:
            report = bootstrap_validity_check(
                BootstrapValidityConfig(J=J, J0=j0, N=order, x=x, R=R, B=B, seed=seed)
            )
        else:
            report = clt_check(CltConfig(J=J, J0=j0, N=order, x=x, R=R, seed=seed))
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    _emit(report, output)


@app.command()
def mse(
    seed: Seed,
    curve: Curve = CurveId.C3,
    scales: Annotated[
        str, typer.Option("--Js", help="Comma-separated finest scales")
    ] = "8,10,12",
    order: Order = 3,
    reps: Annotated[int, typer.Option("--reps", help="Replicates per scale")] = 50,
    trim_fraction: Annotated[
        float, typer.Option("--trim-fraction", help="Fraction dropped at each end")
    ] = 0.0,
) -> None:
    """Mean squared log-Euclidean error for growing J."""
    try:
        Js = [int(s) for s in scales.split(",") if s.strip()]
        report = mse_trend(
            CurveSpec.builtin(curve), NoiseSpec.for_curve(curve), Js,
            N=order, reps=reps, seed=seed, trim_fraction=trim_fraction,
        )
    except Exception as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1) from e

    typer.echo(f"{'J':>3} {'J0':>3} {'MSE':>12} {'SE':>12}")
    for row in report.rows:
        typer.echo(f"{row.J:>3} {row.J0:>3} {row.mse:>12.6g} {row.se:>12.3g}")
