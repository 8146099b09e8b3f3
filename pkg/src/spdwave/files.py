"""Curve files and report writers."""

from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, model_validator

from spdwave.spd import MatrixRecord, SpdMat


class CurveFile(BaseModel):
    """JSON curve file: {"J": J, "matrices": [{"dim": d, "upper": [...]}, ...]}."""

    J: int
    matrices: list[MatrixRecord]

    @model_validator(mode="after")
    def _check_length(self) -> CurveFile:
        if self.J < 0:
            raise ValueError(f"J must be non-negative, got {self.J}")
        if len(self.matrices) != 2**self.J:
            raise ValueError(
                f"Curve file holds {len(self.matrices)} matrices, "
                f"J={self.J} needs {2**self.J}"
            )
        return self


def write_curve(matrices: list[SpdMat], output: Path) -> None:
    """Write 2^J SPD matrices as a curve file."""
    n = len(matrices)
    if n < 1 or n & (n - 1):
        raise ValueError(f"Curve length must be a power of two, got {n}")
    doc = CurveFile(J=n.bit_length() - 1, matrices=[m.to_record() for m in matrices])
    output.write_text(doc.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_curve(path: Path) -> list[SpdMat]:
    """Read a curve file; every matrix must be SPD."""
    doc = CurveFile.model_validate_json(path.read_text(encoding="utf-8"))
    return [SpdMat(SpdMat.from_record(r).entries) for r in doc.matrices]


def write_json(model: BaseModel, output: Path) -> None:
    output.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def export_study_csv(report, output: Path) -> Path:
    """Write one row per (level, kind) plus a JSON sidecar with the config.

    Returns:
        Path of the sidecar.
    """
    with output.open("w", encoding="utf-8") as f:
        f.write("level,kind,coverage,coverage_se,scaled_volume,volume_se\n")
        for row in report.rows:
            f.write(
                f"{row.level},{row.kind},{_fmt(row.coverage)},{_fmt(row.coverage_se)},"
                f"{_fmt(row.scaled_volume)},{_fmt(row.volume_se)}\n"
            )
    sidecar = output.with_suffix(".json")
    header = {
        "version": report.version,
        "gaussian_method": report.gaussian_method,
        "config": report.config,
    }
    sidecar.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    return sidecar


def export_point_coverage_csv(report, output: Path) -> None:
    """Per-point coverage: one row per grid point, one column per (kind, level)."""
    columns = [f"{p.kind}_{p.level}" for p in report.points]
    with output.open("w", encoding="utf-8") as f:
        f.write(",".join(["t", *columns]) + "\n")
        for i, t in enumerate(report.t):
            values = [repr(p.coverage[i]) for p in report.points]
            f.write(",".join([repr(t), *values]) + "\n")
