"""Tests for curve files and report writers."""

from __future__ import annotations

import json

import numpy as np
import pytest
from pydantic import ValidationError

from spdwave.curves import CurveSpec, NoiseSpec
from spdwave.errors import NotPositiveDefiniteError
from spdwave.files import (
    CurveFile,
    export_point_coverage_csv,
    export_study_csv,
    read_curve,
    write_curve,
)
from spdwave.spd import SpdMat
from spdwave.study import StudyConfig, coverage_study


def test_curve_round_trip(tmp_path):
    mats = [SpdMat(np.array([[2.0 + k, 0.1 * k], [0.1 * k, 1.0]])) for k in range(4)]
    path = tmp_path / "c.json"
    write_curve(mats, path)
    doc = json.loads(path.read_text())
    assert doc["J"] == 2
    assert doc["matrices"][1] == {"dim": 2, "upper": [3.0, 0.1, 1.0]}
    assert read_curve(path) == mats


def test_curve_length_must_be_dyadic(tmp_path):
    mats = [SpdMat(np.eye(2))] * 3
    with pytest.raises(ValueError):
        write_curve(mats, tmp_path / "c.json")
    with pytest.raises(ValidationError):
        CurveFile(J=2, matrices=[SpdMat(np.eye(2)).to_record()] * 3)


def test_read_rejects_non_spd(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps({"J": 0, "matrices": [{"dim": 2, "upper": [1.0, 2.0, 1.0]}]})
    )
    with pytest.raises(NotPositiveDefiniteError):
        read_curve(path)


def test_study_exports(tmp_path):
    cfg = StudyConfig(
        curve=CurveSpec.constant(SpdMat(np.eye(2))),
        noise=NoiseSpec(sigma_11=0, sigma_22=0, sigma_12=0),
        J=4,
        J0=2,
        K=2,
        B=5,
        boundary_trim=1,
        volume_samples=0,
        seed=3,
    )
    report = coverage_study(cfg)
    out = tmp_path / "study.csv"
    sidecar = export_study_csv(report, out)
    lines = out.read_text().splitlines()
    assert lines[1] == "0.9,asym,,,,"
    assert lines[2] == "0.9,boot,1.0,0.0,,"
    header = json.loads(sidecar.read_text())
    assert header["config"]["J0"] == 2
    assert header["gaussian_method"].startswith("numpy")

    points = tmp_path / "points.csv"
    export_point_coverage_csv(report, points)
    rows = points.read_text().splitlines()
    assert rows[0] == "t,boot_0.9,boot_0.95,boot_0.975"
    assert len(rows) == 1 + 14
    assert rows[1].split(",")[0] == repr(3 / 32)
