"""Tests for the wild bootstrap and bootstrap confidence balls."""

from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from spdwave.bootstrap import (
    TWO_POINT_HIGH,
    TWO_POINT_LOW,
    BootstrapConfig,
    MultiplierKind,
    bootstrap_ball,
    bootstrap_radii,
    multiplier_sample,
    order_statistic_index,
    pilot_residuals_log,
    wild_bootstrap,
    wild_bootstrap_log,
    wild_bootstrap_point_log,
)
from spdwave.pyramid import linear_estimate, linear_estimate_log
from spdwave.rng import RngStream
from spdwave.spd import SpdMat, exp_stack

I2 = SpdMat(np.eye(2))


def noisy_logs(sym_factory, J: int) -> np.ndarray:
    t = (np.arange(2**J) + 0.5) / 2**J
    trend = np.stack([np.array([[1 + t_, 0.5 * t_], [0.5 * t_, 2 - t_]]) for t_ in t])
    return trend + sym_factory(2, scale=0.1, n=2**J)


# ── Multipliers ───────────────────────────────────────────────────────────


def test_two_point_support_and_moments():
    v = multiplier_sample(MultiplierKind.TWO_POINT, RngStream(1).generator(), 40_000)
    assert set(np.unique(v)) == {TWO_POINT_LOW, TWO_POINT_HIGH}
    assert TWO_POINT_LOW == pytest.approx(-0.618034, abs=1e-6)
    assert TWO_POINT_HIGH == pytest.approx(1.618034, abs=1e-6)
    se = 1 / math.sqrt(v.size)
    assert abs(v.mean()) < 5 * se
    assert abs(np.mean(v**2) - 1) < 5 * se
    assert abs(np.mean(v**3) - 1) < 0.1


def test_gaussian_multipliers():
    v = multiplier_sample("gaussian", RngStream(2).generator(), 40_000)
    assert abs(v.mean()) < 5 / math.sqrt(v.size)
    assert np.var(v) == pytest.approx(1.0, abs=0.05)


def test_scalar_draws():
    assert isinstance(multiplier_sample("gaussian", RngStream(3).generator()), float)
    draw = multiplier_sample("two_point", RngStream(3).generator())
    assert draw in (TWO_POINT_LOW, TWO_POINT_HIGH)
    assert multiplier_sample(MultiplierKind.UNIT, RngStream(3).generator()) == 1.0
    np.testing.assert_array_equal(
        multiplier_sample("unit", RngStream(3).generator(), 4), 1.0
    )


def test_unknown_multiplier_kind():
    with pytest.raises(ValueError):
        multiplier_sample("rademacher", RngStream(3).generator())


# ── Configuration ─────────────────────────────────────────────────────────


def test_config_validation():
    with pytest.raises(ValidationError):
        BootstrapConfig(J0_star=4, J0=4, N=4, seed=1)
    with pytest.raises(ValidationError):
        BootstrapConfig(J0_star=4, J0=4, B=0, seed=1)
    with pytest.raises(ValidationError):
        BootstrapConfig(J0_star=4, J0=4, seed=-1)
    cfg = BootstrapConfig(J0_star=4, J0=3, N=3, seed=1)
    assert cfg.order.L == 1
    with pytest.raises(ValueError):
        cfg.validate_for(3)
    cfg.validate_for(4)


def test_scale_above_sample_rejected(sym_factory):
    cfg = BootstrapConfig(J0_star=6, J0=3, seed=1)
    with pytest.raises(ValueError):
        wild_bootstrap_log(sym_factory(2, n=32), cfg)


# ── Replicates ────────────────────────────────────────────────────────────


def test_constant_data_replicates_equal_estimate():
    s = SpdMat(np.array([[2.0, 0.4], [0.4, 1.0]]))
    data = [s] * 32
    cfg = BootstrapConfig(J0_star=3, J0=2, N=3, B=5, seed=9)
    reps = wild_bootstrap(data, cfg)
    assert len(reps) == 5
    assert all(len(rep) == 32 for rep in reps)
    estimate = linear_estimate(data, 2, cfg.order)
    for rep in reps:
        for a, b in zip(rep, estimate, strict=True):
            assert a.allclose(b, tol=1e-10)


def test_pilot_residuals_add_up(sym_factory):
    logs = noisy_logs(sym_factory, 6)
    cfg = BootstrapConfig(J0_star=4, J0=3, seed=1)
    pilot, resid = pilot_residuals_log(logs, cfg)
    np.testing.assert_allclose(pilot + resid, logs, atol=1e-14)
    np.testing.assert_allclose(pilot, linear_estimate_log(logs, 4, cfg.order))


def test_unit_multiplier_reproduces_estimate(sym_factory):
    logs = noisy_logs(sym_factory, 6)
    cfg = BootstrapConfig(J0_star=4, J0=3, B=3, multiplier="unit", seed=1)
    reps = wild_bootstrap_log(logs, cfg)
    expected = linear_estimate_log(logs, 3, cfg.order)
    for rep in reps:
        np.testing.assert_allclose(rep, expected, atol=1e-12)


def test_replicates_are_seed_deterministic(sym_factory):
    logs = noisy_logs(sym_factory, 6)
    cfg = BootstrapConfig(J0_star=4, J0=3, B=20, multiplier="two_point", seed=42)
    np.testing.assert_array_equal(
        wild_bootstrap_log(logs, cfg), wild_bootstrap_log(logs, cfg)
    )
    other = wild_bootstrap_log(logs, cfg.model_copy(update={"seed": 43}))
    assert not np.allclose(other, wild_bootstrap_log(logs, cfg))


def test_replicate_does_not_depend_on_batch_size(sym_factory):
    logs = noisy_logs(sym_factory, 6)
    cfg = BootstrapConfig(J0_star=4, J0=3, B=70, seed=5)
    many = wild_bootstrap_log(logs, cfg)
    few = wild_bootstrap_log(logs, cfg.model_copy(update={"B": 3}))
    np.testing.assert_allclose(many[:3], few, atol=1e-12)


def test_replicates_spread_around_estimate(sym_factory):
    logs = noisy_logs(sym_factory, 7)
    cfg = BootstrapConfig(J0_star=5, J0=4, N=3, B=200, seed=3)
    reps = wild_bootstrap_log(logs, cfg)
    estimate = linear_estimate_log(logs, 4, cfg.order)
    assert np.std(reps[:, 60, 0, 0]) > 0
    np.testing.assert_allclose(reps.mean(axis=0), estimate, atol=0.05)


def test_replicates_follow_orthogonal_congruence(sym_factory, orthogonal_factory):
    logs = noisy_logs(sym_factory, 6)
    o = orthogonal_factory(2)
    cfg = BootstrapConfig(J0_star=4, J0=3, N=5, B=10, seed=12)
    reps = wild_bootstrap_log(logs, cfg)
    turned = wild_bootstrap_log(o @ logs @ o.T, cfg)
    np.testing.assert_allclose(turned, o @ reps @ o.T, atol=1e-12)


def test_spd_replicates_follow_orthogonal_congruence(sym_factory, orthogonal_factory):
    stack = exp_stack(noisy_logs(sym_factory, 5))
    o = orthogonal_factory(2)
    turned_stack = o @ stack @ o.T
    turned_stack = 0.5 * (turned_stack + np.swapaxes(turned_stack, -1, -2))
    cfg = BootstrapConfig(J0_star=3, J0=2, B=3, seed=13)
    reps = wild_bootstrap([SpdMat(m) for m in stack], cfg)
    turned = wild_bootstrap([SpdMat(m) for m in turned_stack], cfg)
    for rep, rep_turned in zip(reps, turned, strict=True):
        for a, b in zip(rep, rep_turned, strict=True):
            assert b.allclose(o @ a.entries @ o.T, tol=1e-9)


@pytest.mark.parametrize("k", [0, 17, 63])
def test_point_path_matches_full_run(sym_factory, k):
    logs = noisy_logs(sym_factory, 6)
    cfg = BootstrapConfig(J0_star=4, J0=3, N=5, B=12, seed=8)
    full = wild_bootstrap_log(logs, cfg)
    point = wild_bootstrap_point_log(logs, cfg, k)
    assert point.shape == (12, 2, 2)
    np.testing.assert_allclose(point, full[:, k], atol=1e-10)


def test_explicit_stream_overrides_seed(sym_factory):
    logs = noisy_logs(sym_factory, 5)
    cfg = BootstrapConfig(J0_star=3, J0=2, B=4, seed=1)
    stream = RngStream(1, (1,))
    a = wild_bootstrap_log(logs, cfg, stream)
    b = wild_bootstrap_log(logs, cfg)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, wild_bootstrap_log(logs, cfg, RngStream(1, (1,))))


# ── Confidence balls ──────────────────────────────────────────────────────


def test_order_statistic_index():
    assert order_statistic_index(10, 0.9) == 8
    assert order_statistic_index(100, 0.95) == 94
    assert order_statistic_index(2000, 0.99) == 1979
    assert order_statistic_index(1, 0.5) == 0
    assert order_statistic_index(3, 0.01) == 0
    with pytest.raises(ValueError):
        order_statistic_index(0, 0.9)
    with pytest.raises(ValueError):
        order_statistic_index(10, 1.0)


def test_ball_with_equidistant_replicates():
    reps = [SpdMat(np.diag([math.e, 1.0])), SpdMat(np.diag([1.0, math.e]))] * 5
    for level in (0.1, 0.5, 0.99):
        assert bootstrap_ball(I2, reps, level).radius == pytest.approx(1.0, abs=1e-12)


def test_ball_radius_is_order_statistic():
    reps = [SpdMat(np.diag([math.exp(0.1 * i), 1.0])) for i in range(10, 0, -1)]
    ball = bootstrap_ball(I2, reps, 0.9)
    assert ball.radius == pytest.approx(0.9, abs=1e-12)
    assert ball.level == 0.9
    assert ball.center == I2
    with pytest.raises(ValueError):
        bootstrap_ball(I2, [], 0.9)


def test_radii_grow_with_level(sym_factory):
    logs = noisy_logs(sym_factory, 6)
    cfg = BootstrapConfig(J0_star=4, J0=3, B=100, seed=2)
    reps = wild_bootstrap_log(logs, cfg)
    estimate = linear_estimate_log(logs, 3, cfg.order)
    radii = bootstrap_radii(estimate, reps, [0.5, 0.9, 0.95, 0.99])
    assert radii.shape == (4, 64)
    assert np.all(np.diff(radii, axis=0) >= 0)


def test_radii_agree_with_ball(sym_factory):
    logs = noisy_logs(sym_factory, 5)
    cfg = BootstrapConfig(J0_star=3, J0=2, B=40, seed=6)
    reps = wild_bootstrap_log(logs, cfg)
    estimate = linear_estimate_log(logs, 2, cfg.order)
    radii = bootstrap_radii(estimate, reps, [0.9])
    k = 11
    ball = bootstrap_ball(
        SpdMat(exp_stack(estimate[k])), [SpdMat(m) for m in exp_stack(reps[:, k])], 0.9
    )
    assert ball.radius == pytest.approx(radii[0, k], abs=1e-9)
