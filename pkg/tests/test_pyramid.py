"""Tests for the midpoint pyramid, the AI wavelet transform and the linear estimator."""

from __future__ import annotations

import math

import numpy as np
import pytest

from spdwave.pyramid import (
    WaveletPyramid,
    backward_transform,
    backward_transform_log,
    build_pyramid,
    forward_transform,
    forward_transform_log,
    lift_weights,
    linear_estimate,
    linear_estimate_log,
    refine_log,
)
from spdwave.refinement import RefinementOrder
from spdwave.rng import RngStream
from spdwave.spd import SpdMat, exp_stack, le_distance, log_stack, weighted_ave

E = math.e


def scalar_curve(*logs: float) -> list[SpdMat]:
    return [SpdMat(np.array([[math.exp(v)]])) for v in logs]


def random_curve(sym_factory, J: int, d: int = 2, scale: float = 1.0) -> np.ndarray:
    """2^J SPD matrices as a stack."""
    return exp_stack(sym_factory(d, scale, n=2**J))


def congruence(stack: np.ndarray, o: np.ndarray) -> np.ndarray:
    out = o @ stack @ o.T
    return 0.5 * (out + np.swapaxes(out, -1, -2))


# ── Midpoint pyramid ──────────────────────────────────────────────────────


def test_pyramid_two_points():
    pyr = build_pyramid([SpdMat(np.eye(2)), SpdMat(np.diag([E**2, E**2]))])
    assert pyr.J == 1
    assert pyr.level(0)[0].allclose(np.diag([E, E]))


def test_pyramid_constant_levels():
    s = SpdMat(np.array([[2.0, 0.5], [0.5, 1.0]]))
    pyr = build_pyramid([s] * 8)
    for j in range(4):
        assert len(pyr.level(j)) == 2**j
        assert all(m.allclose(s) for m in pyr.level(j))


def test_pyramid_scalar_logs():
    pyr = build_pyramid(scalar_curve(0, 2, 4, 6))
    np.testing.assert_allclose(pyr.log_levels[1].ravel(), [1.0, 5.0])
    np.testing.assert_allclose(pyr.log_levels[0].ravel(), [3.0])


def test_pyramid_levels_are_midpoints(sym_factory):
    pyr = build_pyramid(random_curve(sym_factory, 4))
    for j in range(4):
        fine = pyr.level(j + 1)
        for k, m in enumerate(pyr.level(j)):
            mid = weighted_ave([fine[2 * k], fine[2 * k + 1]], [0.5, 0.5])
            assert m.allclose(mid, tol=1e-10)


def test_pyramid_rejects_non_dyadic_length():
    with pytest.raises(ValueError):
        build_pyramid([SpdMat(np.eye(2))] * 3)


def test_determinant_no_swelling(sym_factory):
    J = 5
    stack = random_curve(sym_factory, J, d=3)
    pyr = build_pyramid(stack)
    finest_logdet = np.log(np.linalg.det(stack))
    for j in range(J + 1):
        block = 2 ** (J - j)
        expected = np.exp(finest_logdet.reshape(2**j, block).mean(axis=1))
        dets = np.array([np.linalg.det(m.entries) for m in pyr.level(j)])
        np.testing.assert_allclose(dets, expected, rtol=1e-8)


# ── Forward / backward transform ──────────────────────────────────────────


def test_forward_constant_input():
    s = SpdMat(np.array([[3.0, 1.0], [1.0, 2.0]]))
    pyr = forward_transform([s] * 16, RefinementOrder.from_N(5))
    assert pyr.coarsest.allclose(s)
    assert pyr.energy() == pytest.approx(0.0, abs=1e-24)


def test_forward_scalar_example():
    pyr = forward_transform(scalar_curve(0, 2), RefinementOrder(0))
    assert pyr.coarsest.entries[0, 0] == pytest.approx(E)
    assert pyr.scale(1)[0].entries[0, 0] == pytest.approx(1 / math.sqrt(2))
    out = backward_transform(pyr)
    assert out[0].allclose(np.eye(1))
    assert out[1].allclose(np.array([[E**2]]))


def test_forward_needs_two_points():
    with pytest.raises(ValueError):
        forward_transform([SpdMat(np.eye(2))], RefinementOrder(1))


@pytest.mark.parametrize("N", [3, 5, 7])
def test_geodesic_input_has_zero_interior_coefficients(sym_factory, N):
    order = RefinementOrder.from_N(N)
    a, b = sym_factory(2), sym_factory(2)
    J = 4
    logs = np.stack([a + (k + 0.5) / 2**J * b for k in range(2**J)])
    _, coeffs = forward_transform_log(logs, order)
    for j, c in enumerate(coeffs, start=1):
        n_coarse = 2 ** (j - 1)
        for k in range(order.L, n_coarse - order.L):
            np.testing.assert_allclose(c[k], 0.0, atol=1e-10)


def test_backward_zero_coefficients_constant():
    order = RefinementOrder(1)
    coarsest = np.array([[3.0]])
    coeffs = tuple(np.zeros((2 ** (j - 1), 1, 1)) for j in (1, 2))
    out = backward_transform_log(coarsest, coeffs, order)
    np.testing.assert_allclose(out.ravel(), [3.0, 3.0, 3.0, 3.0], atol=1e-15)


@pytest.mark.parametrize("L", [0, 1, 2, 3])
def test_perfect_reconstruction(sym_factory, L):
    stack = random_curve(sym_factory, 6, d=3, scale=2.0)
    out = backward_transform(forward_transform(stack, RefinementOrder(L)))
    for s, r in zip(stack, out, strict=True):
        assert r.allclose(s, tol=1e-10)


@pytest.mark.parametrize("N", [1, 3, 5, 7])
@pytest.mark.parametrize("J", [4, 5, 6, 7, 8])
@pytest.mark.parametrize("d", [2, 3])
def test_perfect_reconstruction_sweep(sym_factory, d, J, N):
    order = RefinementOrder.from_N(N)
    for _ in range(5):
        stack = random_curve(sym_factory, J, d=d, scale=2.0)
        out = backward_transform(forward_transform(stack, order))
        errors = [
            np.linalg.norm(r.entries - s) for s, r in zip(stack, out, strict=True)
        ]
        assert max(errors) < 1e-9


def test_reconstruction_of_log_replicates(sym_factory):
    order = RefinementOrder(2)
    logs = sym_factory(2, n=32 * 4).reshape(32, 4, 2, 2)
    coarsest, coeffs = forward_transform_log(logs, order)
    np.testing.assert_allclose(
        backward_transform_log(coarsest, coeffs, order), logs, atol=1e-12
    )


def test_wavelet_pyramid_shape_checks():
    order = RefinementOrder(1)
    coarsest = np.zeros((2, 2))
    with pytest.raises(ValueError):
        WaveletPyramid(
            J=2, coarsest_log=coarsest, coeffs=(np.zeros((1, 2, 2)),), order=order
        )
    with pytest.raises(ValueError):
        WaveletPyramid(
            J=1, coarsest_log=coarsest, coeffs=(np.zeros((2, 2, 2)),), order=order
        )


def test_scale_accessor_bounds(sym_factory):
    pyr = forward_transform(random_curve(sym_factory, 3), RefinementOrder(1))
    assert len(pyr.scale(3)) == 4
    with pytest.raises(ValueError):
        pyr.scale(0)
    with pytest.raises(ValueError):
        pyr.scale(4)


def test_truncated_matches_linear_estimate(sym_factory):
    order = RefinementOrder(1)
    stack = random_curve(sym_factory, 5)
    pyr = forward_transform(stack, order)
    truncated = pyr.truncated(2)
    assert all(np.all(c == 0) for c in truncated.coeffs[2:])
    rebuilt = backward_transform(truncated)
    estimate = linear_estimate(stack, 2, order)
    for a, b in zip(rebuilt, estimate, strict=True):
        assert a.allclose(b, tol=1e-10)


def test_energy_invariant_under_congruence(sym_factory, orthogonal_factory):
    order = RefinementOrder(1)
    stack = random_curve(sym_factory, 5, d=3)
    o = orthogonal_factory(3)
    e1 = forward_transform(stack, order).energy()
    e2 = forward_transform(congruence(stack, o), order).energy()
    assert e2 == pytest.approx(e1, rel=1e-9)


# ── Linear estimator ──────────────────────────────────────────────────────


def test_linear_estimate_identity_at_finest_scale(sym_factory):
    stack = random_curve(sym_factory, 4)
    out = linear_estimate(stack, 4, RefinementOrder(1))
    for s, r in zip(stack, out, strict=True):
        np.testing.assert_array_equal(r.entries, s)


def test_linear_estimate_constant_data():
    s = SpdMat(np.array([[2.0, 0.3], [0.3, 1.0]]))
    for J0 in range(4):
        out = linear_estimate([s] * 8, J0, RefinementOrder(1))
        assert all(m.allclose(s) for m in out)


def test_linear_estimate_full_smoothing():
    out = linear_estimate(scalar_curve(*range(8)), 0, RefinementOrder(0))
    np.testing.assert_allclose(
        [math.log(m.entries[0, 0]) for m in out], [3.5] * 8, atol=1e-12
    )


def test_linear_estimate_rejects_bad_scale(sym_factory):
    stack = random_curve(sym_factory, 3)
    with pytest.raises(ValueError):
        linear_estimate(stack, 4, RefinementOrder(1))
    with pytest.raises(ValueError):
        linear_estimate(stack, -1, RefinementOrder(1))


def test_linear_estimate_orthogonal_equivariance(sym_factory, orthogonal_factory):
    order = RefinementOrder.from_N(5)
    stack = random_curve(sym_factory, 6, d=3)
    o = orthogonal_factory(3)
    plain = linear_estimate(stack, 3, order)
    rotated = linear_estimate(congruence(stack, o), 3, order)
    for p, r in zip(plain, rotated, strict=True):
        assert r.allclose(o @ p.entries @ o.T, tol=1e-9)


def test_linear_estimate_permutation_equivariance(sym_factory):
    order = RefinementOrder(1)
    stack = random_curve(sym_factory, 5, d=3)
    perm = np.eye(3)[[2, 0, 1]]
    plain = linear_estimate(stack, 2, order)
    permuted = linear_estimate(congruence(stack, perm), 2, order)
    for p, r in zip(plain, permuted, strict=True):
        assert r.allclose(perm @ p.entries @ perm.T, tol=1e-10)


def test_lift_weights_reproduce_linear_estimate(sym_factory):
    order = RefinementOrder(1)
    J, J0 = 6, 3
    logs = sym_factory(2, n=2**J)
    estimate = linear_estimate_log(logs, J0, order)
    coarse = logs.reshape(2**J0, 2 ** (J - J0), 2, 2).mean(axis=1)
    for k in (0, 5, 31, 63):
        alpha = lift_weights(J, J0, order, k)
        assert alpha.shape == (2**J0,)
        assert alpha.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(
            np.tensordot(alpha, coarse, axes=1), estimate[k], atol=1e-12
        )


def test_lift_weights_validation():
    order = RefinementOrder(1)
    with pytest.raises(ValueError):
        lift_weights(4, 5, order, 0)
    with pytest.raises(ValueError):
        lift_weights(4, 2, order, 16)


def test_refine_log_keeps_midpoints(sym_factory):
    coarse = sym_factory(2, n=8)
    fine = refine_log(coarse, RefinementOrder(2))
    np.testing.assert_allclose(0.5 * (fine[0::2] + fine[1::2]), coarse, atol=1e-14)
    assert log_stack(exp_stack(fine)).shape == fine.shape


# ── Randomised invariants ─────────────────────────────────────────────────


def random_instance(batch: int, i: int):
    rng = RngStream(404, (batch, i)).generator()
    d = int(rng.integers(2, 4))
    J = int(rng.integers(3, 6))
    order = RefinementOrder.from_N(int(rng.choice([1, 3, 5])))
    a = rng.uniform(-1.5, 1.5, size=(2**J, d, d))
    stack = exp_stack(0.5 * (a + np.swapaxes(a, -1, -2)))
    if i % 2:
        o = np.eye(d)[rng.permutation(d)]
    else:
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        o = q * np.sign(np.diag(r))
    return rng, stack, order, o


@pytest.mark.parametrize("batch", range(10))
def test_equivariance_and_no_swelling_sweep(batch):
    for i in range(50):
        rng, stack, order, o = random_instance(batch, i)
        J = int(math.log2(stack.shape[0]))
        J0 = int(rng.integers(0, J + 1))
        rotated = congruence(stack, o)

        s1, s2 = SpdMat(stack[0]), SpdMat(stack[-1])
        r1, r2 = SpdMat(rotated[0]), SpdMat(rotated[-1])
        assert le_distance(r1, r2) == pytest.approx(le_distance(s1, s2), abs=1e-9)

        w = rng.dirichlet(np.ones(4))
        mats = [SpdMat(m) for m in stack[:4]]
        det = np.linalg.det(weighted_ave(mats, w).entries)
        dets = [np.linalg.det(m.entries) for m in mats]
        expected = math.prod(v**wi for v, wi in zip(dets, w, strict=True))
        assert det == pytest.approx(expected, rel=1e-9)

        plain = linear_estimate(stack, J0, order)
        turned = linear_estimate(rotated, J0, order)
        for p, r in zip(plain, turned, strict=True):
            assert r.allclose(o @ p.entries @ o.T, tol=1e-9)

        finest_logdet = np.log(np.linalg.det(stack))
        top = build_pyramid(stack).level(0)[0]
        expected_top = math.exp(finest_logdet.mean())
        assert np.linalg.det(top.entries) == pytest.approx(expected_top, rel=1e-8)
