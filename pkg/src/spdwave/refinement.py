"""Intrinsic average-interpolation (AI) refinement.

Predicts the two children of a midpoint from a window of 2L+1 neighbouring
midpoints on the coarser scale.  Under the log-Euclidean metric the scheme
is linear in matrix logarithms, so everything below works on log-domain
arrays and exponentiates only at the edges of the public API.

The module also builds the transition matrices E_N/O_N that describe one
refinement step on a (4L+1)-point neighbourhood, their limit
E_inf = lim E_N^m and the variance constant kappa_N.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import cache, cached_property

import numpy as np

from spdwave.config import settings
from spdwave.errors import ConvergenceError, DimensionMismatchError
from spdwave.spd import SpdMat, SymMat, exp_stack, log_stack

logger = logging.getLogger(__name__)

# Authoritative weights (c_1, ..., c_L) for the even child, which uses
# (-c_L, ..., -c_1, 1, c_1, ..., c_L).  L=2 carries the sign that makes the
# scheme exact on cubics; derive_weights_neville reproduces every row.
WEIGHT_TABLE: dict[int, tuple[Fraction, ...]] = {
    0: (),
    1: (Fraction(-1, 8),),
    2: (Fraction(-22, 128), Fraction(3, 128)),
    3: (Fraction(-201, 1024), Fraction(44, 1024), Fraction(-5, 1024)),
}


# ── Weights ────────────────────────────────────────────────────────────────


def _neville(xs: Sequence, values: Sequence, x):
    """Neville's scheme written as repeated geodesic steps.

    P[i..j](x) = (1-u) P[i..j-1](x) + u P[i+1..j](x),  u = (x-x_i)/(x_j-x_i)

    Works for Fractions, floats and numpy arrays alike (log-domain values).
    """
    p = list(values)
    n = len(xs)
    for level in range(1, n):
        for i in range(n - level):
            j = i + level
            u = (x - xs[i]) / (xs[j] - xs[i])
            p[i] = (1 - u) * p[i] + u * p[i + 1]
    return p[0]


def _even_child(window: Sequence, L: int, number: type = Fraction):
    """Even child of the centre cell via cumulative means and interpolation.

    The cumulative mean over the first l cells (l = 1..N) is interpolated
    by a degree N-1 polynomial, evaluated at the centre cell's midpoint and
    extrapolated along the geodesic from the mean of the first L cells.
    """
    n = 2 * L + 1
    cumulative = []
    running = 0 * window[0]
    for count, value in enumerate(window, start=1):
        running = running + value
        cumulative.append(running / count)
    nodes = [number(x) for x in range(1, n + 1)]
    pi_mid = _neville(nodes, cumulative, number(2 * L + 1) / 2)
    if L == 0:
        return pi_mid
    return (2 * L + 1) * pi_mid - (2 * L) * cumulative[L - 1]


@cache
def _derived_fractions(L: int) -> tuple[Fraction, ...]:
    n = 2 * L + 1
    even = []
    for i in range(n):
        basis = [Fraction(int(i == m)) for m in range(n)]
        even.append(_even_child(basis, L))
    return tuple(even[L + 1 :])


def derive_weights_neville(L: int) -> np.ndarray:
    """Derive (c_1, ..., c_L) by running the scalar scheme on basis inputs.

    Exact rational arithmetic is used throughout, so the result is the
    true weight vector rounded once to floating point.
    """
    if L < 0:
        raise ValueError(f"L must be non-negative, got {L}")
    return np.array([float(c) for c in _derived_fractions(L)])


def prediction_weights(L: int) -> np.ndarray:
    """Weights (c_1, ..., c_L) of the order N = 2L+1 scheme."""
    if L < 0:
        raise ValueError(f"L must be non-negative, got {L}")
    if L in WEIGHT_TABLE:
        return np.array([float(c) for c in WEIGHT_TABLE[L]])
    return derive_weights_neville(L)


@dataclass(frozen=True)
class RefinementOrder:
    """Order N = 2L+1 of the AI scheme."""

    L: int

    def __post_init__(self) -> None:
        if self.L < 0:
            raise ValueError(f"L must be non-negative, got {self.L}")

    @classmethod
    def from_N(cls, N: int) -> RefinementOrder:
        if N < 1 or N % 2 == 0:
            raise ValueError(f"Refinement order N must be odd and >= 1, got {N}")
        return cls((N - 1) // 2)

    @property
    def N(self) -> int:
        return 2 * self.L + 1

    @cached_property
    def weights(self) -> np.ndarray:
        return prediction_weights(self.L)

    @cached_property
    def even_filter(self) -> np.ndarray:
        """(-c_L, ..., -c_1, 1, c_1, ..., c_L)."""
        c = self.weights
        return np.concatenate([-c[::-1], [1.0], c])

    @cached_property
    def odd_filter(self) -> np.ndarray:
        """(c_L, ..., c_1, 1, -c_1, ..., -c_L)."""
        return self.even_filter[::-1].copy()


# ── Prediction ─────────────────────────────────────────────────────────────


def _window_array(window: Sequence[SymMat] | np.ndarray) -> np.ndarray:
    if isinstance(window, np.ndarray):
        return window.astype(np.float64)
    dims = {w.dim for w in window}
    if len(dims) > 1:
        raise DimensionMismatchError(f"Window mixes dimensions {sorted(dims)}")
    return np.stack([w.entries for w in window])


def predict_pair(
    window: Sequence[SymMat] | np.ndarray, order: RefinementOrder
) -> tuple[SymMat, SymMat]:
    """Predict the (even, odd) children of the window centre.

    Args:
        window: 2L+1 log-domain midpoints centred at the parent.
        order: Refinement order.

    Returns:
        Log-domain (even, odd) predictions.  Their mean is the centre.
    """
    w = _window_array(window)
    if w.shape[0] != order.N:
        raise ValueError(
            f"Window has {w.shape[0]} entries, order N={order.N} needs {order.N}"
        )
    even = np.tensordot(order.even_filter, w, axes=1)
    odd = 2.0 * w[order.L] - even
    return SymMat(even), SymMat(odd)


def predict_pair_neville(
    window: Sequence[SymMat] | np.ndarray, L: int
) -> tuple[SymMat, SymMat]:
    """Same prediction computed the long way, by intrinsic Neville interpolation.

    Reference implementation used to cross-check predict_pair.
    """
    w = _window_array(window)
    if w.shape[0] != 2 * L + 1:
        raise ValueError(f"Window has {w.shape[0]} entries, L={L} needs {2 * L + 1}")
    # Float nodes keep the matrix arithmetic in float64.
    even = _even_child([w[i] for i in range(w.shape[0])], L, float)
    odd = 2.0 * w[L] - even
    return SymMat(even), SymMat(odd)


def reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Half-sample symmetric extension of indices into range(n).

    -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2, repeated periodically with
    period 2n so that any overhang lands in range.
    """
    m = np.mod(idx, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def predict_level(
    coarse: np.ndarray, order: RefinementOrder
) -> tuple[np.ndarray, np.ndarray]:
    """Predict all children of a log-domain level at once.

    Args:
        coarse: Array of shape (n, ...) holding the log-midpoints of one scale.
            Trailing dimensions are carried along (matrices, replicates).
        order: Refinement order.

    Returns:
        (even, odd) arrays of the same shape as ``coarse``.
    """
    n = coarse.shape[0]
    offsets = np.arange(-order.L, order.L + 1)
    idx = reflect_indices(np.arange(n)[:, None] + offsets[None, :], n)
    windows = coarse[idx]  # (n, 2L+1, ...)
    even = np.tensordot(windows, order.even_filter, axes=([1], [0]))
    odd = 2.0 * coarse - even
    return even, odd


def neville_interpolate(nodes: Sequence[tuple[float, SpdMat]], x: float) -> SpdMat:
    """Intrinsic polynomial through (x_i, P_i), evaluated at x.

    Under the log-Euclidean metric each Neville step is a geodesic, so the
    result is exp of the scalar Neville scheme applied to log P_i.
    """
    if len(nodes) == 0:
        raise ValueError("neville_interpolate needs at least one node")
    xs = [float(n[0]) for n in nodes]
    if any(b <= a for a, b in zip(xs, xs[1:], strict=False)):
        raise ValueError(f"Abscissae must be strictly increasing, got {xs}")
    logs = log_stack(np.stack([n[1].entries for n in nodes]))
    value = _neville(xs, [logs[i] for i in range(len(xs))], float(x))
    return SpdMat(exp_stack(value))


# ── Transition matrices ────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class TransitionMatrices:
    """One refinement step on a (4L+1)-point neighbourhood, and its limit."""

    order: RefinementOrder
    E: np.ndarray
    O: np.ndarray  # noqa: E741
    E_inf: np.ndarray
    kappa: float
    iterations: int


def _band_matrix(order: RefinementOrder, shift: int) -> np.ndarray:
    L = order.L
    size = 4 * L + 1
    out = np.zeros((size, size))
    for r in range(size):
        fine = r - 2 * L + shift
        parent = fine // 2
        filt = order.even_filter if fine % 2 == 0 else order.odd_filter
        start = parent + L
        out[r, start : start + 2 * L + 1] = filt
    return out


@cache
def build_transition(order: RefinementOrder) -> TransitionMatrices:
    """E_N, O_N, the limit E_inf = lim E_N^m and kappa_N.

    Raises:
        ConvergenceError: If E^m does not settle within settings.limit_max_iter.
    """
    E = _band_matrix(order, 0)
    O = _band_matrix(order, 1)  # noqa: E741
    power = E.copy()
    for m in range(1, settings.limit_max_iter + 1):
        nxt = power @ E
        if np.max(np.abs(nxt - power)) < settings.limit_tol:
            power = nxt
            break
        power = nxt
    else:
        raise ConvergenceError(
            f"E^m did not converge within {settings.limit_max_iter} iterations "
            f"for N={order.N}"
        )
    logger.debug("E_inf for N=%d converged after %d products", order.N, m)
    E.setflags(write=False)
    O.setflags(write=False)
    power.setflags(write=False)
    kappa = float(np.sum(power[0] ** 2))
    return TransitionMatrices(
        order=order, E=E, O=O, E_inf=power, kappa=kappa, iterations=m
    )


def kappa(N: int) -> float:
    """kappa_N = sum_i (E_inf)_{1,i}^2."""
    return build_transition(RefinementOrder.from_N(N)).kappa


def transition_product(order: RefinementOrder, digits: Sequence[int]) -> np.ndarray:
    """X_{d_m} ... X_{d_1} with X = E for digit 0 and O for digit 1."""
    tm = build_transition(order)
    out = np.eye(tm.E.shape[0])
    for digit in digits:
        if digit not in (0, 1):
            raise ValueError(f"Binary digits only, got {digit}")
        out = (tm.E if digit == 0 else tm.O) @ out
    return out
