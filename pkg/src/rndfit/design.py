"""Design matrices mapping step-density heights to undiscounted option prices.

Against a step density, the undiscounted price of an option at strike ``K_i``
decomposes into per-interval terms. For intervals at or below the strike the
put contribution of interval ``l`` is ``K_i*log(K_l/K_{l-1}) - (K_l-K_{l-1})``
per unit height; for intervals above the strike the call contribution is the
negated expression. The reduced forms eliminate the top-interval height via
the unit-mass constraint, leaving ``q`` coefficient columns plus a constant
offset column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import build_log_knots, grid_arrays
from .errors import GridError, InfeasibleHeightsError


def _raw_from_log_knots(log_knots):
    knots, dlog, dk = grid_arrays(log_knots)
    strikes = knots[1:-1]
    core = np.outer(strikes, dlog) - dk[None, :]
    rows = np.arange(strikes.size)[:, None]
    cols = np.arange(dlog.size)[None, :]
    # indicator by knot index: strike i sits at knot i+1, interval l spans
    # (knot l, knot l+1], so "K_i >= K_l" is row >= col and "K_i < K_l" is
    # row < col
    raw_put = np.where(rows >= cols, core, 0.0)
    raw_call = np.where(rows < cols, -core, 0.0)
    return raw_put, raw_call


def _reduce_from_log_knots(raw_put, raw_call, log_knots):
    dlog = np.diff(log_knots)
    scale = dlog[:-1] / dlog[-1]
    reduced = []
    for raw in (raw_put, raw_call):
        top = raw[:, -1]
        body = raw[:, :-1] - np.outer(top, scale)
        reduced.append(np.column_stack([body, top / dlog[-1]]))
    return reduced[0], reduced[1]


def build_raw(strikes, tail_factor):
    """Raw put/call matrices of shape (q, q+1).

    Entries are zero wherever the strike lies outside the interval's side of
    the payoff; all nonzero entries are positive.
    """
    return _raw_from_log_knots(build_log_knots(strikes, tail_factor))


def reduce_design(raw_put, raw_call, strikes, tail_factor):
    """Fold the top-interval column into the others via the unit-mass identity.

    Returns (reduced_put, reduced_call), each of shape (q, q+1): columns
    ``0..q-1`` multiply the free heights and column ``q`` is the constant
    offset.
    """
    return _reduce_from_log_knots(raw_put, raw_call, build_log_knots(strikes, tail_factor))


@dataclass(frozen=True)
class DesignSystem:
    """Raw and reduced design matrices for one strike grid."""

    strikes: np.ndarray
    tail_factor: float
    log_knots: np.ndarray
    raw_put: np.ndarray
    raw_call: np.ndarray
    reduced_put: np.ndarray
    reduced_call: np.ndarray

    @property
    def q(self) -> int:
        return self.strikes.size


def build_design(strikes, tail_factor) -> DesignSystem:
    log_knots = build_log_knots(strikes, tail_factor)
    raw_put, raw_call = _raw_from_log_knots(log_knots)
    reduced_put, reduced_call = _reduce_from_log_knots(raw_put, raw_call, log_knots)
    strikes = np.array(strikes, dtype=float)
    for arr in (strikes, log_knots, raw_put, raw_call, reduced_put, reduced_call):
        arr.setflags(write=False)
    return DesignSystem(
        strikes=strikes,
        tail_factor=float(tail_factor),
        log_knots=log_knots,
        raw_put=raw_put,
        raw_call=raw_call,
        reduced_put=reduced_put,
        reduced_call=reduced_call,
    )


def implied_top_height(design: DesignSystem, heights) -> float:
    """Top-interval height implied by unit mass for free heights ``a_1..a_q``."""
    dlog = np.diff(design.log_knots)
    return float((1.0 - np.asarray(heights, float) @ dlog[:-1]) / dlog[-1])


def discounted_prices(design: DesignSystem, heights, cum_rate: float = 0.0):
    """Put and call prices at every grid strike for free heights ``a_1..a_q``.

    The implied top-interval height must be nonnegative (within a small
    clamp); the ``exp(-cum_rate)`` discount is applied to both sides.
    """
    a = np.asarray(heights, dtype=float)
    if a.shape != (design.q,):
        raise GridError(f"expected {design.q} heights, got shape {a.shape}")
    top = implied_top_height(design, a)
    tol = 1e-12 * (1.0 + (float(np.max(np.abs(a))) if a.size else 0.0))
    if (a.size and float(a.min()) < -tol) or top < -tol:
        raise InfeasibleHeightsError(
            f"infeasible heights: min={float(a.min()) if a.size else 0.0:.3e}, top={top:.3e}"
        )
    disc = math.exp(-cum_rate)
    puts = disc * (design.reduced_put[:, :-1] @ a + design.reduced_put[:, -1])
    calls = disc * (design.reduced_call[:, :-1] @ a + design.reduced_call[:, -1])
    return puts, calls
