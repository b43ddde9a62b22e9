"""Variance-swap fair values from risk-neutral moment term structures.

Under independent log-price increments the expected sum of squared daily
returns telescopes into first and second moments of the log price at the
remaining horizon, so a variance swap prices off a moment curve built from
fitted densities. Moments between pillar expiries interpolate linearly (means
directly, variances through their square roots). The module also replicates
swap values from quoted variance futures.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ExtrapolationError, MomentInversionWarning


@dataclass(frozen=True)
class MomentCurve:
    """Term structure of the risk-neutral mean and variance of the log price.

    Anchored at day 0 with mean ``log_spot`` and zero variance; pillars sit at
    strictly increasing positive day offsets.
    """

    log_spot: float
    days: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        days = np.array(self.days, dtype=int)
        means = np.array(self.means, dtype=float)
        variances = np.array(self.variances, dtype=float)
        if not (days.shape == means.shape == variances.shape) or days.ndim != 1:
            raise ValueError("days, means and variances must align")
        if days.size and (days[0] <= 0 or np.any(np.diff(days) <= 0)):
            raise ValueError("pillar days must be strictly increasing and positive")
        if np.any(variances < 0.0):
            raise ValueError("pillar variances must be nonnegative")
        if not math.isfinite(self.log_spot):
            raise ValueError("log spot must be finite")
        for arr in (days, means, variances):
            arr.setflags(write=False)
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def horizon(self) -> int:
        return int(self.days[-1]) if self.days.size else 0


def _bracket(curve: MomentCurve, day: int) -> int:
    if day < 0:
        raise ValueError("day offset must be nonnegative")
    if day > curve.horizon:
        raise ExtrapolationError(
            f"extrapolation refused: day {day} beyond last pillar {curve.horizon}"
        )
    return int(np.searchsorted(curve.days, day))


def interp_mean(curve: MomentCurve, day: int) -> float:
    """Mean log price at a day offset, linear between the anchor and pillars."""
    if day == 0:
        return curve.log_spot
    j = _bracket(curve, day)
    if curve.days[j] == day:
        return float(curve.means[j])
    if j == 0:
        n1 = float(curve.days[0])
        return float((day * curve.means[0] + (n1 - day) * curve.log_spot) / n1)
    lo, hi = float(curve.days[j - 1]), float(curve.days[j])
    w = (day - lo) / (hi - lo)
    return float((1.0 - w) * curve.means[j - 1] + w * curve.means[j])


def interp_variance(curve: MomentCurve, day: int) -> float:
    """Variance of the log price at a day offset.

    Square roots of the variances interpolate linearly (the variance term
    structure is roughly quadratic in the horizon), so the result is always a
    square and hence nonnegative.
    """
    if day == 0:
        return 0.0
    j = _bracket(curve, day)
    if curve.days[j] == day:
        return float(curve.variances[j])
    if j == 0:
        s = day * math.sqrt(float(curve.variances[0])) / float(curve.days[0])
        return s * s
    lo, hi = float(curve.days[j - 1]), float(curve.days[j])
    w = (day - lo) / (hi - lo)
    s = (1.0 - w) * math.sqrt(float(curve.variances[j - 1])) + w * math.sqrt(
        float(curve.variances[j])
    )
    return s * s


def second_moment_at(curve: MomentCurve, day: int) -> float:
    """Second raw moment of the log price at a day offset."""
    mean = interp_mean(curve, day)
    return mean * mean + interp_variance(curve, day)


def build_curve(pillars, spot: float) -> MomentCurve:
    """Moment pillars from fitted densities at their day offsets.

    ``pillars`` iterates over ``(days_to_expiry, density)`` pairs. A pillar
    whose implied variance is negative (a degenerate fit) is dropped with a
    warning rather than clamped.
    """
    if not spot > 0.0:
        raise ValueError("spot must be positive")
    rows = []
    for day, density in pillars:
        mean = density.mean_log()
        variance = density.second_moment_log() - mean * mean
        if variance < 0.0:
            warnings.warn(
                f"pillar at {day}d dropped: implied variance {variance:.3e} is negative",
                MomentInversionWarning,
                stacklevel=2,
            )
            continue
        rows.append((int(day), mean, variance))
    rows.sort(key=lambda r: r[0])
    days = [r[0] for r in rows]
    if len(set(days)) != len(days):
        raise ValueError("duplicate pillar days")
    return MomentCurve(
        log_spot=math.log(spot),
        days=np.array(days, dtype=int),
        means=np.array([r[1] for r in rows]),
        variances=np.array([r[2] for r in rows]),
    )


@dataclass(frozen=True)
class VarSwapSpec:
    """Contract terms plus the realized leg of a variance swap.

    ``total_days`` counts the trading days whose squared returns settle the
    swap; ``observed_days`` of them have been realized so far.
    """

    notional: float
    strike_var: float
    total_days: int
    observed_days: int
    realized_returns: np.ndarray
    cum_rate: float = 0.0
    trading_days_per_year: float = 252.0

    def __post_init__(self):
        realized = np.array(self.realized_returns, dtype=float)
        if self.total_days < 1:
            raise ValueError("total_days must be at least 1")
        if not 0 <= self.observed_days <= self.total_days:
            raise ValueError("observed_days must lie in [0, total_days]")
        if realized.shape != (self.observed_days,):
            raise ValueError("need one realized return per observed day")
        if not self.trading_days_per_year > 0.0:
            raise ValueError("trading_days_per_year must be positive")
        realized.setflags(write=False)
        object.__setattr__(self, "realized_returns", realized)


def varswap_price(spec: VarSwapSpec, curve: MomentCurve, day_offsets=None) -> float:
    """Discounted fair value of the swap given the moment curve.

    ``day_offsets`` maps the remaining trading days to curve day offsets (for
    calendars where trading days and curve days differ); it defaults to
    ``1..total_days - observed_days``. Offsets beyond the last pillar raise
    ExtrapolationError.
    """
    remaining = spec.total_days - spec.observed_days
    if day_offsets is None:
        day_offsets = np.arange(1, remaining + 1)
    day_offsets = np.asarray(day_offsets, dtype=int)
    if day_offsets.shape != (remaining,):
        raise ValueError(f"need {remaining} day offsets, got shape {day_offsets.shape}")
    if remaining and (day_offsets[0] <= 0 or np.any(np.diff(day_offsets) <= 0)):
        raise ValueError("day offsets must be strictly increasing and positive")
    per_year = spec.trading_days_per_year / spec.total_days
    realized = float(np.sum(np.square(spec.realized_returns)))
    log_spot_sq = curve.log_spot * curve.log_spot
    if remaining == 0:
        moment_gap = 0.0
        cross = 0.0
    else:
        means = np.array([interp_mean(curve, int(d)) for d in day_offsets])
        moment_gap = second_moment_at(curve, int(day_offsets[-1])) - log_spot_sq
        previous = np.concatenate(([curve.log_spot], means[:-1]))
        cross = float(np.sum(previous * means - previous * previous))
    # difference the two large squared-log terms before mixing them with the
    # small realized leg; adding then subtracting them would wipe its low bits
    braces = per_year * (realized + moment_gap - 2.0 * cross) - spec.strike_var
    return math.exp(-spec.cum_rate) * spec.notional * braces


def iug(window_returns, trading_days_per_year: float, start_day: int, end_day: int) -> float:
    """Squared implied volatility quote over a return window, scaled by 100^2.

    ``window_returns`` holds the daily returns for days ``start_day..end_day``
    inclusive.
    """
    if start_day < 1 or end_day < start_day:
        raise ValueError("need 1 <= start_day <= end_day")
    window = np.asarray(window_returns, dtype=float)
    length = end_day - start_day + 1
    if window.shape != (length,):
        raise ValueError(f"need {length} returns, got shape {window.shape}")
    return float(np.sum(np.square(window)) * trading_days_per_year / length * 100.0**2)


def replicate_from_future(
    realized_returns, iug_quote: float, start_day: int, end_day: int, spec: VarSwapSpec
) -> float:
    """Swap value replicated from a variance-future quote.

    ``realized_returns`` covers days ``1..start_day - 1``; ``iug_quote`` is the
    market quote for the remaining window ``start_day..end_day``. An empty
    window (``start_day == end_day + 1``, fully observed contract) weights the
    quote by zero and returns the realized value.
    """
    if start_day < 1 or end_day < start_day - 1:
        raise ValueError("need 1 <= start_day <= end_day + 1")
    realized = np.asarray(realized_returns, dtype=float)
    if realized.shape != (start_day - 1,):
        raise ValueError(f"need {start_day - 1} realized returns, got shape {realized.shape}")
    per_year = spec.trading_days_per_year / spec.total_days
    window = end_day - start_day + 1
    future_leg = iug_quote * window / spec.trading_days_per_year / 100.0**2
    braces = per_year * (float(np.sum(np.square(realized))) + future_leg) - spec.strike_var
    return math.exp(-spec.cum_rate) * spec.notional * braces
