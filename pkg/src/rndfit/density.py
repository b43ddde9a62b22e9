"""Step-function densities for the log of an asset price.

The density lives on a knot grid derived from option strikes: the strikes in
log scale, extended by one interval of width ``log(tail_factor)`` on each
side so the outer intervals can hold tail mass. Heights are constant on each
interval, nonnegative, and integrate to one over the grid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GridError

MASS_TOLERANCE = 1e-8
HEIGHT_CLAMP = 1e-12


def build_log_knots(strikes, tail_factor: float) -> np.ndarray:
    """Knot vector ``[log K_0, log K_1, ..., log K_q, log K_{q+1}]``.

    ``K_0 = K_1 / tail_factor`` and ``K_{q+1} = K_q * tail_factor`` extend the
    strike range by one interval on each side.
    """
    strikes = np.asarray(strikes, dtype=float)
    if strikes.ndim != 1 or strikes.size < 1:
        raise GridError("need at least one strike")
    if np.any(strikes <= 0.0):
        raise GridError("strikes must be positive")
    if np.any(np.diff(strikes) <= 0.0):
        raise GridError("strikes must be strictly increasing")
    if not tail_factor > 1.0:
        raise GridError(f"tail factor must exceed 1, got {tail_factor}")
    knots = np.concatenate(
        ([strikes[0] / tail_factor], strikes, [strikes[-1] * tail_factor])
    )
    return np.log(knots)


def grid_arrays(log_knots):
    """Knot prices, log-interval widths and price-interval widths.

    Shared by the density and the design matrices so both sides of identities
    such as put-call parity see the same grid geometry. The price widths use
    ``expm1`` to avoid cancellation on very narrow intervals.
    """
    log_knots = np.asarray(log_knots, dtype=float)
    knots = np.exp(log_knots)
    dlog = np.diff(log_knots)
    dk = knots[:-1] * np.expm1(dlog)
    return knots, dlog, dk


@dataclass(frozen=True)
class PiecewiseDensity:
    """Piecewise-constant density of the log price.

    ``heights[l]`` applies on the interval ``(log_knots[l], log_knots[l+1]]``
    and the density is zero outside the grid. Construction rejects negative
    heights (beyond a 1e-12 clamp) and any total mass off unity by more than
    1e-8.
    """

    tail_factor: float
    log_knots: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        log_knots = np.array(self.log_knots, dtype=float)
        heights = np.array(self.heights, dtype=float)
        if log_knots.ndim != 1 or log_knots.size < 3:
            raise GridError("need at least three knots")
        if heights.shape != (log_knots.size - 1,):
            raise GridError("need exactly one height per knot interval")
        widths = np.diff(log_knots)
        if np.any(widths <= 0.0):
            raise GridError("knots must be strictly increasing")
        if not self.tail_factor > 1.0:
            raise GridError("tail factor must exceed 1")
        log_cf = math.log(self.tail_factor)
        tol = 1e-12 * max(1.0, log_cf)
        if abs(widths[0] - log_cf) > tol or abs(widths[-1] - log_cf) > tol:
            raise GridError("outer intervals must both have width log(tail_factor)")
        if float(heights.min()) < -HEIGHT_CLAMP:
            raise GridError(f"negative height {float(heights.min()):.3e}")
        heights = np.maximum(heights, 0.0)
        mass = float(np.sum(heights * widths))
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise GridError(f"total mass {mass!r} differs from 1 beyond {MASS_TOLERANCE}")
        heights.setflags(write=False)
        log_knots.setflags(write=False)
        object.__setattr__(self, "log_knots", log_knots)
        object.__setattr__(self, "heights", heights)

    @classmethod
    def from_heights(cls, strikes, tail_factor, heights):
        return cls(tail_factor, build_log_knots(strikes, tail_factor), heights)

    @cached_property
    def knots(self) -> np.ndarray:
        k = np.exp(self.log_knots)
        k.setflags(write=False)
        return k

    @property
    def strikes(self) -> np.ndarray:
        return self.knots[1:-1]

    @property
    def q(self) -> int:
        return self.log_knots.size - 2

    def total_mass(self) -> float:
        return float(np.sum(self.heights * np.diff(self.log_knots)))

    def mean_log(self) -> float:
        """First moment of the log price."""
        u = self.log_knots
        return float(np.sum(self.heights / 2.0 * (u[1:] ** 2 - u[:-1] ** 2)))

    def second_moment_log(self) -> float:
        """Second raw moment of the log price."""
        u = self.log_knots
        return float(np.sum(self.heights / 3.0 * (u[1:] ** 3 - u[:-1] ** 3)))

    def variance_log(self) -> float:
        m = self.mean_log()
        return self.second_moment_log() - m * m

    def first_price_moment(self) -> float:
        """Expected asset price, ``sum_l a_l (K_l - K_{l-1})``."""
        _, _, dk = grid_arrays(self.log_knots)
        return float(np.sum(self.heights * dk))

    def pdf(self, y):
        """Density value at log price(s) ``y`` (zero outside the grid)."""
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.log_knots, y, side="left") - 1
        inside = (idx >= 0) & (idx < self.heights.size) & (y > self.log_knots[0])
        out = np.zeros_like(y, dtype=float)
        out[inside] = self.heights[idx[inside]]
        return out if out.ndim else float(out)

    def cdf(self, y):
        """Cumulative mass up to log price(s) ``y`` (piecewise linear)."""
        cum = np.concatenate(([0.0], np.cumsum(self.heights * np.diff(self.log_knots))))
        return np.interp(y, self.log_knots, cum, left=0.0, right=float(cum[-1]))


def project_density(dist, strikes, tail_factor) -> PiecewiseDensity:
    """Cell-average a reference log-price distribution onto the strike grid.

    ``dist`` must expose a ``cdf`` method over log prices. Interior heights
    average the reference density over their interval; the two outer
    intervals absorb the full lower and upper tails, so the result always has
    unit mass.
    """
    log_knots = build_log_knots(strikes, tail_factor)
    cdf_vals = np.asarray(dist.cdf(log_knots[1:-1]), dtype=float)
    widths = np.diff(log_knots)
    masses = np.empty(widths.size)
    masses[0] = cdf_vals[0]
    if cdf_vals.size > 1:
        masses[1:-1] = np.diff(cdf_vals)
    masses[-1] = 1.0 - cdf_vals[-1]
    return PiecewiseDensity(tail_factor, log_knots, masses / widths)


def write_density(path, density: PiecewiseDensity, metadata=None) -> None:
    """Write interval rows to CSV plus a JSON sidecar with metadata."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log_knot_lower", "log_knot_upper", "height"])
        for lo, hi, h in zip(density.log_knots[:-1], density.log_knots[1:], density.heights):
            writer.writerow([repr(float(lo)), repr(float(hi)), repr(float(h))])
    meta = {"tail_factor": density.tail_factor}
    meta.update(metadata or {})
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_density(path) -> PiecewiseDensity:
    """Rebuild a density from its CSV (tail factor from the sidecar if present)."""
    path = Path(path)
    lowers, uppers, heights = [], [], []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            lowers.append(float(row["log_knot_lower"]))
            uppers.append(float(row["log_knot_upper"]))
            heights.append(float(row["height"]))
    if not lowers:
        raise GridError("empty density file")
    log_knots = np.array(lowers + [uppers[-1]])
    if not np.allclose(log_knots[1:-1], uppers[:-1], rtol=0.0, atol=0.0):
        raise GridError("interval bounds do not chain")
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        tail_factor = float(json.loads(sidecar.read_text())["tail_factor"])
    else:
        tail_factor = math.exp(log_knots[1] - log_knots[0])
    return PiecewiseDensity(tail_factor, log_knots, np.array(heights))
