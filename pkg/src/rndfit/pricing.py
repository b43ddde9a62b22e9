"""Fair option prices from a fitted density, moneyness, and error metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import PiecewiseDensity
from .design import DesignSystem, build_design, discounted_prices
from .errors import GridError, NoTestOptionsError, ZeroPriceMetricError
from .market_data import CALL, OptionChain

OTM = "OTM"
ITM = "ITM"


def classify_moneyness(strike: float, spot: float, side: str) -> str:
    """Calls above spot and puts below spot are OTM; at-the-money counts as ITM."""
    if not spot > 0.0:
        raise ValueError("spot must be positive")
    if side == CALL:
        return OTM if strike > spot else ITM
    return OTM if strike < spot else ITM


def price_chain(density: PiecewiseDensity, chain: OptionChain, design: DesignSystem | None = None):
    """Fair put and call prices at every chain strike.

    The density must sit on the chain's strike grid; prices go through the
    design matrices and carry the chain's discount factor.
    """
    if density.q != chain.q or not np.allclose(
        density.strikes, chain.strikes, rtol=1e-12, atol=0.0
    ):
        raise GridError("density grid does not match chain strikes")
    if design is None:
        design = build_design(chain.strikes, density.tail_factor)
    elif design.log_knots.shape != density.log_knots.shape or not np.array_equal(
        design.log_knots, density.log_knots
    ):
        raise GridError("design grid does not match density grid")
    return discounted_prices(design, density.heights[:-1], chain.cum_rate)


def put_price(density: PiecewiseDensity, strike: float, cum_rate: float = 0.0) -> float:
    """Discounted expectation of ``(strike - S)^+``; the strike need not be a knot."""
    if not strike > 0.0:
        raise ValueError("strike must be positive")
    u = math.log(strike)
    lk = density.log_knots
    upper = np.minimum(lk[1:], u)
    active = upper > lk[:-1]
    if not np.any(active):
        return 0.0
    contrib = density.heights[active] * (
        strike * (upper[active] - lk[:-1][active])
        - (np.exp(upper[active]) - density.knots[:-1][active])
    )
    return math.exp(-cum_rate) * float(np.sum(contrib))


def call_price(density: PiecewiseDensity, strike: float, cum_rate: float = 0.0) -> float:
    """Discounted expectation of ``(S - strike)^+``; the strike need not be a knot."""
    if not strike > 0.0:
        raise ValueError("strike must be positive")
    u = math.log(strike)
    lk = density.log_knots
    lower = np.maximum(lk[:-1], u)
    active = lk[1:] > lower
    if not np.any(active):
        return 0.0
    contrib = density.heights[active] * (
        (density.knots[1:][active] - np.exp(lower[active]))
        - strike * (lk[1:][active] - lower[active])
    )
    return math.exp(-cum_rate) * float(np.sum(contrib))


def error_metrics(fitted_calls, market_calls, fitted_puts, market_puts):
    """Root-mean-square absolute and relative pricing errors over a test set.

    Returns ``(abs_error, rel_error)``; the relative error uses price-ratio
    residuals and requires strictly positive market prices.
    """
    fc = np.atleast_1d(np.asarray(fitted_calls, dtype=float))
    mc = np.atleast_1d(np.asarray(market_calls, dtype=float))
    fp = np.atleast_1d(np.asarray(fitted_puts, dtype=float))
    mp = np.atleast_1d(np.asarray(market_puts, dtype=float))
    if fc.shape != mc.shape or fp.shape != mp.shape:
        raise ValueError("fitted and market arrays must align")
    count = fc.size + fp.size
    if count == 0:
        raise NoTestOptionsError("no test options")
    abs_sq = (np.sum((fc - mc) ** 2) + np.sum((fp - mp) ** 2)) / count
    if np.any(mc == 0.0) or np.any(mp == 0.0):
        raise ZeroPriceMetricError("zero market price in relative-error test set")
    rel_sq = (np.sum((fc / mc - 1.0) ** 2) + np.sum((fp / mp - 1.0) ** 2)) / count
    return float(np.sqrt(abs_sq)), float(np.sqrt(rel_sq))


@dataclass(frozen=True)
class PriceRow:
    strike: float
    side: str
    market: float
    fair: float
    moneyness: str

    @property
    def abs_err(self) -> float:
        return abs(self.fair - self.market)

    @property
    def rel_err(self) -> float:
        return abs(self.fair / self.market - 1.0) if self.market else math.inf


@dataclass(frozen=True)
class PriceReport:
    """Per-quote fair prices for one chain plus aggregate error metrics."""

    rows: tuple[PriceRow, ...]
    abs_error: float
    rel_error: float


def build_price_report(chain: OptionChain, fitted_puts, fitted_calls) -> PriceReport:
    rows = []
    fc, mc, fp, mp = [], [], [], []
    for i, side, market in chain.quotes():
        fair = float(fitted_calls[i] if side == CALL else fitted_puts[i])
        rows.append(
            PriceRow(
                strike=float(chain.strikes[i]),
                side=side,
                market=market,
                fair=fair,
                moneyness=classify_moneyness(float(chain.strikes[i]), chain.spot, side),
            )
        )
        if side == CALL:
            fc.append(fair)
            mc.append(market)
        else:
            fp.append(fair)
            mp.append(market)
    abs_error, rel_error = error_metrics(fc, mc, fp, mp)
    return PriceReport(rows=tuple(rows), abs_error=abs_error, rel_error=rel_error)


def write_price_report(report: PriceReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strike", "side", "market", "fair", "abs_err", "rel_err", "moneyness"])
        for row in report.rows:
            writer.writerow(
                [
                    repr(row.strike),
                    row.side,
                    repr(row.market),
                    repr(row.fair),
                    repr(row.abs_err),
                    repr(row.rel_err),
                    row.moneyness,
                ]
            )
