"""Synthetic option worlds with closed-form or exact-density ground truth."""

from __future__ import annotations

import datetime as dt
import math

import numpy as np
from scipy import stats

from .density import PiecewiseDensity
from .design import build_design, discounted_prices
from .market_data import OptionChain, OptionQuote


def lognormal_prices(strikes, mean_log: float, sd_log: float, cum_rate: float = 0.0):
    """Closed-form put and call prices when ``log S_T ~ N(mean_log, sd_log^2)``."""
    k = np.asarray(strikes, dtype=float)
    d2 = (mean_log - np.log(k)) / sd_log
    d1 = d2 + sd_log
    forward = math.exp(mean_log + 0.5 * sd_log * sd_log)
    disc = math.exp(-cum_rate)
    calls = disc * (forward * stats.norm.cdf(d1) - k * stats.norm.cdf(d2))
    puts = disc * (k * stats.norm.cdf(-d2) - forward * stats.norm.cdf(-d1))
    return puts, calls


def lognormal_log_price_dist(spot: float, cum_rate: float, sd_log: float):
    """Martingale-consistent normal distribution of the log price at expiry."""
    mu = math.log(spot) + cum_rate - 0.5 * sd_log * sd_log
    return stats.norm(mu, sd_log)


def make_lognormal_chain(
    spot: float = 100.0,
    days: int = 30,
    daily_rate: float = 1e-4,
    sd_log: float = 0.1,
    q: int = 80,
    span_sd: float = 4.0,
    trade_date: dt.date = dt.date(2024, 1, 2),
):
    """Chain of closed-form lognormal prices at ``q`` log-spaced strikes.

    Strikes span ``span_sd`` standard deviations either side of the log-price
    mean. Returns the chain and the generating log-price distribution.
    """
    cum_rate = daily_rate * days
    dist = lognormal_log_price_dist(spot, cum_rate, sd_log)
    mu = float(dist.mean())
    log_strikes = np.linspace(mu - span_sd * sd_log, mu + span_sd * sd_log, q)
    strikes = np.exp(log_strikes)
    puts, calls = lognormal_prices(strikes, mu, sd_log, cum_rate)
    chain = OptionChain(
        trade_date=trade_date,
        expiry_date=trade_date + dt.timedelta(days=days),
        spot=spot,
        strikes=strikes,
        call_quotes={i: float(calls[i]) for i in range(q)},
        put_quotes={i: float(puts[i]) for i in range(q)},
        cum_rate=cum_rate,
    )
    return chain, dist


def random_feasible_heights(rng: np.random.Generator, dlog: np.ndarray, alpha: float = 1.0):
    """Random nonnegative heights with unit mass (Dirichlet interval masses)."""
    masses = rng.dirichlet(np.full(dlog.size, alpha))
    return masses / dlog


def make_exact_chain(
    rng: np.random.Generator,
    q: int = 20,
    spot_scale: float = 100.0,
    tail_factor: float = 1.5,
    width_range=(0.02, 0.08),
    days: int = 30,
    daily_rate: float = 0.0,
    trade_date: dt.date = dt.date(2024, 1, 2),
    sides: str = "both",
    dirichlet_alpha: float = 1.0,
):
    """Chain whose prices come exactly from a random feasible step density.

    ``sides`` is ``both`` (call and put at every strike) or ``alternate``
    (calls at even strike indices, puts at odd ones). Returns the chain, the
    generating density and the design system on its grid.
    """
    widths = rng.uniform(*width_range, size=max(q - 1, 0))
    log_strikes = math.log(spot_scale) - widths.sum() / 2.0 + np.concatenate(([0.0], np.cumsum(widths)))
    strikes = np.exp(log_strikes)
    design = build_design(strikes, tail_factor)
    dlog = np.diff(design.log_knots)
    heights = random_feasible_heights(rng, dlog, dirichlet_alpha)
    density = PiecewiseDensity(tail_factor, design.log_knots, heights)
    cum_rate = daily_rate * days
    puts, calls = discounted_prices(design, heights[:-1], cum_rate)
    call_quotes, put_quotes = {}, {}
    for i in range(q):
        want_call = sides == "both" or i % 2 == 0
        want_put = sides == "both" or i % 2 == 1
        if want_call and calls[i] > 0.0:
            call_quotes[i] = float(calls[i])
        if want_put and puts[i] > 0.0:
            put_quotes[i] = float(puts[i])
        if i not in call_quotes and i not in put_quotes:
            # cover the grid with whichever side has positive value (at least
            # one does: unit mass cannot price both sides of a strike at zero)
            if calls[i] > 0.0:
                call_quotes[i] = float(calls[i])
            else:
                put_quotes[i] = float(puts[i])
    spot = density.first_price_moment() * math.exp(-cum_rate)
    chain = OptionChain(
        trade_date=trade_date,
        expiry_date=trade_date + dt.timedelta(days=days),
        spot=spot,
        strikes=strikes,
        call_quotes=call_quotes,
        put_quotes=put_quotes,
        cum_rate=cum_rate,
    )
    return chain, density, design


def chain_quotes(chain: OptionChain) -> list[OptionQuote]:
    """Tradable quotes reproducing a chain (mark = price, unit volume)."""
    out = []
    for i, side, price in chain.quotes():
        out.append(
            OptionQuote(
                trade_date=chain.trade_date,
                expiry_date=chain.expiry_date,
                strike=float(chain.strikes[i]),
                side=side,
                bid=price,
                ask=price,
                mark=price,
                volume=1,
            )
        )
    return out


def gbm_log_returns(
    rng: np.random.Generator, drift: float, vol: float, n_days: int
) -> np.ndarray:
    """Daily log returns of a geometric Brownian path."""
    return drift + vol * rng.standard_normal(n_days)
