"""Option-quote ingestion: filters, deduplication and per-expiry chain assembly."""

from __future__ import annotations

import csv
import datetime as dt
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientStrikesError, RateGapError

CALL = "call"
PUT = "put"

MATURITY_BUCKETS = (
    (7, 14),
    (17, 31),
    (81, 94),
    (171, 199),
    (337, 393),
    (502, 592),
    (670, 790),
)

OPTION_CSV_COLUMNS = (
    "trade_date",
    "expiry_date",
    "strike",
    "cp_flag",
    "bid",
    "ask",
    "mark",
    "volume",
)


@dataclass(frozen=True)
class OptionQuote:
    """One market quote for a European option."""

    trade_date: dt.date
    expiry_date: dt.date
    strike: float
    side: str
    bid: float
    ask: float
    mark: float | None = None
    volume: int = 0

    def __post_init__(self):
        if self.side not in (CALL, PUT):
            raise ValueError(f"side must be {CALL!r} or {PUT!r}, got {self.side!r}")
        if not self.strike > 0.0:
            raise ValueError("strike must be positive")
        if self.expiry_date < self.trade_date:
            raise ValueError("expiry precedes trade date")
        if self.bid < 0.0 or self.ask < 0.0:
            raise ValueError("bid and ask must be nonnegative")
        if self.ask and self.bid and self.ask < self.bid:
            raise ValueError("ask below bid")
        if self.volume < 0:
            raise ValueError("volume must be nonnegative")


def market_price(quote: OptionQuote) -> float:
    """Transaction price when available, otherwise the bid/ask midpoint."""
    if quote.mark is not None and not math.isnan(quote.mark):
        return float(quote.mark)
    return 0.5 * (quote.bid + quote.ask)


@dataclass(frozen=True)
class ChainFilters:
    """Quote filters applied before assembling a chain.

    Quotes must have a strictly positive bid and volume and expire strictly
    more than ``min_days_to_expiry`` calendar days after the trade date.
    """

    min_days_to_expiry: int = 7

    def passes(self, quote: OptionQuote) -> bool:
        if quote.bid <= 0.0 or quote.volume <= 0:
            return False
        return (quote.expiry_date - quote.trade_date).days > self.min_days_to_expiry


@dataclass(frozen=True)
class OptionChain:
    """One (trade date, expiry) cross-section with distinct ascending strikes.

    ``call_quotes`` and ``put_quotes`` map 0-based strike indices to market
    prices; together they cover every strike index.
    """

    trade_date: dt.date
    expiry_date: dt.date
    spot: float
    strikes: np.ndarray
    call_quotes: dict[int, float]
    put_quotes: dict[int, float]
    cum_rate: float

    def __post_init__(self):
        strikes = np.array(self.strikes, dtype=float)
        if strikes.ndim != 1 or strikes.size < 1:
            raise ValueError("need at least one strike")
        if np.any(strikes <= 0.0) or np.any(np.diff(strikes) <= 0.0):
            raise ValueError("strikes must be positive and strictly increasing")
        if not self.spot > 0.0:
            raise ValueError("spot must be positive")
        if not math.isfinite(self.cum_rate):
            raise ValueError("cumulative rate must be finite")
        q = strikes.size
        covered = set(self.call_quotes) | set(self.put_quotes)
        if covered != set(range(q)):
            raise ValueError("every strike index needs at least one quote")
        for prices in (self.call_quotes, self.put_quotes):
            for idx, price in prices.items():
                if not 0 <= idx < q:
                    raise ValueError(f"quote index {idx} out of range")
                if not price > 0.0:
                    raise ValueError(f"non-positive market price at index {idx}")
        strikes.setflags(write=False)
        object.__setattr__(self, "strikes", strikes)

    @property
    def q(self) -> int:
        return self.strikes.size

    @property
    def m(self) -> int:
        return len(self.call_quotes)

    @property
    def n(self) -> int:
        return len(self.put_quotes)

    @property
    def days_to_expiry(self) -> int:
        return (self.expiry_date - self.trade_date).days

    def quotes(self):
        """Yield (index, side, price) in a fixed order: by strike, calls first."""
        for i in range(self.q):
            if i in self.call_quotes:
                yield i, CALL, self.call_quotes[i]
            if i in self.put_quotes:
                yield i, PUT, self.put_quotes[i]


@dataclass(frozen=True)
class RateCurve:
    """Daily continuously-compounded rates; gaps forward-fill the last value."""

    dates: tuple[dt.date, ...]
    daily_rates: np.ndarray

    def __post_init__(self):
        rates = np.array(self.daily_rates, dtype=float)
        dates = tuple(self.dates)
        if len(dates) == 0 or rates.shape != (len(dates),):
            raise ValueError("need one rate per date")
        ordinals = [d.toordinal() for d in dates]
        if any(b <= a for a, b in zip(ordinals, ordinals[1:])):
            raise ValueError("dates must be strictly increasing")
        if not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite")
        rates.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "daily_rates", rates)

    def cumulative(self, start: dt.date, end: dt.date) -> float:
        """Sum of daily rates over calendar days ``[start, end)``.

        One unit of cash at ``start`` grows to ``exp(result)`` at ``end``.
        Days before the first observation raise; days between or after
        observations take the last observed rate.
        """
        if end < start:
            raise ValueError("end precedes start")
        if end == start:
            return 0.0
        days = np.arange(start.toordinal(), end.toordinal())
        ordinals = np.array([d.toordinal() for d in self.dates])
        if days[0] < ordinals[0]:
            raise RateGapError(f"rate gap: no rate on or before {start.isoformat()}")
        idx = np.searchsorted(ordinals, days, side="right") - 1
        return float(self.daily_rates[idx].sum())


def cumulative_rate(rate_curve: RateCurve, start: dt.date, end: dt.date) -> float:
    return rate_curve.cumulative(start, end)


def bucket_maturity(days_to_expiry: int) -> str | None:
    """Label of the maturity bucket containing the day count, or None."""
    if days_to_expiry < 0:
        raise ValueError("day count must be nonnegative")
    for lo, hi in MATURITY_BUCKETS:
        if lo <= days_to_expiry <= hi:
            return f"{lo}~{hi}"
    return None


def load_chain(raw_quotes, rate_curve: RateCurve, spot_series, filters: ChainFilters | None = None) -> OptionChain:
    """Filter, deduplicate and assemble quotes sharing one (trade, expiry) pair.

    Quotes failing the bid/volume/expiry filters are dropped. Duplicates at
    the same (strike, side) are merged by averaging their prices. Raises
    InsufficientStrikesError when fewer than two distinct strikes survive.
    """
    filters = filters or ChainFilters()
    quotes = list(raw_quotes)
    if not quotes:
        raise InsufficientStrikesError("insufficient strikes: no quotes supplied")
    trade, expiry = quotes[0].trade_date, quotes[0].expiry_date
    if any(q.trade_date != trade or q.expiry_date != expiry for q in quotes):
        raise ValueError("quotes span multiple (trade, expiry) pairs")
    kept = [q for q in quotes if filters.passes(q)]
    grouped: dict[tuple[float, str], list[float]] = defaultdict(list)
    for q in kept:
        grouped[(q.strike, q.side)].append(market_price(q))
    strikes = sorted({strike for strike, _ in grouped})
    if len(strikes) < 2:
        raise InsufficientStrikesError(
            f"insufficient strikes: {len(strikes)} distinct after filtering"
        )
    index = {strike: i for i, strike in enumerate(strikes)}
    call_quotes: dict[int, float] = {}
    put_quotes: dict[int, float] = {}
    for (strike, side), prices in grouped.items():
        # sort before averaging so merging is order-independent
        avg = float(np.mean(sorted(prices)))
        (call_quotes if side == CALL else put_quotes)[index[strike]] = avg
    if trade not in spot_series:
        raise ValueError(f"no spot price for {trade.isoformat()}")
    return OptionChain(
        trade_date=trade,
        expiry_date=expiry,
        spot=float(spot_series[trade]),
        strikes=np.array(strikes, dtype=float),
        call_quotes=call_quotes,
        put_quotes=put_quotes,
        cum_rate=rate_curve.cumulative(trade, expiry),
    )


def read_option_quotes(path) -> list[OptionQuote]:
    """Read quotes from CSV with the standard option columns."""
    path = Path(path)
    quotes = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(OPTION_CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"option csv missing columns: {sorted(missing)}")
        for row in reader:
            mark = row["mark"].strip()
            quotes.append(
                OptionQuote(
                    trade_date=dt.date.fromisoformat(row["trade_date"]),
                    expiry_date=dt.date.fromisoformat(row["expiry_date"]),
                    strike=float(row["strike"]),
                    side=CALL if row["cp_flag"].strip().upper() == "C" else PUT,
                    bid=float(row["bid"]),
                    ask=float(row["ask"]),
                    mark=float(mark) if mark else None,
                    volume=int(float(row["volume"])),
                )
            )
    return quotes


def group_quotes_by_pair(quotes) -> dict[tuple[dt.date, dt.date], list[OptionQuote]]:
    """Group quotes into (trade_date, expiry_date) buckets."""
    grouped: dict[tuple[dt.date, dt.date], list[OptionQuote]] = defaultdict(list)
    for q in quotes:
        grouped[(q.trade_date, q.expiry_date)].append(q)
    return dict(grouped)


def read_rate_curve(path) -> RateCurve:
    """Read a ``date,rate`` CSV of per-day continuously compounded rates."""
    dates, rates = [], []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            dates.append(dt.date.fromisoformat(row["date"]))
            rates.append(float(row["rate"]))
    order = sorted(range(len(dates)), key=lambda i: dates[i])
    return RateCurve(tuple(dates[i] for i in order), np.array([rates[i] for i in order]))


def read_spot_series(path) -> dict[dt.date, float]:
    """Read a ``date,close`` CSV into a date-to-price mapping."""
    series: dict[dt.date, float] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            series[dt.date.fromisoformat(row["date"])] = float(row["close"])
    return series
