"""Leave-one-out fair prices and bootstrap bands for spotting mispriced quotes.

Each quote is repriced from a fit on the remaining quotes; resampling those
remaining quotes with replacement and refitting yields a percentile band for
the fair price. A market price above the band flags the option as overpriced,
below as underpriced.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .design import build_design
from .errors import BootstrapUnstableError, RndFitError
from .market_data import CALL, OptionChain
from .pricing import call_price, put_price
from .solver import FitConfig, fit

FLAG_OVER = "over"
FLAG_UNDER = "under"
FLAG_FAIR = "fair"


def _triples(chain: OptionChain):
    return [(float(chain.strikes[i]), side, price) for i, side, price in chain.quotes()]


def _chain_from_triples(base: OptionChain, triples, counts=None):
    """Rebuild a chain from (strike, side, price) rows sharing base metadata.

    Returns the chain plus a quote-weight mapping carrying the multiplicities
    (``None`` when all weights are one).
    """
    strikes = sorted({strike for strike, _, _ in triples})
    index = {k: i for i, k in enumerate(strikes)}
    call_quotes: dict[int, float] = {}
    put_quotes: dict[int, float] = {}
    weights: dict[tuple[int, str], float] = {}
    for pos, (strike, side, price) in enumerate(triples):
        key = (index[strike], side)
        (call_quotes if side == CALL else put_quotes)[key[0]] = price
        weights[key] = weights.get(key, 0.0) + (counts[pos] if counts is not None else 1.0)
    chain = OptionChain(
        trade_date=base.trade_date,
        expiry_date=base.expiry_date,
        spot=base.spot,
        strikes=np.array(strikes),
        call_quotes=call_quotes,
        put_quotes=put_quotes,
        cum_rate=base.cum_rate,
    )
    return chain, (weights if counts is not None else None)


def _fair_price(density, strike, side, cum_rate):
    pricer = call_price if side == CALL else put_price
    return pricer(density, strike, cum_rate)


@dataclass(frozen=True)
class LooPrice:
    index: int
    side: str
    market: float
    fair: float | None
    error: str | None = None


def leave_one_out(chain: OptionChain, config: FitConfig | None = None) -> list[LooPrice]:
    """Fair price of each quote from a refit on the remaining quotes.

    The grid is rebuilt from the remaining distinct strikes; the held-out
    strike is priced directly from the refit density, so it need not be a
    knot. Fit failures are recorded per option and do not stop the scan.
    """
    config = config or FitConfig()
    triples = _triples(chain)
    out = []
    for i, side, price in chain.quotes():
        rest = [t for t in triples if t != (float(chain.strikes[i]), side, price)]
        try:
            sub, _ = _chain_from_triples(chain, rest)
            design = build_design(sub.strikes, config.tail_factor)
            result = fit(sub, design, config)
            fair = _fair_price(result.density, float(chain.strikes[i]), side, chain.cum_rate)
            out.append(LooPrice(i, side, price, fair))
        except (RndFitError, ValueError) as exc:
            out.append(LooPrice(i, side, price, None, str(exc)))
    return out


def bootstrap_ci(
    chain: OptionChain,
    target_index: int,
    target_side: str,
    config: FitConfig | None = None,
    B: int = 50,
    level: float = 0.95,
    seed=0,
):
    """Percentile band for one quote's fair price from ``B`` resample refits.

    Each resample draws the remaining quotes with replacement (same size);
    repeated quotes enter the refit objective with their multiplicity. The
    band is the ``(1-level)/2`` and ``1-(1-level)/2`` percentile pair of the
    resampled fair prices, deterministic for a fixed seed.
    """
    if B < 2:
        raise ValueError("B >= 2 bootstrap resamples required")
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie in (0, 1)")
    config = config or FitConfig()
    strike = float(chain.strikes[target_index])
    target = (strike, target_side, _quote_price(chain, target_index, target_side))
    remaining = [t for t in _triples(chain) if t != target]
    if not remaining:
        raise ValueError("no quotes left after removing the target")
    rng = np.random.default_rng(seed)
    prices = []
    failures = 0
    for _ in range(B):
        picks = rng.integers(0, len(remaining), size=len(remaining))
        tally = Counter(int(j) for j in picks)
        chosen = [remaining[j] for j in sorted(tally)]
        counts = [float(tally[j]) for j in sorted(tally)]
        try:
            sub, weights = _chain_from_triples(chain, chosen, counts)
            design = build_design(sub.strikes, config.tail_factor)
            result = fit(sub, design, config, quote_weights=weights)
            prices.append(_fair_price(result.density, strike, target_side, chain.cum_rate))
        except (RndFitError, ValueError):
            failures += 1
    if 2 * failures > B:
        raise BootstrapUnstableError(f"bootstrap unstable: {failures}/{B} refits failed")
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(prices, [tail, 1.0 - tail])
    return float(lower), float(upper)


def _quote_price(chain: OptionChain, index: int, side: str) -> float:
    quotes = chain.call_quotes if side == CALL else chain.put_quotes
    if index not in quotes:
        raise KeyError(f"no {side} quote at index {index}")
    return quotes[index]


@dataclass(frozen=True)
class MispricingRow:
    strike: float
    side: str
    market: float
    loo_fair: float
    rel_diff: float
    ci_lower: float
    ci_upper: float
    flag: str


@dataclass(frozen=True)
class MispricingReport:
    """Per-quote leave-one-out prices, bootstrap bands and flags."""

    rows: tuple[MispricingRow, ...]
    failures: tuple[str, ...]
    resamples: int
    level: float
    seed: int


def scan_chain(
    chain: OptionChain,
    config: FitConfig | None = None,
    B: int = 50,
    level: float = 0.95,
    seed: int = 0,
) -> MispricingReport:
    """Run the full leave-one-out plus bootstrap scan over a chain."""
    if chain.m + chain.n < 3:
        raise ValueError("need at least 3 quotes for a leave-one-out scan")
    config = config or FitConfig()
    loo = leave_one_out(chain, config)
    children = np.random.SeedSequence(seed).spawn(len(loo))
    rows, failures = [], []
    for item, child in zip(loo, children):
        strike = float(chain.strikes[item.index])
        if item.fair is None:
            failures.append(f"{item.side}@{strike:g}: {item.error}")
            continue
        lower, upper = bootstrap_ci(chain, item.index, item.side, config, B, level, child)
        if item.market > upper:
            flag = FLAG_OVER
        elif item.market < lower:
            flag = FLAG_UNDER
        else:
            flag = FLAG_FAIR
        rel = (item.market - item.fair) / item.fair if item.fair > 0.0 else math.inf
        rows.append(
            MispricingRow(
                strike=strike,
                side=item.side,
                market=item.market,
                loo_fair=item.fair,
                rel_diff=rel,
                ci_lower=lower,
                ci_upper=upper,
                flag=flag,
            )
        )
    return MispricingReport(
        rows=tuple(rows), failures=tuple(failures), resamples=B, level=level, seed=seed
    )


def write_mispricing_report(report: MispricingReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["strike", "side", "market", "loo_fair", "rel_diff", "ci_lower", "ci_upper", "flag"]
        )
        for row in report.rows:
            writer.writerow(
                [
                    repr(row.strike),
                    row.side,
                    repr(row.market),
                    repr(row.loo_fair),
                    repr(row.rel_diff),
                    repr(row.ci_lower),
                    repr(row.ci_upper),
                    row.flag,
                ]
            )
