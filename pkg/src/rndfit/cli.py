"""Command-line interface: fit densities, price options, scan for mispricing,
value variance swaps, generate synthetic worlds and run convergence studies.

Every command reads/writes plain CSV (with JSON sidecars for metadata) so the
outputs diff cleanly and feed straight into plotting tools. Exit codes:
0 success (individual chain failures are logged), 2 unusable input,
3 internal solver fault.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import synth
from .density import project_density, write_density
from .design import build_design, discounted_prices
from .errors import ExtrapolationError, RndFitError, SolverStalledError
from .market_data import (
    bucket_maturity,
    group_quotes_by_pair,
    load_chain,
    read_option_quotes,
    read_rate_curve,
    read_spot_series,
)
from .mispricing import scan_chain, write_mispricing_report
from .pricing import build_price_report, write_price_report
from .solver import FitConfig, fit
from .varswap import MomentCurve, VarSwapSpec, build_curve, varswap_price, replicate_from_future

log = logging.getLogger("rndfit")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3

FUTURES_COLUMNS = (
    "trade_date",
    "start_date",
    "expiry_date",
    "iug",
    "realized_days",
    "expected_days",
)


def _positive_int(value: str) -> int:
    out = int(value)
    if out < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return out


def _bootstrap_count(value: str) -> int:
    out = int(value)
    if out < 2:
        raise argparse.ArgumentTypeError("B >= 2 bootstrap resamples required")
    return out


def _int_list(value: str) -> list[int]:
    return [int(part) for part in value.split(",") if part.strip()]


def _add_market_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--options", required=True, type=Path, help="option quotes CSV")
    parser.add_argument("--rates", required=True, type=Path, help="daily rates CSV")
    parser.add_argument("--spot", required=True, type=Path, help="spot closes CSV")
    parser.add_argument("--bucket", default=None, help="keep only chains in this maturity bucket, e.g. 17~31")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--c-k", dest="tail_factor", type=float, default=1.5,
                        help="tail extension factor for the outer knots (default 1.5)")
    parser.add_argument("--mode", choices=("ls", "wls"), default="ls")
    parser.add_argument("--scope", choices=("all", "otm"), default="all")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=_positive_int, default=1)
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rndfit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a density per (trade, expiry) chain")
    _add_market_inputs(p_fit)
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_price = sub.add_parser("price", help="fit and write per-quote fair prices")
    _add_market_inputs(p_price)
    _add_common(p_price)
    p_price.set_defaults(func=cmd_price)

    p_loocv = sub.add_parser("loocv", help="leave-one-out mispricing scan")
    _add_market_inputs(p_loocv)
    _add_common(p_loocv)
    p_loocv.add_argument("-B", "--bootstrap", type=_bootstrap_count, default=50,
                         help="bootstrap resamples per option (default 50)")
    p_loocv.add_argument("--level", type=float, default=0.95)
    p_loocv.set_defaults(func=cmd_loocv)

    p_vs = sub.add_parser("varswap", help="compare swap values from options and futures")
    _add_market_inputs(p_vs)
    _add_common(p_vs)
    p_vs.add_argument("--futures", required=True, type=Path, help="variance futures CSV")
    p_vs.add_argument("--notional", type=float, default=50.0)
    p_vs.add_argument("--strike-var", type=float, default=0.0)
    p_vs.add_argument("--days-per-year", type=float, default=252.0)
    p_vs.set_defaults(func=cmd_varswap)

    p_synth = sub.add_parser("synth", help="generate a synthetic option world")
    _add_common(p_synth)
    p_synth.add_argument("--kind", choices=("lognormal", "exact"), default="lognormal")
    p_synth.add_argument("--spot", dest="spot0", type=float, default=100.0)
    p_synth.add_argument("--days", type=_int_list, default=[30], help="expiries in days, comma separated")
    p_synth.add_argument("--daily-rate", type=float, default=1e-4)
    p_synth.add_argument("--daily-vol", type=float, default=0.015)
    p_synth.add_argument("--q", type=_positive_int, default=40, help="strikes per chain")
    p_synth.add_argument("--span-sd", type=float, default=4.0)
    p_synth.add_argument("--trade-date", type=dt.date.fromisoformat, default=dt.date(2024, 1, 2))
    p_synth.add_argument("--futures", action="store_true", help="also emit a variance futures file")
    p_synth.set_defaults(func=cmd_synth)

    p_conv = sub.add_parser("converge", help="projection pricing error vs grid size")
    _add_common(p_conv)
    p_conv.add_argument("--grid-sizes", type=_int_list, default=[20, 40, 80, 160])
    p_conv.add_argument("--spot", dest="spot0", type=float, default=100.0)
    p_conv.add_argument("--days", type=_positive_int, default=30)
    p_conv.add_argument("--daily-rate", type=float, default=1e-4)
    p_conv.add_argument("--sd", type=float, default=0.2, help="log-price standard deviation at expiry")
    p_conv.add_argument("--span-base", type=float, default=2.0)
    p_conv.add_argument("--span-step", type=float, default=0.75,
                        help="extra standard deviations of span per grid doubling")
    p_conv.set_defaults(func=cmd_converge)

    return parser


def _fit_config(args) -> FitConfig:
    return FitConfig(mode=args.mode, scope=args.scope, tail_factor=args.tail_factor)


def _load_chains(args):
    """Chains keyed and sorted by (trade, expiry); load failures as strings."""
    quotes = read_option_quotes(args.options)
    rates = read_rate_curve(args.rates)
    spots = read_spot_series(args.spot)
    grouped = group_quotes_by_pair(quotes)
    chains, failures = [], []
    for trade, expiry in sorted(grouped):
        if args.bucket and bucket_maturity((expiry - trade).days) != args.bucket:
            continue
        try:
            chains.append(load_chain(grouped[(trade, expiry)], rates, spots))
        except (RndFitError, ValueError) as exc:
            failures.append(f"{trade.isoformat()}/{expiry.isoformat()}: {exc}")
    for message in failures:
        log.warning("chain skipped: %s", message)
    return chains, failures


def _fit_chains(chains, config, jobs):
    """Fit every chain; returns [(chain, result_or_None, error_or_None)] in input order."""

    def run(chain):
        started = time.perf_counter()
        try:
            result = fit(chain, build_design(chain.strikes, config.tail_factor), config)
        except (RndFitError, ValueError) as exc:
            return chain, None, str(exc), time.perf_counter() - started
        return chain, result, None, time.perf_counter() - started

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, chains))
    else:
        rows = [run(chain) for chain in chains]
    out = []
    for chain, result, error, wall in rows:
        if result is None:
            log.warning("fit failed t=%s T=%s: %s", chain.trade_date, chain.expiry_date, error)
        else:
            log.info(
                "chain t=%s T=%s q=%d m=%d n=%d objective=%.6e kkt=%.3e wall=%.3fs",
                chain.trade_date,
                chain.expiry_date,
                chain.q,
                chain.m,
                chain.n,
                result.objective,
                result.kkt_residual,
                wall,
            )
        out.append((chain, result, error))
    return out


def _chain_stem(chain) -> str:
    return f"{chain.trade_date.isoformat()}_{chain.expiry_date.isoformat()}"


def cmd_fit(args) -> int:
    chains, _ = _load_chains(args)
    if not chains:
        log.error("no chains")
        return EXIT_INPUT
    config = _fit_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    wrote = 0
    for chain, result, _error in _fit_chains(chains, config, args.jobs):
        if result is None:
            continue
        meta = result.to_json_dict()
        meta.update(
            trade_date=chain.trade_date.isoformat(),
            expiry_date=chain.expiry_date.isoformat(),
            mode=config.mode,
            scope=config.scope,
        )
        write_density(args.out / f"density_{_chain_stem(chain)}.csv", result.density, meta)
        wrote += 1
    log.info("wrote %d density files to %s", wrote, args.out)
    return EXIT_OK


def cmd_price(args) -> int:
    chains, _ = _load_chains(args)
    if not chains:
        log.error("no chains")
        return EXIT_INPUT
    config = _fit_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    for chain, result, _error in _fit_chains(chains, config, args.jobs):
        if result is None:
            continue
        report = build_price_report(chain, result.fitted_puts, result.fitted_calls)
        path = args.out / f"prices_{_chain_stem(chain)}.csv"
        write_price_report(report, path)
        path.with_suffix(".json").write_text(
            json.dumps(
                {"abs_error": report.abs_error, "rel_error": report.rel_error},
                indent=2,
                sort_keys=True,
            )
        )
    return EXIT_OK


def cmd_loocv(args) -> int:
    chains, _ = _load_chains(args)
    if not chains:
        log.error("no chains")
        return EXIT_INPUT
    config = _fit_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).spawn(len(chains))
    jobs = []
    for chain, child in zip(chains, seeds):
        jobs.append((chain, int(child.generate_state(1)[0])))

    def run(item):
        chain, chain_seed = item
        started = time.perf_counter()
        try:
            report = scan_chain(chain, config, B=args.bootstrap, level=args.level, seed=chain_seed)
        except (RndFitError, ValueError) as exc:
            return chain, None, str(exc), time.perf_counter() - started
        return chain, report, None, time.perf_counter() - started

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(item) for item in jobs]
    for chain, report, error, wall in rows:
        if report is None:
            log.warning("loocv failed t=%s T=%s: %s", chain.trade_date, chain.expiry_date, error)
            continue
        log.info(
            "loocv t=%s T=%s quotes=%d flagged=%d wall=%.3fs",
            chain.trade_date,
            chain.expiry_date,
            len(report.rows),
            sum(r.flag != "fair" for r in report.rows),
            wall,
        )
        write_mispricing_report(report, args.out / f"mispricing_{_chain_stem(chain)}.csv")
    return EXIT_OK


def _read_futures(path: Path) -> list[dict]:
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(FUTURES_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"futures csv missing columns: {sorted(missing)}")
        for row in reader:
            rows.append(
                {
                    "trade_date": dt.date.fromisoformat(row["trade_date"]),
                    "start_date": dt.date.fromisoformat(row["start_date"]),
                    "expiry_date": dt.date.fromisoformat(row["expiry_date"]),
                    "iug": float(row["iug"]),
                    "realized_days": int(row["realized_days"]),
                    "expected_days": int(row["expected_days"]),
                }
            )
    return rows


def _log_returns(spots: dict, start: dt.date, end: dt.date) -> np.ndarray:
    dates = sorted(d for d in spots if start <= d <= end)
    closes = np.array([spots[d] for d in dates])
    if closes.size < 2:
        return np.zeros(0)
    return np.diff(np.log(closes))


def cmd_varswap(args) -> int:
    chains, _ = _load_chains(args)
    quotes_exist = bool(chains)
    spots = read_spot_series(args.spot)
    rates = read_rate_curve(args.rates)
    contracts = _read_futures(args.futures)
    if not contracts:
        log.error("no variance future contracts")
        return EXIT_INPUT
    config = _fit_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    out_rows = []
    for contract in contracts:
        trade = contract["trade_date"]
        total = contract["expected_days"]
        observed = contract["realized_days"]
        remaining = total - observed
        realized = _log_returns(spots, contract["start_date"], trade)
        row = {
            "trade_date": trade.isoformat(),
            "start_date": contract["start_date"].isoformat(),
            "expiry_date": contract["expiry_date"].isoformat(),
            "days_remaining": remaining,
            "op": "",
            "vf": "",
            "true": "",
        }
        if realized.size != observed:
            log.warning(
                "contract %s: %d realized returns in spot file, expected %d",
                trade,
                realized.size,
                observed,
            )
            out_rows.append(row)
            continue
        cum_rate = rates.cumulative(trade, contract["expiry_date"])
        spec = VarSwapSpec(
            notional=args.notional,
            strike_var=args.strike_var,
            total_days=total,
            observed_days=observed,
            realized_returns=realized,
            cum_rate=cum_rate,
            trading_days_per_year=args.days_per_year,
        )
        # replication leg from the quoted future
        row["vf"] = repr(
            replicate_from_future(realized, contract["iug"], observed + 1, total, spec)
        )
        # fair-value leg from option-implied moments
        if quotes_exist:
            day_chains = [c for c in chains if c.trade_date == trade and c.expiry_date > trade]
            pillars = []
            for chain in day_chains:
                try:
                    result = fit(chain, build_design(chain.strikes, config.tail_factor), config)
                except (RndFitError, ValueError) as exc:
                    log.warning("contract %s: pillar fit failed (%s)", trade, exc)
                    continue
                pillars.append(((chain.expiry_date - trade).days, result.density))
            if trade in spots and (pillars or remaining == 0):
                curve = build_curve(pillars, spots[trade])
                future_dates = sorted(d for d in spots if d > trade)[:remaining]
                if len(future_dates) == remaining:
                    offsets = np.array([(d - trade).days for d in future_dates], dtype=int)
                    try:
                        row["op"] = repr(varswap_price(spec, curve, offsets))
                    except (ExtrapolationError, ValueError) as exc:
                        log.warning("contract %s: %s", trade, exc)
                else:
                    log.warning("contract %s: spot calendar too short for %d remaining days", trade, remaining)
        # realized value at expiry when the full path is known
        full = _log_returns(spots, contract["start_date"], contract["expiry_date"])
        if full.size >= total:
            true_spec = VarSwapSpec(
                notional=args.notional,
                strike_var=args.strike_var,
                total_days=total,
                observed_days=total,
                realized_returns=full[:total],
                cum_rate=cum_rate,
                trading_days_per_year=args.days_per_year,
            )
            anchor = MomentCurve(math.log(spots[trade]) if trade in spots else 0.0,
                                 np.zeros(0, dtype=int), np.zeros(0), np.zeros(0))
            row["true"] = repr(varswap_price(true_spec, anchor))
        out_rows.append(row)
    path = args.out / "varswap.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trade_date", "start_date", "expiry_date", "days_remaining",
             "op", "vf", "true", "op_true", "vf_true", "op_vf"]
        )
        for row in out_rows:
            ratios = {}
            for name, num, den in (
                ("op_true", row["op"], row["true"]),
                ("vf_true", row["vf"], row["true"]),
                ("op_vf", row["op"], row["vf"]),
            ):
                ratios[name] = (
                    repr(float(num) / float(den)) if num and den and float(den) != 0.0 else ""
                )
            writer.writerow(
                [row["trade_date"], row["start_date"], row["expiry_date"], row["days_remaining"],
                 row["op"], row["vf"], row["true"], ratios["op_true"], ratios["vf_true"], ratios["op_vf"]]
            )
    log.info("wrote %s (%d contracts)", path, len(out_rows))
    return EXIT_OK


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_synth(args) -> int:
    if not args.days or any(d < 1 for d in args.days):
        log.error("expiries must be positive day counts")
        return EXIT_INPUT
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    horizon = max(args.days)
    dates = [args.trade_date + dt.timedelta(days=i) for i in range(horizon + 1)]
    if args.kind == "lognormal":
        drift = args.daily_rate - 0.5 * args.daily_vol**2
        increments = synth.gbm_log_returns(rng, drift, args.daily_vol, horizon)
        log_path = math.log(args.spot0) + np.concatenate(([0.0], np.cumsum(increments)))
        closes = np.exp(log_path)
    else:
        closes = np.full(horizon + 1, args.spot0)
    option_rows = []
    truth_meta = {"kind": args.kind, "seed": args.seed, "expiries": {}}
    futures_rows = []
    for days in sorted(args.days):
        if args.kind == "lognormal":
            sd_log = args.daily_vol * math.sqrt(days)
            chain, dist = synth.make_lognormal_chain(
                spot=args.spot0,
                days=days,
                daily_rate=args.daily_rate,
                sd_log=sd_log,
                q=args.q,
                span_sd=args.span_sd,
                trade_date=args.trade_date,
            )
            truth_meta["expiries"][str(days)] = {
                "mean_log": float(dist.mean()),
                "sd_log": sd_log,
                "cum_rate": args.daily_rate * days,
            }
        else:
            chain, density, _design = synth.make_exact_chain(
                rng,
                q=args.q,
                spot_scale=args.spot0,
                tail_factor=args.tail_factor,
                days=days,
                daily_rate=args.daily_rate,
                trade_date=args.trade_date,
            )
            write_density(
                args.out / f"truth_{chain.expiry_date.isoformat()}.csv",
                density,
                {"days": days},
            )
            truth_meta["expiries"][str(days)] = {"density": f"truth_{chain.expiry_date.isoformat()}.csv"}
        for quote in synth.chain_quotes(chain):
            option_rows.append(
                [
                    quote.trade_date.isoformat(),
                    quote.expiry_date.isoformat(),
                    repr(quote.strike),
                    "C" if quote.side == "call" else "P",
                    repr(quote.bid),
                    repr(quote.ask),
                    repr(quote.mark),
                    quote.volume,
                ]
            )
        if args.futures:
            window = np.diff(np.log(closes[: days + 1]))
            quote_iug = float(
                np.sum(np.square(window)) * 252.0 / days * 100.0**2
            )
            futures_rows.append(
                [
                    args.trade_date.isoformat(),
                    args.trade_date.isoformat(),
                    (args.trade_date + dt.timedelta(days=days)).isoformat(),
                    repr(quote_iug),
                    0,
                    days,
                ]
            )
    _write_csv(
        args.out / "options.csv",
        ["trade_date", "expiry_date", "strike", "cp_flag", "bid", "ask", "mark", "volume"],
        option_rows,
    )
    _write_csv(
        args.out / "rates.csv",
        ["date", "rate"],
        [[d.isoformat(), repr(args.daily_rate)] for d in dates],
    )
    _write_csv(
        args.out / "spot.csv",
        ["date", "close"],
        [[d.isoformat(), repr(float(c))] for d, c in zip(dates, closes)],
    )
    if args.futures:
        _write_csv(args.out / "futures.csv", list(FUTURES_COLUMNS), futures_rows)
    (args.out / "truth.json").write_text(json.dumps(truth_meta, indent=2, sort_keys=True))
    log.info("wrote synthetic world to %s", args.out)
    return EXIT_OK


def cmd_converge(args) -> int:
    if not args.grid_sizes:
        log.error("empty grid ladder")
        return EXIT_INPUT
    args.out.mkdir(parents=True, exist_ok=True)
    cum_rate = args.daily_rate * args.days
    dist = synth.lognormal_log_price_dist(args.spot0, cum_rate, args.sd)
    mu = float(dist.mean())
    base_q = args.grid_sizes[0]
    rows = []
    for q in args.grid_sizes:
        span = args.span_base + args.span_step * math.log2(q / base_q) if q >= base_q else args.span_base
        strikes = np.exp(np.linspace(mu - span * args.sd, mu + span * args.sd, q))
        density = project_density(dist, strikes, args.tail_factor)
        design = build_design(strikes, args.tail_factor)
        puts, calls = discounted_prices(design, density.heights[:-1], cum_rate)
        ref_puts, ref_calls = synth.lognormal_prices(strikes, mu, args.sd, cum_rate)
        mse = float(
            (np.sum((calls - ref_calls) ** 2) + np.sum((puts - ref_puts) ** 2)) / (2 * q)
        )
        rows.append([q, repr(span), repr(mse)])
        log.info("converge q=%d span=%.3f mse=%.6e", q, span, mse)
    _write_csv(args.out / "converge.csv", ["q", "span_sd", "mse"], rows)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SolverStalledError as exc:
        log.error("internal solver fault: %s", exc)
        return EXIT_INTERNAL
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return EXIT_INPUT
    except (RndFitError, ValueError) as exc:
        log.error("unusable input: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
