"""Acceptance gate: one test per release criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.
"""

import contextlib
import math
import time

import numpy as np
import pytest
from scipy import integrate

import rndfit
from rndfit import FitConfig, OptionChain, fit
from rndfit.mispricing import FLAG_FAIR, FLAG_OVER, scan_chain
from rndfit.pricing import call_price, error_metrics, put_price
from rndfit.synth import (
    lognormal_log_price_dist,
    lognormal_prices,
    make_exact_chain,
    random_feasible_heights,
)
from rndfit.varswap import MomentCurve, VarSwapSpec, interp_mean, interp_variance, iug, replicate_from_future, varswap_price

from conftest import perturb_chain


@contextlib.contextmanager
def criterion(number, name, budget_seconds):
    started = time.perf_counter()
    yield
    elapsed = time.perf_counter() - started
    print(f"ACCEPTANCE {number:2d} PASS {name} ({elapsed:.2f}s / budget {budget_seconds:.0f}s)")
    assert elapsed < budget_seconds, f"criterion {number} exceeded its runtime budget"


def test_01_design_matrix_oracle():
    with criterion(1, "design entries match quadrature; reduced equals raw", 10):
        rng = np.random.default_rng(101)
        for _ in range(100):
            q = int(rng.integers(3, 9))
            strikes = np.exp(np.sort(rng.uniform(3.5, 5.5, size=q)))
            while np.any(np.diff(strikes) <= 0):
                strikes = np.exp(np.sort(rng.uniform(3.5, 5.5, size=q)))
            tail_factor = float(rng.uniform(1.2, 2.0))
            design = rndfit.build_design(strikes, tail_factor)
            knots = np.exp(design.log_knots)
            for i, strike in enumerate(strikes):
                for l in range(q + 1):
                    lo, hi = math.log(knots[l]), math.log(knots[l + 1])
                    put_entry = design.raw_put[i, l]
                    call_entry = design.raw_call[i, l]
                    if i >= l:
                        ref = integrate.quad(lambda y: strike - math.exp(y), lo, hi)[0]
                        assert abs(put_entry - ref) <= 1e-8 * max(1e-30, abs(ref))
                        assert call_entry == 0.0
                    else:
                        ref = integrate.quad(lambda y: math.exp(y) - strike, lo, hi)[0]
                        assert abs(call_entry - ref) <= 1e-8 * max(1e-30, abs(ref))
                        assert put_entry == 0.0
            full = random_feasible_heights(rng, np.diff(design.log_knots))
            raw_puts = design.raw_put @ full
            raw_calls = design.raw_call @ full
            red_puts = design.reduced_put[:, :-1] @ full[:-1] + design.reduced_put[:, -1]
            red_calls = design.reduced_call[:, :-1] @ full[:-1] + design.reduced_call[:, -1]
            assert np.all(np.abs(red_puts - raw_puts) <= 1e-10 * (1.0 + np.abs(raw_puts)))
            assert np.all(np.abs(red_calls - raw_calls) <= 1e-10 * (1.0 + np.abs(raw_calls)))


def test_02_exact_recovery_q100():
    rng = np.random.default_rng(202)
    chain, _density, design = make_exact_chain(rng, q=100, width_range=(0.005, 0.02))
    with criterion(2, "exact recovery at q=100", 5):
        result = fit(chain, design)
        calls = np.array([chain.call_quotes[i] for i in range(chain.q)])
        puts = np.array([chain.put_quotes[i] for i in range(chain.q)])
        assert result.objective < 1e-12
        assert np.max(np.abs(result.fitted_calls - calls)) < 1e-6
        assert np.max(np.abs(result.fitted_puts - puts)) < 1e-6
        assert result.kkt_residual < 1e-10


def test_03_lognormal_out_of_sample():
    with criterion(3, "lognormal fit prices held-out strikes", 10):
        spot, days, daily_rate, sd = 100.0, 30, 1e-4, 0.2
        cum_rate = daily_rate * days
        dist = lognormal_log_price_dist(spot, cum_rate, sd)
        mu = float(dist.mean())
        log_strikes = np.linspace(mu - 4 * sd, mu + 4 * sd, 100)
        strikes = np.exp(log_strikes)
        puts, calls = lognormal_prices(strikes, mu, sd, cum_rate)
        held_out = np.arange(2, 100, 5)  # 20 interior strikes
        kept = np.setdiff1d(np.arange(100), held_out)
        import datetime as dt

        chain = OptionChain(
            dt.date(2024, 1, 2), dt.date(2024, 2, 1), spot, strikes[kept],
            {i: float(calls[kept][i]) for i in range(kept.size)},
            {i: float(puts[kept][i]) for i in range(kept.size)},
            cum_rate,
        )
        result = fit(chain, rndfit.build_design(chain.strikes, 1.5), FitConfig(mode="ls", scope="all"))
        fitted_calls = [call_price(result.density, float(k), cum_rate) for k in strikes[held_out]]
        fitted_puts = [put_price(result.density, float(k), cum_rate) for k in strikes[held_out]]
        abs_error, rel_error = error_metrics(
            fitted_calls, calls[held_out], fitted_puts, puts[held_out]
        )
        assert abs_error < 0.001 * spot
        assert rel_error < 0.02


def test_04_projection_pricing_converges():
    with criterion(4, "projection pricing error shrinks along the grid ladder", 30):
        spot, days, daily_rate, sd = 100.0, 30, 1e-4, 0.2
        cum_rate = daily_rate * days
        dist = lognormal_log_price_dist(spot, cum_rate, sd)
        mu = float(dist.mean())
        errors = []
        for q in (20, 40, 80, 160):
            span = 2.0 + 0.75 * math.log2(q / 20)  # widening span with finer grids
            strikes = np.exp(np.linspace(mu - span * sd, mu + span * sd, q))
            density = rndfit.project_density(dist, strikes, 1.5)
            design = rndfit.build_design(strikes, 1.5)
            fit_puts, fit_calls = rndfit.discounted_prices(design, density.heights[:-1], cum_rate)
            ref_puts, ref_calls = lognormal_prices(strikes, mu, sd, cum_rate)
            errors.append(
                float((np.sum((fit_calls - ref_calls) ** 2) + np.sum((fit_puts - ref_puts) ** 2)) / (2 * q))
            )
        assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
        assert errors[-1] < errors[0] / 4


def test_05_constraint_suite():
    with criterion(5, "fitted densities stay feasible and satisfy parity", 60):
        rng = np.random.default_rng(505)
        for case in range(1000):
            r = np.random.default_rng(int(rng.integers(0, 2**63)))
            q = int(r.integers(3, 11))
            chain, _density, design = make_exact_chain(r, q=q)
            if case % 2:
                chain = perturb_chain(chain, r, noise=0.08)
            config = FitConfig(
                mode="wls" if case % 3 == 0 else "ls",
                scope="otm" if case % 5 == 0 else "all",
            )
            result = fit(chain, design, config)
            heights = result.density.heights
            assert heights.min() >= 0.0
            assert abs(result.density.total_mass() - 1.0) < 1e-8
            disc = math.exp(-chain.cum_rate)
            parity = (
                result.fitted_calls
                - result.fitted_puts
                - disc * (result.density.first_price_moment() - chain.strikes)
            )
            assert np.max(np.abs(parity)) < 1e-10


def test_06_mispricing_detection():
    with criterion(6, "inflated quote flagged over; clean quotes stay fair", 120):
        rng = np.random.default_rng(2024)
        chain, _d, _z = make_exact_chain(rng, q=20, width_range=(0.03, 0.06), dirichlet_alpha=3.0)
        target_index = 10
        calls = dict(chain.call_quotes)
        calls[target_index] *= 1.10
        bad = OptionChain(
            chain.trade_date, chain.expiry_date, chain.spot, chain.strikes,
            calls, chain.put_quotes, chain.cum_rate,
        )
        report = scan_chain(bad, FitConfig(), B=50, level=0.95, seed=99)
        repeat = scan_chain(bad, FitConfig(), B=50, level=0.95, seed=99)
        assert report.rows == repeat.rows  # reproducible under the fixed seed
        target_strike = float(chain.strikes[target_index])
        target_rows = [r for r in report.rows if r.side == "call" and r.strike == target_strike]
        assert target_rows[0].flag == FLAG_OVER
        clean = [r for r in report.rows if r is not target_rows[0]]
        fair_fraction = sum(r.flag == FLAG_FAIR for r in clean) / len(clean)
        assert fair_fraction >= 0.9


def test_07_swap_value_matches_monte_carlo():
    with criterion(7, "moment formula matches Monte-Carlo swap payoffs", 120):
        log_s0 = math.log(100.0)
        for seed, (drift, vol, total) in enumerate(
            [(0.0003, 0.010, 40), (-0.0002, 0.020, 60), (0.0005, 0.015, 25)], start=1
        ):
            days = np.arange(1, total + 1)
            curve = MomentCurve(log_s0, days, log_s0 + drift * days, vol * vol * days)
            spec = VarSwapSpec(
                notional=50.0, strike_var=0.04, total_days=total, observed_days=0,
                realized_returns=np.zeros(0), cum_rate=0.001,
            )
            value = varswap_price(spec, curve)
            rng = np.random.default_rng(seed)
            paths, chunk = 10**6, 10**5
            total_sum = total_sq = 0.0
            for _ in range(paths // chunk):
                sums = np.sum((drift + vol * rng.standard_normal((chunk, total))) ** 2, axis=1)
                total_sum += float(np.sum(sums))
                total_sq += float(np.sum(sums * sums))
            mean = total_sum / paths
            spread = math.sqrt((total_sq / paths - mean * mean) / paths)
            disc_notional = math.exp(-0.001) * 50.0
            mc_value = disc_notional * (252.0 / total * mean - 0.04)
            tolerance = 3.0 * disc_notional * 252.0 / total * spread
            assert abs(value - mc_value) <= tolerance


def test_08_moment_interpolation_and_replication():
    with criterion(8, "interpolation nodes exact; replication round trip", 10):
        log_s0 = math.log(100.0)
        curve = MomentCurve(
            log_s0, np.array([10, 20]), np.array([4.6, 4.8]), np.array([1.0, 9.0])
        )
        assert interp_mean(curve, 10) == 4.6
        assert interp_mean(curve, 20) == 4.8
        assert interp_variance(curve, 10) == 1.0
        assert interp_variance(curve, 20) == 9.0
        assert interp_mean(curve, 15) == pytest.approx(4.7, abs=1e-15)
        assert interp_variance(curve, 15) == pytest.approx(((1.0 + 3.0) / 2) ** 2, abs=1e-12)
        rng = np.random.default_rng(808)
        total, start = 15, 6
        returns = rng.normal(0.0, 0.012, size=total)
        spec = VarSwapSpec(
            notional=50.0, strike_var=0.03, total_days=total, observed_days=start - 1,
            realized_returns=returns[: start - 1], cum_rate=0.002,
        )
        quote = iug(returns[start - 1 :], 252.0, start, total)
        replicated = replicate_from_future(returns[: start - 1], quote, start, total, spec)
        realized_spec = VarSwapSpec(
            notional=50.0, strike_var=0.03, total_days=total, observed_days=total,
            realized_returns=returns, cum_rate=0.002,
        )
        empty = MomentCurve(log_s0, np.zeros(0, dtype=int), np.zeros(0), np.zeros(0))
        fully_realized = varswap_price(realized_spec, empty)
        assert replicated == pytest.approx(fully_realized, rel=1e-12)


def test_09_error_metric_units():
    with criterion(9, "error metric unit cases", 10):
        abs_error, rel_error = error_metrics([2.0], [1.0], [], [])
        assert abs_error == pytest.approx(1.0, abs=1e-12)
        assert rel_error == pytest.approx(1.0, abs=1e-12)
        abs_error, _ = error_metrics([4.0, 5.0], [1.0, 1.0], [], [])
        assert abs_error == pytest.approx(3.5355, abs=1e-4)


def test_10_argmin_invariance():
    with criterion(10, "objective scaling and LS/WLS weight identities", 10):
        rng = np.random.default_rng(1010)
        chain, _density, design = make_exact_chain(rng, q=10)
        noisy = perturb_chain(chain, rng, noise=0.05)
        # WLS at equal prices applies a uniform weight (a rescaled objective):
        # price 1.0 gives weight 1 (the LS-equals-WLS identity), price 0.5
        # gives weight 4 (a pure rescaling)
        for price in (1.0, 0.5):
            flat = OptionChain(
                noisy.trade_date, noisy.expiry_date, noisy.spot, noisy.strikes,
                {i: price for i in noisy.call_quotes},
                {i: price for i in noisy.put_quotes},
                noisy.cum_rate,
            )
            ls = fit(flat, design, FitConfig(mode="ls"))
            wls = fit(flat, design, FitConfig(mode="wls"))
            assert np.max(np.abs(ls.density.heights - wls.density.heights)) < 1e-10
        # direct rescaling of the internal least-squares system
        from rndfit.solver import _assemble, _feasible_region, constrained_lstsq

        problem = _assemble(noisy, design, FitConfig())
        dlog = np.diff(design.log_knots)
        sqrt_w = np.sqrt(problem.weights)
        matrix = sqrt_w[:, None] * (problem.discount * problem.design_rows)
        target = sqrt_w * (problem.market - problem.discount * problem.offsets)
        constraints, bounds = _feasible_region(dlog)
        start = np.full(design.q, 1.0 / dlog.sum())
        plain, _ = constrained_lstsq(matrix, target, constraints, bounds, start)
        scale = math.sqrt(math.pi)
        scaled, _ = constrained_lstsq(scale * matrix, scale * target, constraints, bounds, start)
        assert np.max(np.abs(plain - scaled)) < 1e-10
