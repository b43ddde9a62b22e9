import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

import rndfit
from rndfit import (
    ExtrapolationError,
    MomentCurve,
    MomentInversionWarning,
    VarSwapSpec,
    build_curve,
    interp_mean,
    interp_variance,
    iug,
    replicate_from_future,
    second_moment_at,
    varswap_price,
)

LOG_S0 = math.log(100.0)


def curve_from(days, means, variances, log_spot=LOG_S0):
    return MomentCurve(log_spot, np.array(days, dtype=int), np.array(means, float), np.array(variances, float))


class TestInterpolation:
    def test_node_identity_exact(self):
        curve = curve_from([10, 20, 40], [4.6, 4.7, 4.9], [0.01, 0.04, 0.16])
        for day, mean, var in zip(curve.days, curve.means, curve.variances):
            assert interp_mean(curve, int(day)) == mean
            assert interp_variance(curve, int(day)) == var

    def test_day_zero(self):
        curve = curve_from([10], [4.8], [0.02])
        assert interp_mean(curve, 0) == LOG_S0
        assert interp_variance(curve, 0) == 0.0

    def test_mean_midpoint(self):
        curve = curve_from([10, 20], [4.6, 4.8], [0.0, 0.0])
        assert interp_mean(curve, 15) == pytest.approx(4.7, abs=1e-15)

    def test_mean_before_first_pillar(self):
        curve = curve_from([10], [4.9], [0.0])
        # blends the anchor and the first pillar in proportion to the day
        assert interp_mean(curve, 4) == pytest.approx((4 * 4.9 + 6 * LOG_S0) / 10.0)

    def test_variance_sqrt_midpoint(self):
        curve = curve_from([10, 20], [4.6, 4.6], [1.0, 9.0])
        assert interp_variance(curve, 15) == pytest.approx(4.0, abs=1e-12)

    def test_variance_before_first_pillar(self):
        curve = curve_from([10], [4.6], [0.04])
        # sqrt scales linearly from zero at the anchor
        assert interp_variance(curve, 5) == pytest.approx((5 / 10 * 0.2) ** 2, abs=1e-15)

    def test_extrapolation_refused(self):
        curve = curve_from([10], [4.6], [0.04])
        with pytest.raises(ExtrapolationError):
            interp_mean(curve, 11)
        with pytest.raises(ExtrapolationError):
            interp_variance(curve, 11)

    def test_second_moment_composition(self, rng):
        days = np.sort(rng.choice(np.arange(1, 100), size=5, replace=False))
        means = 4.6 + 0.01 * np.cumsum(rng.uniform(0, 1, 5))
        variances = np.cumsum(rng.uniform(0.001, 0.01, 5))
        curve = curve_from(days, means, variances)
        for day in (0, int(days[0]), int(days[2]) + 1, int(days[-1])):
            expected = interp_mean(curve, day) ** 2 + interp_variance(curve, day)
            assert second_moment_at(curve, day) == pytest.approx(expected, rel=1e-14)

    def test_zero_variance_everywhere(self):
        curve = curve_from([10, 20], [4.6, 4.7], [0.0, 0.0])
        assert second_moment_at(curve, 15) == pytest.approx(interp_mean(curve, 15) ** 2)


class TestBuildCurve:
    def test_uniform_density_closed_forms(self):
        from rndfit.density import build_log_knots

        strikes = np.array([90.0, 110.0])
        log_knots = build_log_knots(strikes, 1.5)
        level = 1.0 / (log_knots[-1] - log_knots[0])
        density = rndfit.PiecewiseDensity(1.5, log_knots, np.full(3, level))
        curve = build_curve([(30, density)], spot=100.0)
        u, v = log_knots[0], log_knots[-1]
        assert curve.means[0] == pytest.approx((u + v) / 2.0)
        assert curve.variances[0] == pytest.approx((v - u) ** 2 / 12.0, rel=1e-10)

    def test_lognormal_projection_matches_closed_form(self):
        spot, sd = 100.0, 0.2
        pillars = []
        expected = []
        for days, scale in ((30, 1.0), (60, math.sqrt(2.0))):
            sd_d = sd * scale
            mu = math.log(spot) - 0.5 * sd_d * sd_d
            strikes = np.exp(np.linspace(mu - 4 * sd_d, mu + 4 * sd_d, 160))
            pillars.append((days, rndfit.project_density(stats.norm(mu, sd_d), strikes, 1.5)))
            expected.append((mu, sd_d * sd_d))
        curve = build_curve(pillars, spot)
        for i, (mu, var) in enumerate(expected):
            assert curve.means[i] == pytest.approx(mu, abs=1e-3)
            assert curve.variances[i] == pytest.approx(var, abs=1e-3)

    def test_negative_variance_pillar_dropped(self):
        class FakeDensity:
            def mean_log(self):
                return 4.6

            def second_moment_log(self):
                return 4.6 * 4.6 - 0.01

        with pytest.warns(MomentInversionWarning):
            curve = build_curve([(30, FakeDensity())], spot=100.0)
        assert curve.days.size == 0

    def test_empty_pillars_then_pricing_refuses(self):
        curve = build_curve([], spot=100.0)
        spec = VarSwapSpec(50.0, 0.0, total_days=5, observed_days=0, realized_returns=np.zeros(0))
        with pytest.raises(ExtrapolationError):
            varswap_price(spec, curve)


class TestSwapPricing:
    def test_fully_realized_reduces_to_payoff(self):
        returns = np.array([0.01, -0.02, 0.015])
        spec = VarSwapSpec(50.0, 0.03, total_days=3, observed_days=3,
                           realized_returns=returns, cum_rate=0.002)
        curve = curve_from([], [], [])
        expected = math.exp(-0.002) * 50.0 * (252.0 / 3 * float(np.sum(returns**2)) - 0.03)
        assert varswap_price(spec, curve) == pytest.approx(expected, rel=1e-14)

    def test_deterministic_future_contributes_nothing(self):
        # pillars pinned at the spot with zero variance: the expected future
        # variance leg cancels exactly
        days = [1, 2, 3, 4, 5]
        curve = curve_from(days, [LOG_S0] * 5, [0.0] * 5)
        realized = np.array([0.012, -0.007])
        spec = VarSwapSpec(50.0, 0.01, total_days=7, observed_days=2,
                           realized_returns=realized)
        expected = 50.0 * (252.0 / 7 * float(np.sum(realized**2)) - 0.01)
        assert varswap_price(spec, curve) == pytest.approx(expected, rel=1e-12)

    def test_linear_in_notional(self):
        curve = curve_from([1, 2], [LOG_S0 + 0.001, LOG_S0 + 0.002], [0.0001, 0.0002])
        base = VarSwapSpec(1.0, 0.02, total_days=2, observed_days=0, realized_returns=np.zeros(0))
        double = VarSwapSpec(2.0, 0.02, total_days=2, observed_days=0, realized_returns=np.zeros(0))
        assert varswap_price(double, curve) == pytest.approx(2 * varswap_price(base, curve), rel=1e-14)

    def test_affine_in_strike_var(self):
        curve = curve_from([1, 2], [LOG_S0 + 0.001, LOG_S0 + 0.002], [0.0001, 0.0002])
        rate = 0.003
        specs = [
            VarSwapSpec(50.0, k, total_days=2, observed_days=0,
                        realized_returns=np.zeros(0), cum_rate=rate)
            for k in (0.0, 0.05)
        ]
        v0, v1 = (varswap_price(s, curve) for s in specs)
        assert (v1 - v0) / 0.05 == pytest.approx(-math.exp(-rate) * 50.0, rel=1e-12)

    def test_gbm_moments_match_monte_carlo(self):
        drift, vol, total = 0.0004, 0.012, 30
        days = np.arange(1, total + 1)
        curve = curve_from(days, LOG_S0 + drift * days, vol * vol * days)
        spec = VarSwapSpec(50.0, 0.02, total_days=total, observed_days=0,
                           realized_returns=np.zeros(0), cum_rate=0.001)
        value = varswap_price(spec, curve)
        rng = np.random.default_rng(77)
        paths = 200_000
        sums = np.sum((drift + vol * rng.standard_normal((paths, total))) ** 2, axis=1)
        disc_notional = math.exp(-0.001) * 50.0
        mc = disc_notional * (252.0 / total * float(np.mean(sums)) - 0.02)
        se = disc_notional * 252.0 / total * float(np.std(sums) / math.sqrt(paths))
        assert abs(value - mc) <= 3 * se

    def test_coverage_gap_refused(self):
        curve = curve_from([3], [LOG_S0], [0.001])
        spec = VarSwapSpec(50.0, 0.0, total_days=5, observed_days=0, realized_returns=np.zeros(0))
        with pytest.raises(ExtrapolationError):
            varswap_price(spec, curve)

    def test_custom_day_offsets(self):
        # trading days mapped onto a calendar with weekend gaps
        curve = curve_from([7], [LOG_S0 + 0.001], [0.0005])
        spec = VarSwapSpec(50.0, 0.0, total_days=5, observed_days=0, realized_returns=np.zeros(0))
        offsets = np.array([1, 2, 3, 6, 7])
        value = varswap_price(spec, curve, offsets)
        assert math.isfinite(value)
        with pytest.raises(ValueError):
            varswap_price(spec, curve, np.array([1, 2, 2, 6, 7]))


class TestFutureReplication:
    def test_zero_returns(self):
        assert iug(np.zeros(5), 252.0, 2, 6) == 0.0

    def test_constant_return(self):
        r = 0.013
        assert iug(np.full(4, r), 252.0, 3, 6) == pytest.approx(r * r * 252.0 * 100.0**2, rel=1e-14)

    def test_reference_replication_value(self):
        spec = VarSwapSpec(50.0, 0.0, total_days=3, observed_days=1,
                           realized_returns=np.array([0.01]))
        quote = iug(np.array([0.02, 0.02]), 252.0, 2, 3)
        value = replicate_from_future(np.array([0.01]), quote, 2, 3, spec)
        assert value == pytest.approx(50.0 * 252.0 / 3.0 * (0.0001 + 0.0008), rel=1e-12)
        assert value == pytest.approx(3.78, rel=1e-12)

    def test_round_trip_equals_fully_realized(self, rng):
        total = 12
        returns = rng.normal(0.0, 0.01, size=total)
        start = 5
        spec = VarSwapSpec(50.0, 0.04, total_days=total, observed_days=start - 1,
                           realized_returns=returns[: start - 1], cum_rate=0.002)
        quote = iug(returns[start - 1 :], 252.0, start, total)
        replicated = replicate_from_future(returns[: start - 1], quote, start, total, spec)
        realized_spec = VarSwapSpec(50.0, 0.04, total_days=total, observed_days=total,
                                    realized_returns=returns, cum_rate=0.002)
        fully_realized = varswap_price(realized_spec, curve_from([], [], []))
        assert replicated == pytest.approx(fully_realized, rel=1e-12)

    def test_empty_payoff_leg(self):
        spec = VarSwapSpec(50.0, 0.04, total_days=10, observed_days=0,
                           realized_returns=np.zeros(0), cum_rate=0.001)
        value = replicate_from_future(np.zeros(0), 0.0, 1, 10, spec)
        assert value == pytest.approx(-math.exp(-0.001) * 50.0 * 0.04, rel=1e-14)

    @given(
        st.lists(st.floats(min_value=-0.08, max_value=0.08), min_size=2, max_size=25),
        st.integers(min_value=1, max_value=24),
    )
    def test_round_trip_property(self, return_list, start):
        returns = np.array(return_list)
        total = returns.size
        start = min(start, total)
        spec = VarSwapSpec(50.0, 0.02, total_days=total, observed_days=start - 1,
                           realized_returns=returns[: start - 1])
        quote = iug(returns[start - 1 :], 252.0, start, total)
        replicated = replicate_from_future(returns[: start - 1], quote, start, total, spec)
        fully = VarSwapSpec(50.0, 0.02, total_days=total, observed_days=total,
                            realized_returns=returns)
        target = varswap_price(fully, curve_from([], [], []))
        assert replicated == pytest.approx(target, rel=1e-12, abs=1e-12)


class TestSpecValidation:
    def test_bad_observed_count(self):
        with pytest.raises(ValueError):
            VarSwapSpec(50.0, 0.0, total_days=5, observed_days=2, realized_returns=np.zeros(3))

    def test_bad_day_order(self):
        with pytest.raises(ValueError):
            curve_from([5, 3], [4.6, 4.7], [0.1, 0.2])

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            curve_from([5], [4.6], [-0.1])
