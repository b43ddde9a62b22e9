import datetime as dt

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import rndfit
from rndfit import synth

settings.register_profile(
    "ci",
    max_examples=50,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def exact_world(rng):
    """Chain priced exactly from a random feasible density, plus truth."""
    chain, density, design = synth.make_exact_chain(rng, q=12)
    return chain, density, design


@pytest.fixture
def lognormal_world():
    """Closed-form lognormal chain at 40 strikes with its distribution."""
    chain, dist = synth.make_lognormal_chain(q=40, sd_log=0.15, days=30)
    return chain, dist


def perturb_chain(chain, rng, noise=0.05):
    """Chain with multiplicative price noise (prices kept positive)."""
    calls = {i: abs(p * (1.0 + noise * rng.standard_normal())) + 1e-9
             for i, p in chain.call_quotes.items()}
    puts = {i: abs(p * (1.0 + noise * rng.standard_normal())) + 1e-9
            for i, p in chain.put_quotes.items()}
    return rndfit.OptionChain(
        chain.trade_date, chain.expiry_date, chain.spot, chain.strikes,
        calls, puts, chain.cum_rate,
    )


@pytest.fixture
def noisy_world(exact_world, rng):
    chain, density, design = exact_world
    return perturb_chain(chain, rng), design


def simple_rate_curve(start=dt.date(2024, 1, 1), n_days=400, rate=1e-4):
    dates = tuple(start + dt.timedelta(days=i) for i in range(n_days))
    return rndfit.RateCurve(dates, np.full(n_days, rate))
