import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covert_mitm.lti import discretize_zoh
from covert_mitm.plant import make_plant
from covert_mitm.theory import (
    StealthBoundInput,
    leakage_suite,
    monte_carlo_stealth,
    residual_norm_lemma,
    stealth_probability_bound,
    stealth_sufficient_condition,
    stealth_bound_suite,
)


def test_bound_closed_form():
    inp = StealthBoundInput(r_norm=0.0, sigma=1.0, d=1, delta=3.0)
    assert stealth_probability_bound(inp) == pytest.approx(1 - math.exp(-2.0), rel=1e-15)


def test_bound_nan_outside_validity():
    assert math.isnan(stealth_probability_bound(StealthBoundInput(0.5, 0.1, 25, 1.0)))
    assert math.isnan(stealth_probability_bound(StealthBoundInput(0.5, 0.1, 25, 0.2)))
    assert not math.isnan(stealth_probability_bound(StealthBoundInput(0.5, 0.1, 25, 1.0001)))


@pytest.mark.parametrize(
    "kwargs", [dict(r_norm=-1, sigma=1, d=1, delta=1), dict(r_norm=0, sigma=0, d=1, delta=1),
               dict(r_norm=0, sigma=1, d=0, delta=1)]
)
def test_bound_input_validation(kwargs):
    with pytest.raises(ValueError):
        StealthBoundInput(**kwargs)


def test_sufficient_condition_is_strict():
    assert stealth_sufficient_condition(0.1, 0.2, 0.31)
    assert not stealth_sufficient_condition(0.1, 0.2, 0.3)


def test_monte_carlo_without_noise_is_deterministic():
    r = np.full(4, 0.5)  # norm 1
    assert monte_carlo_stealth(r, 0.0, 1.0, trials=1000) == 1.0
    assert monte_carlo_stealth(r, 0.0, 0.999, trials=1000) == 0.0


def test_monte_carlo_requires_enough_trials():
    with pytest.raises(ValueError):
        monte_carlo_stealth(np.zeros(3), 1.0, 1.0, trials=999)


def test_monte_carlo_reproducible():
    r = np.linspace(0, 0.1, 20)
    a = monte_carlo_stealth(r, 0.05, 0.5, trials=5000, seed=4)
    assert a == monte_carlo_stealth(r, 0.05, 0.5, trials=5000, seed=4, chunk=777)


@settings(max_examples=15, deadline=None)
@given(
    d=st.integers(1, 30),
    r_norm=st.floats(0.0, 2.0),
    sigma=st.floats(0.01, 1.0),
    offset=st.floats(0.1, 4.0),
)
def test_monte_carlo_dominates_bound(d, r_norm, sigma, offset):
    r = np.zeros(d)
    r[0] = r_norm
    delta = r_norm + math.sqrt(d) * sigma + offset * sigma
    bound = stealth_probability_bound(StealthBoundInput(r_norm, sigma, d, delta))
    p = monte_carlo_stealth(r, sigma, delta, trials=4000, seed=d)
    assert p >= bound - 3 * math.sqrt(max(p * (1 - p), 1e-12) / 4000) - 1e-12


def test_leakage_residual_symmetric_in_mismatch():
    plant = discretize_zoh(make_plant(), 0.1)
    mu = np.random.default_rng(0).normal(size=200)
    assert residual_norm_lemma(0.95, mu, plant) == pytest.approx(
        residual_norm_lemma(1.05, mu, plant), rel=1e-12
    )
    assert residual_norm_lemma(1.0, mu, plant) == 0.0


def test_leakage_holds_in_closed_loop():
    records = leakage_suite()
    assert [r["alpha"] for r in records] == [0.9, 0.95, 1.05, 1.1]
    for rec in records:
        assert rec["passed"], rec
        assert rec["predicted_norm"] > 0


def test_stealth_bound_suite_skips_invalid_cells():
    r = np.full(10, 0.01)
    recs = stealth_bound_suite(r, sigmas=[0.01], delta_offsets=[-0.5, 1.0], trials=2000)
    assert [rec["valid"] for rec in recs] == [False, True]
    assert all(rec["passed"] for rec in recs)
