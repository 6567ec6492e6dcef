import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covert_mitm.lti import (
    ContinuousTransferFunction,
    DiscreteLinearSystem,
    InfiniteDCGain,
    dc_gain,
    delay_to_samples,
    discretize_zoh,
    reset,
    step,
)
from covert_mitm.plant import make_internal_model, make_plant

TS = 0.1


def test_plant_dc_gain_survives_zoh():
    assert dc_gain(discretize_zoh(make_plant(), TS)) == pytest.approx(0.93, abs=1e-12)


def test_internal_model_dc_gain():
    _, delayed = make_internal_model(TS)
    assert dc_gain(delayed) == pytest.approx(0.62 / 0.64, abs=1e-12)


@pytest.mark.parametrize(
    "delay, expected", [(0.45, 5), (0.29, 3), (0.0, 0), (0.25, 3), (0.44, 4)]
)
def test_delay_rounds_half_away_from_zero(delay, expected):
    assert delay_to_samples(delay, TS) == expected


def test_delay_rounding_alternatives():
    assert delay_to_samples(0.45, TS, "floor") == 4
    assert delay_to_samples(0.45, TS, "ceil") == 5
    assert delay_to_samples(0.29, TS, "floor") == 2
    with pytest.raises(ValueError):
        delay_to_samples(0.45, TS, "banker")


def test_plant_discretization_carries_delay():
    assert discretize_zoh(make_plant(), TS).delay_samples == 5


def test_first_order_step_matches_closed_form():
    sys = discretize_zoh(ContinuousTransferFunction((1.0,), (1.0, 1.0)), TS)
    y = sys.simulate(np.ones(60))
    k = np.arange(60)
    np.testing.assert_allclose(y, 1.0 - np.exp(-TS * k), rtol=0, atol=1e-10)


def test_zero_input_gives_zero_output():
    sys = discretize_zoh(make_plant(), TS)
    assert step(sys, 0.0) == 0.0


def test_pure_gain_is_feedthrough():
    sys = DiscreteLinearSystem([], [], [], [[0.93]], TS)
    assert step(sys, 1.0) == pytest.approx(0.93)
    sys2 = discretize_zoh(ContinuousTransferFunction((0.93,), (1.0,)), TS)
    assert sys2.order == 0
    assert step(sys2, 1.0) == pytest.approx(0.93)


def test_long_step_settles_at_dc_gain():
    sys = discretize_zoh(make_plant(), TS)
    y = sys.simulate(np.ones(400))
    assert abs(y[-1] - 0.93) < 1e-6


def test_integrator_has_infinite_dc_gain():
    sys = discretize_zoh(ContinuousTransferFunction((1.0,), (1.0, 0.0)), TS)
    with pytest.raises(InfiniteDCGain):
        dc_gain(sys)


def test_reset_zeroes_state_and_buffer():
    sys = discretize_zoh(make_plant(), TS)
    sys.simulate(np.linspace(0, 1, 20))
    reset(sys)
    assert step(sys, 0.0) == 0.0
    assert list(sys.delay_buffer) == [0.0] * 5


def test_reset_is_idempotent():
    a = discretize_zoh(make_plant(), TS)
    a.simulate(np.ones(10))
    a.reset()
    s1, b1 = a.state.copy(), list(a.delay_buffer)
    a.reset()
    np.testing.assert_array_equal(a.state, s1)
    assert list(a.delay_buffer) == b1


def test_reset_then_replay_is_identical():
    sys = discretize_zoh(make_plant(), TS)
    u = np.sin(np.arange(50) / 3.0)
    first = sys.simulate(u)
    sys.reset()
    np.testing.assert_array_equal(sys.simulate(u), first)


def test_output_peek_matches_step():
    sys = discretize_zoh(make_plant(), TS)
    for u in np.cos(np.arange(30)):
        peek = sys.output()
        assert sys.step(u) == peek


def test_output_peek_refuses_feedthrough():
    sys = DiscreteLinearSystem([], [], [], [[2.0]], TS)
    with pytest.raises(ValueError):
        sys.output()


@pytest.mark.parametrize(
    "num, den",
    [((1.0, 0.0, 0.0), (1.0, 1.0)), ((1.0,), (0.0, 1.0))],
)
def test_improper_or_degenerate_transfer_functions_rejected(num, den):
    with pytest.raises(ValueError):
        ContinuousTransferFunction(num, den)


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        ContinuousTransferFunction((1.0,), (1.0, 1.0), -0.1)


@pytest.mark.parametrize("Ts", [0.0, -0.1])
def test_nonpositive_sample_time_rejected(Ts):
    with pytest.raises(ValueError):
        discretize_zoh(make_plant(), Ts)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_input_rejected(bad):
    sys = discretize_zoh(make_plant(), TS)
    with pytest.raises(ValueError):
        sys.step(bad)


# ---- properties -------------------------------------------------------------

seqs = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=40)


@settings(max_examples=40, deadline=None)
@given(u=seqs, v_seed=st.integers(0, 2**16), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_linearity(u, v_seed, a, b):
    u = np.array(u)
    v = np.random.default_rng(v_seed).uniform(-10, 10, u.size)
    sys = discretize_zoh(make_plant(), TS)
    yu = sys.copy().simulate(u)
    yv = sys.copy().simulate(v)
    ymix = sys.copy().simulate(a * u + b * v)
    np.testing.assert_allclose(ymix, a * yu + b * yv, rtol=0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(x=seqs, k=st.integers(0, 12))
def test_pure_delay_shifts(x, k):
    sys = DiscreteLinearSystem([], [], [], [[1.0]], TS, delay_samples=k)
    y = sys.simulate(x)
    expected = np.concatenate([np.zeros(k), np.array(x)])[: len(x)]
    np.testing.assert_array_equal(y, expected)
    assert len(sys.delay_buffer) == k


@settings(max_examples=60, deadline=None)
@given(
    poles=st.lists(st.floats(0.05, 20.0), min_size=1, max_size=4),
    zeros_frac=st.floats(0.0, 1.0),
    gain=st.floats(-5.0, 5.0),
    Ts=st.floats(0.01, 1.0),
)
def test_zoh_preserves_dc_gain(poles, zeros_frac, gain, Ts):
    den = np.poly([-p for p in poles])
    m = int(round(zeros_frac * (len(poles) - 1)))
    num = gain * np.poly([-1.0 - i for i in range(m)]) if m else np.array([gain])
    ctf = ContinuousTransferFunction(tuple(num), tuple(den))
    expected = num[-1] / den[-1]
    assert abs(dc_gain(discretize_zoh(ctf, Ts)) - expected) <= 1e-10 * max(1.0, abs(expected))


@settings(max_examples=20, deadline=None)
@given(u=seqs)
def test_deterministic(u):
    a = discretize_zoh(make_plant(), TS).simulate(u)
    b = discretize_zoh(make_plant(), TS).simulate(u)
    assert a.tobytes() == b.tobytes()
