from dataclasses import replace

import numpy as np
import pytest

from covert_mitm.attacker import AttackerConfig, CovertAgent, identified_model
from covert_mitm.experiments import run_closed_loop
from covert_mitm.lti import dc_gain, discretize_zoh
from covert_mitm.plant import make_plant
from covert_mitm.theory import nominal_component

from conftest import NOISE_FREE

TS = 0.1


@pytest.mark.parametrize("alpha, gain", [(0.9, 0.837), (1.1, 1.023), (1.0, 0.93)])
def test_identified_model_gain(alpha, gain):
    assert dc_gain(discretize_zoh(identified_model(alpha), TS)) == pytest.approx(gain, abs=1e-12)


def test_coefficient_mismatch_scales_time_constants():
    m = identified_model(1.1, "coefficients")
    plant = make_plant()
    np.testing.assert_allclose(m.den[:-1], [1.1 * c for c in plant.den[:-1]])
    assert m.den[-1] == plant.den[-1]
    assert m.delay == plant.delay


@pytest.mark.parametrize("alpha", [0.0, -1.0])
def test_nonpositive_alpha_rejected(alpha):
    with pytest.raises(ValueError):
        identified_model(alpha)
    with pytest.raises(ValueError):
        AttackerConfig(alpha=alpha)


def test_bad_structure_rejected():
    with pytest.raises(ValueError):
        AttackerConfig(structure="lqr")


def test_passthrough_before_attack_start():
    agent = CovertAgent(AttackerConfig(alpha=1.05, gamma_ref=0.5, attack_start=10), TS)
    for t in range(10):
        assert agent.intercept(0.3 + t, -0.2 * t, t) == (0.3 + t, -0.2 * t)
    assert agent.mu == 0.0 and agent.gamma == 0.0
    with pytest.raises(RuntimeError):
        agent.covert_tracking_error()


def test_first_attack_sample_has_no_measurement_offset():
    agent = CovertAgent(AttackerConfig(gamma_ref=0.5), TS)
    u, y_ma = agent.intercept(0.1, 0.2, 0)
    assert y_ma == 0.2
    assert u == pytest.approx(0.1 + agent.mu)
    assert agent.mu != 0.0


def test_perfect_model_conceals_attack(nominal_trace, perfect_attack_trace):
    start = NOISE_FREE.attack_start
    diff = np.abs(perfect_attack_trace.y_ma - nominal_trace.y_ma)
    assert diff.max() <= 1e-9
    assert perfect_attack_trace.y[-1] == pytest.approx(0.75, abs=1e-3)
    assert perfect_attack_trace.mu[:start].max() == 0.0


def test_mismatch_leaks_exactly_scaled_plant_response(mismatched_attack_trace):
    tr = mismatched_attack_trace
    leak = tr.y_ma - nominal_component(tr)
    plant = discretize_zoh(make_plant(), TS)
    expected = (1.0 - 1.05) * plant.simulate(tr.mu)
    np.testing.assert_allclose(leak, expected, rtol=0, atol=1e-8)
    assert np.abs(leak).max() > 1e-4


def test_covert_loop_tracks_gamma_ref():
    agent = CovertAgent(AttackerConfig(gamma_ref=0.25), TS)
    for t in range(800):
        agent.intercept(0.0, 0.0, t)
    assert abs(agent.covert_tracking_error()) < 1e-6


def test_zero_gamma_ref_leaves_loop_untouched(nominal_trace):
    tr = run_closed_loop(replace(NOISE_FREE, gamma_ref=0.0, alpha=1.1))
    assert np.all(tr.mu == 0.0)
    np.testing.assert_array_equal(tr.y_ma, nominal_trace.y_ma)


def test_agent_is_causal():
    """Outputs up to t depend only on inputs up to t."""
    rng = np.random.default_rng(3)
    a = rng.normal(size=60)
    b = a.copy()
    b[40:] += 5.0
    cfg = AttackerConfig(alpha=1.05, gamma_ref=0.3, attack_start=5)
    ag1, ag2 = CovertAgent(cfg, TS), CovertAgent(cfg, TS)
    out1 = [ag1.intercept(x, -x, t) for t, x in enumerate(a)]
    out2 = [ag2.intercept(x, -x, t) for t, x in enumerate(b)]
    assert out1[:40] == out2[:40]


def test_plain_pid_structure_tracks():
    tr = run_closed_loop(replace(NOISE_FREE, gamma_ref=0.25, alpha=1.0, covert_structure="pid"))
    assert tr.y[-1] == pytest.approx(0.75, abs=1e-3)
