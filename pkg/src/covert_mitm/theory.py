"""Residual leakage under model error and the probabilistic stealth bound,
as executable checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .experiments import SimulationConfig, SimulationTrace, run_closed_loop
from .lti import DiscreteLinearSystem, discretize_zoh
from .plant import make_plant

__all__ = [
    "StealthBoundInput",
    "plant_response",
    "nominal_component",
    "predicted_residual",
    "residual_norm_lemma",
    "stealth_sufficient_condition",
    "stealth_probability_bound",
    "monte_carlo_stealth",
    "leakage_suite",
    "stealth_bound_suite",
]


@dataclass(frozen=True)
class StealthBoundInput:
    r_norm: float
    sigma: float
    d: int
    delta: float

    def __post_init__(self):
        if self.r_norm < 0:
            raise ValueError("r_norm must be >= 0")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @property
    def valid(self) -> bool:
        return self.delta > self.r_norm + math.sqrt(self.d) * self.sigma


def _plant(config: SimulationConfig) -> DiscreteLinearSystem:
    return discretize_zoh(make_plant(), config.Ts, config.delay_rounding)


def plant_response(inputs, plant: DiscreteLinearSystem) -> np.ndarray:
    """Output of ``plant`` (restarted from rest) driven by ``inputs``."""
    return plant.copy().reset().simulate(inputs)


def nominal_component(trace: SimulationTrace) -> np.ndarray:
    """Plant output due to the controller's commands alone.

    Replays a fresh plant from rest on ``u - mu`` (warm-up included) and adds
    the recorded noise, i.e. ``y_m`` with the covert injection removed.
    """
    plant = _plant(trace.config)
    commands = np.concatenate([trace.warmup_u, trace.u - trace.mu])
    y = plant.simulate(commands)[trace.warmup_u.size :]
    return y + trace.n


def predicted_residual(alpha: float, mu_series, plant: DiscreteLinearSystem) -> np.ndarray:
    """Predicted leakage ``(1 - alpha) P mu`` with ``P mu`` simulated from rest."""
    return (1.0 - alpha) * plant_response(mu_series, plant)


def residual_norm_lemma(alpha: float, mu_series, plant: DiscreteLinearSystem) -> float:
    """``|1 - alpha| * ||P mu||_2``."""
    return float(np.linalg.norm(predicted_residual(alpha, mu_series, plant)))


def stealth_sufficient_condition(r_norm: float, n_norm: float, delta: float) -> bool:
    return r_norm < delta - n_norm


def stealth_probability_bound(inp: StealthBoundInput) -> float:
    """Lower bound on ``P(||r + n||_2 <= delta)``; NaN outside its validity region."""
    if not inp.valid:
        return float("nan")
    gap = inp.delta - inp.r_norm - math.sqrt(inp.d) * inp.sigma
    return 1.0 - math.exp(-(gap**2) / (2.0 * inp.sigma**2))


def monte_carlo_stealth(
    r, sigma: float, delta: float, trials: int = 100_000, seed: int = 0, chunk: int = 10_000
) -> float:
    """Fraction of ``n ~ N(0, sigma^2 I)`` draws with ``||r + n||_2 <= delta``.

    Draws come from ``numpy.random.default_rng(seed)`` (PCG64), in chunks.
    """
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    r = np.asarray(r, dtype=float)
    rng = np.random.default_rng(seed)
    hidden = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        n = sigma * rng.standard_normal((m, r.size))
        hidden += int(np.count_nonzero(np.linalg.norm(r + n, axis=1) <= delta))
        done += m
    return hidden / trials


def leakage_suite(
    alphas: Sequence[float] = (0.9, 0.95, 1.05, 1.1),
    base: SimulationConfig | None = None,
    rtol: float = 1e-6,
) -> list[dict]:
    """Compare closed-loop leakage with ``|1 - alpha| ||P mu||`` per alpha.

    ``closed_loop_vs_attack_free`` is reported for reference only: the nominal
    controller reacts to the leaked residual, so the attack-free trace differs
    from the nominal component by the loop's sensitivity.
    """
    base = base or replace(SimulationConfig(), noise_power=0.0, gamma_ref=0.25)
    plant = _plant(base)
    attack_free = run_closed_loop(base.attack_free())
    records = []
    for alpha in alphas:
        trace = run_closed_loop(replace(base, alpha=alpha))
        leak = trace.y_ma - nominal_component(trace)
        expected = predicted_residual(alpha, trace.mu, plant)
        measured = float(np.linalg.norm(leak))
        predicted = float(np.linalg.norm(expected))
        scale = max(predicted, np.finfo(float).tiny)
        rel = abs(measured - predicted) / scale
        # the norm alone cannot see a sign error in (1 - alpha)
        vec_rel = float(np.linalg.norm(leak - expected)) / scale
        records.append(
            {
                "alpha": alpha,
                "measured_norm": measured,
                "predicted_norm": predicted,
                "relative_error": rel,
                "vector_relative_error": vec_rel,
                "closed_loop_vs_attack_free": float(np.linalg.norm(trace.y_ma - attack_free.y_ma)),
                "passed": bool(rel <= rtol and vec_rel <= rtol),
            }
        )
    return records


def stealth_bound_suite(
    r,
    sigmas: Sequence[float],
    delta_offsets: Sequence[float],
    trials: int = 100_000,
    seed: int = 0,
) -> list[dict]:
    """Monte Carlo check that empirical stealth dominates the analytic bound.

    Thresholds are ``delta = ||r|| + sqrt(d) sigma + offset * sigma``; negative
    offsets give cells outside the bound's validity region, which are skipped.
    A cell passes when ``empirical >= bound - 3 * sqrt(p (1 - p) / trials)``.
    """
    r = np.asarray(r, dtype=float)
    d = r.size
    r_norm = float(np.linalg.norm(r))
    records = []
    for i, sigma in enumerate(sigmas):
        for j, offset in enumerate(delta_offsets):
            delta = r_norm + math.sqrt(d) * sigma + offset * sigma
            inp = StealthBoundInput(r_norm, sigma, d, delta)
            bound = stealth_probability_bound(inp)
            rec = {"sigma": sigma, "delta": delta, "d": d, "r_norm": r_norm, "bound": bound}
            if not inp.valid:
                records.append({**rec, "valid": False, "empirical": None, "passed": True})
                continue
            p = monte_carlo_stealth(r, sigma, delta, trials, seed + 1000 * i + j)
            se = math.sqrt(p * (1.0 - p) / trials)
            slack = p - (bound - 3.0 * se)
            records.append(
                {**rec, "valid": True, "empirical": p, "slack": slack, "passed": bool(slack >= 0)}
            )
    return records
