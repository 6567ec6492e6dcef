"""Covert man-in-the-middle agent.

The agent sits on both network legs. It adds its own actuation ``mu`` to the
controller command and subtracts its model's predicted response ``gamma`` from
the measurement, so the controller keeps seeing the nominal loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lti import ContinuousTransferFunction, DiscreteLinearSystem, discretize_zoh
from .plant import PidParams, SmithController, make_pid, make_plant

__all__ = [
    "AttackerConfig",
    "CovertAgent",
    "identified_model",
    "intercept",
    "covert_tracking_error",
]

COVERT_STRUCTURES = ("smith", "pid")
MISMATCH_MODES = ("gain", "coefficients")


def identified_model(alpha: float, mode: str = "gain") -> ContinuousTransferFunction:
    """Attacker's estimate of the plant.

    ``"gain"`` scales the numerator only (``alpha * P``). ``"coefficients"``
    also scales every non-constant denominator coefficient, so the time
    constants are off by the same factor as the gain.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if mode not in MISMATCH_MODES:
        raise ValueError(f"mode must be one of {MISMATCH_MODES}, got {mode!r}")
    plant = make_plant()
    num = tuple(alpha * c for c in plant.num)
    den = plant.den
    if mode == "coefficients":
        den = tuple(alpha * c for c in den[:-1]) + (den[-1],)
    return ContinuousTransferFunction(num, den, plant.delay)


@dataclass(frozen=True)
class AttackerConfig:
    alpha: float = 1.0
    gamma_ref: float = 0.0
    attack_start: int = 0
    covert_controller: PidParams = field(default_factory=PidParams)
    structure: str = "smith"
    mismatch: str = "gain"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.attack_start < 0:
            raise ValueError(f"attack_start must be >= 0, got {self.attack_start}")
        if self.structure not in COVERT_STRUCTURES:
            raise ValueError(f"structure must be one of {COVERT_STRUCTURES}")
        if self.mismatch not in MISMATCH_MODES:
            raise ValueError(f"mismatch must be one of {MISMATCH_MODES}")


class CovertAgent:
    """Stateful attacker for one simulated loop.

    The agent only ever sees ``u_c`` and ``y_m``; ``gamma`` is always the
    response of its own model to the full history of ``mu``.
    """

    def __init__(self, config: AttackerConfig, Ts: float, rounding: str = "nearest"):
        self.config = config
        pi_u = identified_model(config.alpha, config.mismatch)
        self.model: DiscreteLinearSystem = discretize_zoh(pi_u, Ts, rounding)
        self.controller: SmithController | None = None
        self.pid: DiscreteLinearSystem | None = None
        if config.structure == "smith":
            delay_free = discretize_zoh(ContinuousTransferFunction(pi_u.num, pi_u.den), Ts)
            delayed = discretize_zoh(pi_u, Ts, rounding)
            # mu reaches the model in the same sample it is computed
            self.controller = SmithController(
                make_pid(config.covert_controller, Ts), delay_free, delayed, input_lag=0
            )
        else:
            self.pid = make_pid(config.covert_controller, Ts)
        self.gamma = 0.0
        self.mu = 0.0
        self.active = False

    def intercept(self, u_c: float, y_m: float, t: int) -> tuple[float, float]:
        """Relay one sample; returns ``(u, y_ma)``."""
        if t < self.config.attack_start:
            self.model.step(0.0)
            self.gamma = 0.0
            self.mu = 0.0
            return u_c, y_m
        self.active = True
        gamma = self.model.output()
        y_ma = y_m - gamma
        if self.controller is not None:
            mu = self.controller.step(self.config.gamma_ref, gamma, self.mu)
        else:
            mu = self.pid.step(self.config.gamma_ref - gamma)
        self.model.step(mu)
        self.gamma, self.mu = gamma, mu
        return u_c + mu, y_ma

    def covert_tracking_error(self) -> float:
        if not self.active:
            raise RuntimeError("agent has not started attacking")
        return self.config.gamma_ref - self.gamma


def intercept(agent: CovertAgent, u_c: float, y_m: float, t: int) -> tuple[float, float]:
    return agent.intercept(u_c, y_m, t)


def covert_tracking_error(agent: CovertAgent) -> float:
    return agent.covert_tracking_error()
