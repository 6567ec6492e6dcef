"""Fluoridation plant, IMC-tuned PID and the Smith-predictor loop around them."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .lti import ContinuousTransferFunction, DiscreteLinearSystem, discretize_zoh

__all__ = [
    "PLANT_GAIN",
    "PLANT_DELAY",
    "PidParams",
    "SmithController",
    "make_plant",
    "make_internal_model",
    "make_pid",
    "make_smith_controller",
    "controller_step",
]

PLANT_GAIN = 0.93
PLANT_TIME_CONSTANTS = (1.07, 0.34)
PLANT_DELAY = 0.45

MODEL_GAIN = 0.62
MODEL_POLE = 0.64
MODEL_DELAY = 0.29


@dataclass(frozen=True)
class PidParams:
    """Parallel-form PID ``Kp (1 + 1/(Ti s) + Td s / (Td s / N + 1))``.

    ``Ti = inf`` drops the integral path and ``Td = 0`` the derivative path.
    The default ``derivative_filter_N = 2`` keeps the filter time constant
    ``Td/N`` above the 0.1 h sample period; with N = 10 the zero-order-hold
    controller destabilises the loop.
    """

    Kp: float = 1.69
    Ti: float = 1.41
    Td: float = 0.26
    derivative_filter_N: float = 2.0

    def __post_init__(self):
        if not self.Kp > 0:
            raise ValueError(f"Kp must be > 0, got {self.Kp}")
        if not self.Ti > 0:
            raise ValueError(f"Ti must be > 0, got {self.Ti}")
        if not self.Td >= 0:
            raise ValueError(f"Td must be >= 0, got {self.Td}")
        if not self.derivative_filter_N > 0:
            raise ValueError(f"derivative_filter_N must be > 0, got {self.derivative_filter_N}")

    def transfer_function(self) -> ContinuousTransferFunction:
        Kp, Ti, Td, N = self.Kp, self.Ti, self.Td, self.derivative_filter_N
        integral = math.isfinite(Ti)
        if Td == 0.0:
            if not integral:
                return ContinuousTransferFunction((Kp,), (1.0,))
            return ContinuousTransferFunction((Kp * Ti, Kp), (Ti, 0.0))
        tf = Td / N
        if not integral:
            # Kp (1 + Td s/(tf s + 1)) = Kp ((tf + Td) s + 1) / (tf s + 1)
            return ContinuousTransferFunction((Kp * (tf + Td), Kp), (tf, 1.0))
        num = (Kp * Ti * (tf + Td), Kp * (Ti + tf), Kp)
        den = (Ti * tf, Ti, 0.0)
        return ContinuousTransferFunction(num, den)


def make_plant() -> ContinuousTransferFunction:
    """Second-order-plus-dead-time fluoride dosing model (delay in hours)."""
    t1, t2 = PLANT_TIME_CONSTANTS
    return ContinuousTransferFunction((PLANT_GAIN,), (t1 * t2, t1 + t2, 1.0), PLANT_DELAY)


def make_pid(params: PidParams, Ts: float) -> DiscreteLinearSystem:
    return discretize_zoh(params.transfer_function(), Ts)


def make_internal_model(
    Ts: float, rounding: str = "nearest"
) -> tuple[DiscreteLinearSystem, DiscreteLinearSystem]:
    """First-order-plus-dead-time predictor model: (delay-free, delayed)."""
    ctf = ContinuousTransferFunction((MODEL_GAIN,), (1.0, MODEL_POLE), MODEL_DELAY)
    delayed = discretize_zoh(ctf, Ts, rounding)
    delay_free = discretize_zoh(ContinuousTransferFunction(ctf.num, ctf.den), Ts)
    return delay_free, delayed


class SmithController:
    """PID wrapped in a Smith predictor.

    ``input_lag`` says how many samples pass between the controller emitting a
    command and the loop applying it. The networked nominal loop applies the
    previous command (lag 1); a co-located controller applies it at once
    (lag 0), so its predictor must read the models after feeding them.
    """

    def __init__(
        self,
        pid: DiscreteLinearSystem,
        model_delay_free: DiscreteLinearSystem,
        model_delayed: DiscreteLinearSystem,
        input_lag: int = 1,
    ):
        if not (pid.Ts == model_delay_free.Ts == model_delayed.Ts):
            raise ValueError("PID and predictor models must share one sample time")
        if input_lag not in (0, 1):
            raise ValueError(f"input_lag must be 0 or 1, got {input_lag}")
        self.pid = pid
        self.model_delay_free = model_delay_free
        self.model_delayed = model_delayed
        self.input_lag = input_lag

    @property
    def Ts(self) -> float:
        return self.pid.Ts

    def step(self, y_ref: float, y_fb: float, u_prev: float) -> float:
        if self.input_lag:
            y_hat = self.model_delay_free.step(u_prev)
            y_hat_delayed = self.model_delayed.step(u_prev)
        else:
            self.model_delay_free.step(u_prev)
            self.model_delayed.step(u_prev)
            y_hat = self.model_delay_free.output()
            y_hat_delayed = self.model_delayed.output()
        error = y_ref - y_fb - (y_hat - y_hat_delayed)
        return self.pid.step(error)

    def reset(self) -> "SmithController":
        self.pid.reset()
        self.model_delay_free.reset()
        self.model_delayed.reset()
        return self


def make_smith_controller(
    Ts: float,
    params: PidParams | None = None,
    model: ContinuousTransferFunction | None = None,
    input_lag: int = 1,
    rounding: str = "nearest",
) -> SmithController:
    """Nominal controller; pass ``model`` to swap the FOPTD predictor model."""
    params = params or PidParams()
    if model is None:
        delay_free, delayed = make_internal_model(Ts, rounding)
    else:
        delayed = discretize_zoh(model, Ts, rounding)
        delay_free = discretize_zoh(ContinuousTransferFunction(model.num, model.den), Ts)
    return SmithController(make_pid(params, Ts), delay_free, delayed, input_lag)


def controller_step(ctrl: SmithController, y_ref: float, y_fb: float, u_prev: float) -> float:
    return ctrl.step(y_ref, y_fb, u_prev)
