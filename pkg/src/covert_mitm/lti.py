"""Discrete-time LTI systems with an integer input delay line.

Continuous transfer functions are realized in controllable canonical form and
sampled with a zero-order hold (matrix exponential of the augmented
``[[A, B], [0, 0]]`` block). Transport delay becomes a FIFO of whole samples.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "ContinuousTransferFunction",
    "DiscreteLinearSystem",
    "InfiniteDCGain",
    "delay_to_samples",
    "discretize_zoh",
    "dc_gain",
    "step",
    "reset",
]

DELAY_ROUNDING = ("nearest", "floor", "ceil")


class InfiniteDCGain(ArithmeticError):
    """Raised when a discrete system has a pole at z = 1."""


@dataclass(frozen=True)
class ContinuousTransferFunction:
    """Rational transfer function ``num(s)/den(s) * exp(-delay*s)``.

    Coefficients are in descending powers of ``s``; ``delay`` is in hours.
    """

    num: tuple[float, ...]
    den: tuple[float, ...]
    delay: float = 0.0

    def __post_init__(self):
        num = tuple(float(c) for c in np.atleast_1d(self.num))
        den = tuple(float(c) for c in np.atleast_1d(self.den))
        # strip leading zeros of the numerator so the degree check is honest
        while len(num) > 1 and num[0] == 0.0:
            num = num[1:]
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        if not den or den[0] == 0.0:
            raise ValueError("leading denominator coefficient must be nonzero")
        if len(num) > len(den):
            raise ValueError("transfer function is not proper")
        if not (self.delay >= 0.0 and math.isfinite(self.delay)):
            raise ValueError(f"delay must be finite and >= 0, got {self.delay}")

    @property
    def order(self) -> int:
        return len(self.den) - 1

    def evaluate(self, s: complex) -> complex:
        """Frequency response at ``s`` including the transport delay."""
        return np.polyval(self.num, s) / np.polyval(self.den, s) * np.exp(-self.delay * s)

    def scaled(self, gain: float) -> "ContinuousTransferFunction":
        return ContinuousTransferFunction(
            tuple(gain * c for c in self.num), self.den, self.delay
        )


def delay_to_samples(delay: float, Ts: float, rounding: str = "nearest") -> int:
    """Convert a transport delay to a whole number of samples.

    ``"nearest"`` rounds half away from zero, so 0.45 h at 0.1 h gives 5.
    """
    if rounding not in DELAY_ROUNDING:
        raise ValueError(f"rounding must be one of {DELAY_ROUNDING}, got {rounding!r}")
    # 0.45 / 0.1 is not exactly 4.5 in binary; snap away float fuzz first
    ratio = round(delay / Ts, 9)
    if rounding == "floor":
        return int(math.floor(ratio))
    if rounding == "ceil":
        return int(math.ceil(ratio))
    return int(math.floor(ratio + 0.5))


def _canonical_form(num, den):
    den = np.asarray(den, dtype=float)
    num = np.asarray(num, dtype=float)
    a0 = den[0]
    den = den / a0
    num = num / a0
    n = den.size - 1
    num = np.concatenate([np.zeros(n + 1 - num.size), num])
    d = num[0]
    b = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    B = np.zeros((n, 1))
    if n:
        A[0, :] = -den[1:]
        A[1:, :-1] = np.eye(n - 1)
        B[0, 0] = 1.0
    C = b.reshape(1, n)
    D = np.array([[d]])
    return A, B, C, D


class DiscreteLinearSystem:
    """SISO state-space system ``x+ = A x + B u_d``, ``y = C x + D u_d``.

    ``u_d`` is the input delayed by ``delay_samples`` through a zero-filled FIFO.
    """

    def __init__(self, A, B, C, D, Ts: float, delay_samples: int = 0):
        A = np.atleast_2d(np.asarray(A, dtype=float)) if np.size(A) else np.zeros((0, 0))
        n = A.shape[0]
        B = np.asarray(B, dtype=float).reshape(n, 1)
        C = np.asarray(C, dtype=float).reshape(1, n)
        D = np.asarray(D, dtype=float).reshape(1, 1)
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if Ts <= 0:
            raise ValueError(f"Ts must be positive, got {Ts}")
        if delay_samples < 0 or int(delay_samples) != delay_samples:
            raise ValueError(f"delay_samples must be a nonnegative integer, got {delay_samples}")
        self.A, self.B, self.C, self.D = A, B, C, D
        self.Ts = float(Ts)
        self.delay_samples = int(delay_samples)
        # flat copies for the hot loop
        self._b = B[:, 0].copy()
        self._c = C[0].copy()
        self._d = float(D[0, 0])
        self.state = np.zeros(n)
        self.delay_buffer: deque[float] = deque([0.0] * self.delay_samples)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def output(self) -> float:
        """Output the next call to :meth:`step` will return, without advancing.

        Only defined when that output does not depend on the not-yet-known input.
        """
        if self.delay_samples:
            u_d = self.delay_buffer[0]
        elif self._d == 0.0:
            u_d = 0.0
        else:
            raise ValueError("output depends on the current input (direct feedthrough, no delay)")
        return float(self._c @ self.state) + self._d * u_d

    def step(self, u: float) -> float:
        u = float(u)
        if not math.isfinite(u):
            raise ValueError(f"non-finite input {u}")
        if self.delay_samples:
            self.delay_buffer.append(u)
            u_d = self.delay_buffer.popleft()
        else:
            u_d = u
        y = float(self._c @ self.state) + self._d * u_d
        self.state = self.A @ self.state + self._b * u_d
        return y

    def simulate(self, inputs) -> np.ndarray:
        """Step through ``inputs`` from the current state; returns the outputs."""
        return np.array([self.step(u) for u in inputs])

    def reset(self) -> "DiscreteLinearSystem":
        self.state = np.zeros(self.order)
        self.delay_buffer = deque([0.0] * self.delay_samples)
        return self

    def copy(self) -> "DiscreteLinearSystem":
        return copy.deepcopy(self)

    def dc_gain(self) -> float:
        n = self.order
        if n == 0:
            return float(self.D[0, 0])
        M = np.eye(n) - self.A
        # an integrator's pole lands on z = 1 only up to rounding
        if np.min(np.abs(1.0 - np.linalg.eigvals(self.A))) < 1e-9:
            raise InfiniteDCGain("pole at z = 1: infinite DC gain")
        return float((self.C @ np.linalg.solve(M, self.B) + self.D)[0, 0])

    def __repr__(self):
        return (
            f"DiscreteLinearSystem(order={self.order}, Ts={self.Ts}, "
            f"delay_samples={self.delay_samples})"
        )


def discretize_zoh(
    ctf: ContinuousTransferFunction, Ts: float, rounding: str = "nearest"
) -> DiscreteLinearSystem:
    """Zero-order-hold equivalent of ``ctf`` sampled every ``Ts`` hours."""
    if not Ts > 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    A, B, C, D = _canonical_form(ctf.num, ctf.den)
    n = A.shape[0]
    if n:
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = A
        M[:n, n:] = B
        E = expm(M * Ts)
        Ad, Bd = E[:n, :n], E[:n, n:]
    else:
        Ad, Bd = A, B
    return DiscreteLinearSystem(Ad, Bd, C, D, Ts, delay_to_samples(ctf.delay, Ts, rounding))


def step(sys: DiscreteLinearSystem, u: float) -> float:
    return sys.step(u)


def dc_gain(sys: DiscreteLinearSystem) -> float:
    return sys.dc_gain()


def reset(sys: DiscreteLinearSystem) -> DiscreteLinearSystem:
    return sys.reset()
