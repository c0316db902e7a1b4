"""Control systems, piecewise-constant input signals, and RK4 integration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Box, _as_vector


class DomainError(ValueError):
    """Input vector outside the admissible input box."""


class IntegrationBlowupError(RuntimeError):
    """Non-finite state encountered during integration."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"integration produced a non-finite state at t={t:.6g}")


@dataclass(frozen=True)
class ControlSystem:
    """ODE x' = field(x, u) with inputs constrained to the box U."""

    n: int
    m: int
    U: Box
    field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "system"

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("state and input dimensions must be positive")
        if self.U.dim != self.m:
            raise ValueError("input box dimension does not match m")


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant input on a uniform time grid."""

    segment_duration: float
    values: np.ndarray

    def __post_init__(self):
        if self.segment_duration <= 0:
            raise ValueError("segment_duration must be positive")
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] < 1:
            raise ValueError("signal needs at least one segment")
        object.__setattr__(self, "values", values)

    @property
    def total_duration(self) -> float:
        return self.segment_duration * self.values.shape[0]

    def value_at(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("signal evaluated at negative time")
        k = int(t / self.segment_duration)
        k = min(k, self.values.shape[0] - 1)  # clamp at t = total_duration
        return self.values[k]

    @staticmethod
    def constant(u, duration: float) -> "ControlSignal":
        return ControlSignal(duration, np.atleast_2d(np.asarray(u, dtype=float)))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled solution path (final partial step permitted)."""

    times: np.ndarray
    states: np.ndarray
    x0: np.ndarray
    signal: ControlSignal

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]


def eval_field(sys: ControlSystem, x, u) -> np.ndarray:
    """Evaluate the vector field, checking dimensions and u in U."""
    x = _as_vector(x, dim=sys.n, name="state")
    u = _as_vector(u, dim=sys.m, name="input")
    if not sys.U.contains(u, tol=1e-12):
        raise DomainError(f"input {u} outside U")
    return np.asarray(sys.field(x, u), dtype=float)


def rk4_step(field, x: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    k1 = field(x, u)
    k2 = field(x + 0.5 * h * k1, u)
    k3 = field(x + 0.5 * h * k2, u)
    k4 = field(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_step_alignment(dt: float, segment_duration: float):
    ratio = segment_duration / dt
    if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
        raise ValueError(
            f"dt={dt} must divide the segment duration {segment_duration} evenly"
        )


def integrate(sys: ControlSystem, x0, signal: ControlSignal,
              horizon: float, dt: float) -> Trajectory:
    """Classical fixed-step RK4; deterministic for identical inputs.

    dt must divide the signal's segment duration so the input is constant
    within every step.
    """
    x0 = _as_vector(x0, dim=sys.n, name="x0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if horizon > signal.total_duration + 1e-9:
        raise ValueError("horizon exceeds the signal duration")
    _check_step_alignment(dt, signal.segment_duration)

    if horizon == 0.0:
        return Trajectory(np.array([0.0]), x0[None, :].copy(), x0, signal)

    n_full = int(horizon / dt + 1e-9)
    remainder = horizon - n_full * dt
    field = sys.field
    states = np.empty((n_full + (2 if remainder > 1e-12 else 1), sys.n))
    times = np.empty(states.shape[0])
    # hoist the segment lookup out of the hot loop
    seg_len = signal.segment_duration
    values = signal.values
    n_seg = values.shape[0]
    x = x0.copy()
    states[0] = x
    times[0] = 0.0
    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(n_full):
        u = values[min(int(k * dt / seg_len + 1e-9), n_seg - 1)]
        k1 = field(x, u)
        k2 = field(x + h2 * k1, u)
        k3 = field(x + h2 * k2, u)
        k4 = field(x + dt * k3, u)
        x = x + h6 * (k1 + 2.0 * (k2 + k3) + k4)
        t = (k + 1) * dt
        if not math.isfinite(float(np.abs(x).sum())):
            raise IntegrationBlowupError(t)
        states[k + 1] = x
        times[k + 1] = t
    if remainder > 1e-12:
        t = n_full * dt
        u = values[min(int(t / seg_len + 1e-9), n_seg - 1)]
        x = rk4_step(field, x, u, remainder)
        if not math.isfinite(float(np.abs(x).sum())):
            raise IntegrationBlowupError(horizon)
        states[-1] = x
        times[-1] = horizon
    return Trajectory(times, states, x0, signal)


def jacobian_fd(sys: ControlSystem, x, u) -> np.ndarray:
    """Central finite-difference state Jacobian of the vector field."""
    x = _as_vector(x, dim=sys.n, name="state")
    u = _as_vector(u, dim=sys.m, name="input")
    J = np.empty((sys.n, sys.n))
    for i in range(sys.n):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.asarray(sys.field(xp, u)) - np.asarray(sys.field(xm, u))) / (2 * h)
    return J


def divergence(sys: ControlSystem, x, u) -> float:
    """Trace of the state Jacobian at (x, u)."""
    x = _as_vector(x, dim=sys.n, name="state")
    u = _as_vector(u, dim=sys.m, name="input")
    if not sys.U.contains(u, tol=1e-12):
        raise DomainError(f"input {u} outside U")
    if sys.jacobian is not None:
        div = float(np.trace(np.asarray(sys.jacobian(x, u), dtype=float)))
    else:
        div = 0.0
        for i in range(sys.n):
            h = 1e-6 * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            div += (sys.field(xp, u)[i] - sys.field(xm, u)[i]) / (2 * h)
        div = float(div)
    if not math.isfinite(div):
        raise FloatingPointError("divergence evaluated to a non-finite value")
    return div


def double_integrator(u_max: float = 1.0) -> ControlSystem:
    """Planar system x1' = x2, x2' = u with |u| <= u_max."""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])

    def field(x, u):
        return np.array((x[1], u[0]))

    def jac(x, u):
        return A

    return ControlSystem(n=2, m=1, U=Box([0.0], [u_max]), field=field,
                         jacobian=jac, name="double_integrator")


def scalar_linear(a: float = 1.0, u_max: float = 2.0) -> ControlSystem:
    """Scalar system x' = a*x + u with |u| <= u_max."""

    def field(x, u):
        return np.array((a * x[0] + u[0],))

    def jac(x, u):
        return np.array([[a]])

    return ControlSystem(n=1, m=1, U=Box([0.0], [u_max]), field=field,
                         jacobian=jac, name=f"scalar_linear(a={a})")


BUILTIN_SYSTEMS = {
    "double_integrator": double_integrator,
    "scalar_linear": scalar_linear,
}


def make_system(name: str, **params) -> ControlSystem:
    if name not in BUILTIN_SYSTEMS:
        raise KeyError(f"unknown system {name!r}; known: {sorted(BUILTIN_SYSTEMS)}")
    return BUILTIN_SYSTEMS[name](**params)
