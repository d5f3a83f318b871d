"""Control-affine plants and sample-and-hold simulation.

States are flat arrays ``[x1, x2]`` where ``x1`` is the configuration and
``x2`` its velocity, each of length ``n``. Between controller calls the
input is held constant and the ODE

    x1' = x2
    x2' = a(x) + b(x) u

is integrated with an adaptive Dormand-Prince 5(4) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from ._accel import maybe_njit
from .errors import DimensionError, IntegrationError

DEFAULT_TOL = 1e-8

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between 5th and embedded 4th order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class State(NamedTuple):
    x1: np.ndarray
    x2: np.ndarray

    @classmethod
    def from_vector(cls, x) -> "State":
        x = np.asarray(x, dtype=float).ravel()
        if x.size % 2:
            raise DimensionError(f"state vector of odd length {x.size}")
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.x1), np.ravel(self.x2)]).astype(float)


@dataclass(frozen=True)
class PendulumParams:
    l: float = 1.0
    m: float = 1.0
    r: float = 0.0
    g: float = 9.81

    def __post_init__(self):
        if not (self.l > 0 and self.m > 0):
            raise ValueError("pendulum length and mass must be positive")
        if self.r < 0:
            raise ValueError("friction coefficient must be nonnegative")

    @property
    def inertia(self) -> float:
        return self.m * self.l ** 2


def pendulum_drift(params: PendulumParams, x) -> float:
    x1, x2 = float(x[0]), float(x[1])
    return -(params.g / params.l) * math.sin(x1) - params.r / params.inertia * x2


def pendulum_input(params: PendulumParams) -> float:
    return 1.0 / params.inertia


def pendulum_energy(params: PendulumParams, x) -> float:
    """Kinetic plus potential energy, zero potential at the pivot height."""
    return 0.5 * params.inertia * x[1] ** 2 - params.m * params.g * params.l * math.cos(x[0])


@dataclass(frozen=True)
class ControlAffinePlant:
    """``x2' = drift(x) + input(x) @ u`` with ``n`` configurations, ``m`` inputs."""

    n: int
    m: int
    drift: Callable[[np.ndarray], np.ndarray]
    input: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        n = self.n
        acc = np.asarray(self.drift(x), float).reshape(n) + np.asarray(self.input(x), float).reshape(n, self.m) @ u
        return np.concatenate([x[n:], acc])

    def is_fully_actuated(self, x, max_cond: float = 1e8) -> bool:
        B = np.asarray(self.input(np.asarray(x, float)), float).reshape(self.n, self.m)
        return self.n == self.m and np.linalg.cond(B) < max_cond


@dataclass(frozen=True)
class PendulumPlant(ControlAffinePlant):
    params: PendulumParams = PendulumParams()

    @classmethod
    def from_params(cls, params: PendulumParams) -> "PendulumPlant":
        return cls(
            n=1,
            m=1,
            drift=lambda x: np.array([pendulum_drift(params, x)]),
            input=lambda x: np.array([[pendulum_input(params)]]),
            name="pendulum",
            params=params,
        )


def make_plant(cfg: dict) -> ControlAffinePlant:
    """Build a plant from its config block, e.g. ``{"plant": "pendulum", "l": 1, ...}``."""
    kind = cfg.get("plant", "pendulum")
    if kind != "pendulum":
        raise ValueError(f"unknown plant {kind!r}")
    return PendulumPlant.from_params(PendulumParams(
        l=float(cfg.get("l", 1.0)), m=float(cfg.get("m", 1.0)),
        r=float(cfg.get("r", 0.0)), g=float(cfg.get("g", 9.81)),
    ))


@maybe_njit
def _dopri_pendulum(x1, x2, u, dt, g_over_l, damp, gain, tol, kp, xi1, xi2, A, B5, E, C):
    """Integrate the pendulum over ``[0, dt]`` under ``u + kp (xi1 - x1 + xi2 - x2)``.

    ``kp = 0`` is a pure zero-order hold. Returns
    ``(x1, x2, status, t_reached, n_steps)``; status 0 is success.
    """
    t = 0.0
    h = min(dt, 0.05)
    k1 = np.empty(7)
    k2 = np.empty(7)
    n_steps = 0
    while t < dt:
        if t + h > dt:
            h = dt - t
        for s in range(7):
            y1 = x1
            y2 = x2
            for j in range(s):
                y1 += h * A[s, j] * k1[j]
                y2 += h * A[s, j] * k2[j]
            k1[s] = y2
            k2[s] = -g_over_l * np.sin(y1) - damp * y2 + gain * (u + kp * (xi1 - y1 + xi2 - y2))
        n1 = x1
        n2 = x2
        e1 = 0.0
        e2 = 0.0
        for s in range(7):
            n1 += h * B5[s] * k1[s]
            n2 += h * B5[s] * k2[s]
            e1 += h * E[s] * k1[s]
            e2 += h * E[s] * k2[s]
        sc1 = tol + tol * max(abs(x1), abs(n1))
        sc2 = tol + tol * max(abs(x2), abs(n2))
        err = np.sqrt(0.5 * ((e1 / sc1) ** 2 + (e2 / sc2) ** 2))
        if err <= 1.0:
            t += h
            x1 = n1
            x2 = n2
            n_steps += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h = h * fac
        if h < 1e-14 * max(1.0, dt):
            return x1, x2, 1, t, n_steps
    return x1, x2, 0, t, n_steps


def _dopri_generic(f, x, dt, tol):
    t = 0.0
    h = min(dt, 0.05)
    k = np.empty((7, x.size))
    while t < dt:
        h = min(h, dt - t)
        for s in range(7):
            k[s] = f(x + h * (_A[s, :s] @ k[:s]))
        xn = x + h * (_B5 @ k)
        e = h * (_E @ k)
        sc = tol + tol * np.maximum(np.abs(x), np.abs(xn))
        err = math.sqrt(float(np.mean((e / sc) ** 2)))
        if err <= 1.0:
            t += h
            x = xn
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h *= fac
        if h < 1e-14 * max(1.0, dt):
            raise IntegrationError("step size underflow", t)
    return x


def integrate_hold(plant: ControlAffinePlant, x0, u, dt: float, tol: float = DEFAULT_TOL,
                   feedback: tuple[float, np.ndarray] | None = None) -> np.ndarray:
    """State after holding input ``u`` for ``dt`` seconds starting from ``x0``.

    ``feedback=(k, xi)`` adds the continuous-time proportional term
    ``k [(xi1 - x1) + (xi2 - x2)]`` evaluated along the trajectory, which is
    how the baseline P controllers are simulated.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x0, dtype=float).ravel()
    if x.size != 2 * plant.n:
        raise DimensionError(f"state of size {x.size} for a plant with n={plant.n}")
    u = np.asarray(u, dtype=float).ravel()
    if u.size != plant.m:
        raise DimensionError(f"control of size {u.size} for a plant with m={plant.m}")
    kp, xi = (0.0, np.zeros_like(x)) if feedback is None else (float(feedback[0]), np.asarray(feedback[1], float))
    if isinstance(plant, PendulumPlant):
        p = plant.params
        x1, x2, status, t_reached, _ = _dopri_pendulum(
            x[0], x[1], u[0], float(dt), p.g / p.l, p.r / p.inertia, 1.0 / p.inertia,
            float(tol), kp, xi[0], xi[1], _A, _B5, _E, _C,
        )
        if status != 0:
            raise IntegrationError("step size underflow", t_reached)
        return np.array([x1, x2])
    n = plant.n
    if kp:
        rhs = lambda y: plant.rhs(y, u + kp * ((xi[:n] - y[:n]) + (xi[n:] - y[n:])))
    else:
        rhs = lambda y: plant.rhs(y, u)
    return _dopri_generic(rhs, x, float(dt), float(tol))


def simulate(plant: ControlAffinePlant, x0, policy: Callable[[float, np.ndarray], np.ndarray],
             dt: float, t_f: float, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-order-hold closed loop; returns times, states and held inputs."""
    steps = int(round(t_f / dt))
    x = np.asarray(x0, float).ravel()
    ts, xs, us = [], [], []
    for k in range(steps):
        t = k * dt
        u = np.atleast_1d(policy(t, x))
        ts.append(t)
        xs.append(x)
        us.append(u)
        x = integrate_hold(plant, x, u, dt, tol)
    ts.append(steps * dt)
    xs.append(x)
    return np.array(ts), np.array(xs), np.array(us).reshape(steps, plant.m)
