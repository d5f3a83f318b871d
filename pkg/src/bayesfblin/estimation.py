"""Finite-difference derivative targets from three equally spaced samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WindowError

SPACING_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SampleWindow:
    times: np.ndarray   # (3,)
    states: np.ndarray  # (3, 2n)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        s = np.asarray(self.states, dtype=float)
        if t.shape != (3,) or s.ndim != 2 or s.shape[0] != 3:
            raise WindowError("a window holds exactly three timestamps and three states")
        d1, d2 = t[1] - t[0], t[2] - t[1]
        if not (d1 > 0 and abs(d2 - d1) <= SPACING_TOL):
            raise WindowError(f"samples are not uniformly spaced: steps {d1!r}, {d2!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def midpoint(self) -> np.ndarray:
        return self.states[1]


def central_difference(window: SampleWindow) -> tuple[float, np.ndarray]:
    """``(x(t + 2d) - x(t)) / 2d``, attributed to the middle sample time."""
    d = window.spacing
    return float(window.times[1]), (window.states[2] - window.states[0]) / (2.0 * d)


def acceleration_target(window: SampleWindow, observe_velocity: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint state and acceleration estimate for learning.

    With observed velocities the acceleration is the central difference of
    ``x2``. Otherwise only configurations are trusted: velocity at the
    midpoint is the central difference of ``q`` and the acceleration is the
    second difference ``(q0 - 2 q1 + q2) / d^2``, the central-difference
    stencil applied to the half-step velocity estimates.
    """
    s = window.states
    n = s.shape[1] // 2
    d = window.spacing
    if observe_velocity:
        _, deriv = central_difference(window)
        return s[1].copy(), deriv[n:]
    q0, q1, q2 = s[0, :n], s[1, :n], s[2, :n]
    qdot = (q2 - q0) / (2.0 * d)
    qddot = (q2 - 2.0 * q1 + q0) / d ** 2
    return np.concatenate([q1, qdot]), qddot
