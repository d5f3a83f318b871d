"""Online identification and feedback-linearising control.

At every learning check the controller compares posterior variances
against thresholds:

* ``Var[a(x)] > theta_a``: hold ``u = 0`` for three calls and learn ``a``
  from the central-difference acceleration;
* otherwise, if ``Var[log b_j(x)] > theta_b`` for some channel ``j``: hold
  ``u = u_probe e_j`` for three calls and learn ``b_j`` from
  ``(acc - E[a]) / u_probe``;
* otherwise apply ``u = E[b]^-1 (u' - E[a])`` with the proportional inner
  law ``u' = w1 (xi1 - x1) + w2 (xi2 - x2)``.

The input matrix is modelled as diagonal, one log-normal process per
channel, which covers the fully actuated single-joint case exactly.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConditioningError, InvalidObservation, NumericalError
from .estimation import SampleWindow, acceleration_target
from .gp import GPModel, TrainingPoint
from .kernels import KernelSpec
from .lognormal import LogNormalModel

log = logging.getLogger(__name__)

MAX_COND = 1e8


class Phase(str, enum.Enum):
    NORMAL = "normal"
    PROBING_A = "probing_a"
    PROBING_B = "probing_b"


@dataclass(frozen=True)
class ControllerConfig:
    delta_u: float
    delta_lambda: float
    theta_var_a: float
    theta_var_b: float
    w1: float
    w2: float
    xi: tuple[float, ...]
    kernel_a: KernelSpec
    kernel_b: KernelSpec
    u_probe: float = 1.0
    probe_budget_end: float = math.inf
    noise_a: float = 0.01
    noise_log_b: float = 0.1
    lognormal_noise_mode: str = "fixed"
    derivative_noise: float | None = None  # Var of the acceleration estimate; defaults to noise_a
    observe_velocity: bool = True

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(float(v) for v in self.xi))
        if not (self.delta_u > 0 and self.delta_lambda >= self.delta_u):
            raise ValueError("need 0 < delta_u <= delta_lambda")
        ratio = self.delta_lambda / self.delta_u
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("delta_lambda must be an integer multiple of delta_u")
        if not (self.w1 > 0 and self.w2 > 0):
            raise ValueError("inner-law gains must be positive")
        if not self.u_probe > 0:
            raise ValueError("u_probe must be positive")
        if len(self.xi) % 2:
            raise ValueError("goal state must have even length")

    @property
    def n(self) -> int:
        return len(self.xi) // 2

    @property
    def check_every(self) -> int:
        return int(round(self.delta_lambda / self.delta_u))

    @property
    def var_dx2(self) -> float:
        return self.noise_a if self.derivative_noise is None else self.derivative_noise


@dataclass(frozen=True, eq=False)
class ControllerState:
    model_a: tuple[GPModel, ...]
    model_b: tuple[LogNormalModel, ...]
    phase: Phase = Phase.NORMAL
    step: int = 0
    channel: int = 0
    held_control: np.ndarray = None
    window: tuple = ()
    counters: dict = field(default_factory=lambda: {
        "probes_a": 0, "probes_b": 0, "admitted_a": 0, "admitted_b": 0,
        "rejected_b": 0, "fallbacks": 0,
    })
    last_stats: tuple = (math.nan, math.nan, math.nan, math.nan)
    emitted_phase: Phase = Phase.NORMAL  # phase the most recent control belongs to

    @classmethod
    def initial(cls, cfg: ControllerConfig, model_a=None, model_b=None) -> "ControllerState":
        n = cfg.n
        if model_a is None:
            model_a = [GPModel(cfg.kernel_a) for _ in range(n)]
        if model_b is None:
            model_b = [LogNormalModel.empty(cfg.kernel_b, cfg.noise_log_b, cfg.lognormal_noise_mode)
                       for _ in range(n)]
        return cls(tuple(model_a), tuple(model_b), held_control=np.zeros(n))

    @property
    def n_data_a(self) -> int:
        return sum(len(m) for m in self.model_a)

    @property
    def n_data_b(self) -> int:
        return sum(len(m) for m in self.model_b)


def inner_law(x, xi, w1: float, w2: float) -> np.ndarray:
    x = np.asarray(x, float).ravel()
    xi = np.asarray(xi, float).ravel()
    n = x.size // 2
    return w1 * (xi[:n] - x[:n]) + w2 * (xi[n:] - x[n:])


def baseline_p(x, xi, k: float) -> np.ndarray:
    """Proportional torque ``k [(xi1 - x1) + (xi2 - x2)]`` without inversion."""
    x = np.asarray(x, float).ravel()
    xi = np.asarray(xi, float).ravel()
    n = x.size // 2
    return k * ((xi[:n] - x[:n]) + (xi[n:] - x[n:]))


def outer_law(mean_a, mean_b, u_prime, max_cond: float = MAX_COND) -> np.ndarray:
    """Solve ``E[b] u = u' - E[a]``."""
    rhs = np.atleast_1d(np.asarray(u_prime, float)) - np.atleast_1d(np.asarray(mean_a, float))
    B = np.atleast_2d(np.asarray(mean_b, float))
    if B.shape != (rhs.size, rhs.size):
        raise ConditioningError(f"E[b] of shape {B.shape} is not square of size {rhs.size}")
    if rhs.size == 1:
        b = B[0, 0]
        if not (math.isfinite(b) and b != 0):
            raise ConditioningError(f"E[b] = {b} cannot be inverted")
        return rhs / b
    if not np.isfinite(B).all() or np.linalg.cond(B) >= max_cond:
        raise ConditioningError("E[b] is ill-conditioned")
    return np.linalg.solve(B, rhs)


def estimate_b(acceleration: float, mean_a: float, var_a: float, var_dx2: float,
               u_j: float) -> tuple[float, float]:
    """Mean and variance of ``b_j`` implied by one probe with input ``u_j``."""
    if u_j == 0:
        raise ValueError("probe input must be nonzero")
    return (acceleration - mean_a) / u_j, (var_dx2 + var_a) / u_j ** 2


def _window(cs: ControllerState) -> SampleWindow:
    ts, xs = zip(*cs.window)
    return SampleWindow(np.array(ts), np.array(xs))


def admit_a(cfg: ControllerConfig, cs: ControllerState, window: SampleWindow) -> ControllerState:
    x_mid, acc = acceleration_target(window, cfg.observe_velocity)
    models = tuple(m.condition(TrainingPoint(x_mid, acc[i], cfg.noise_a))
                   for i, m in enumerate(cs.model_a))
    counters = dict(cs.counters, admitted_a=cs.counters["admitted_a"] + 1)
    return replace(cs, model_a=models, counters=counters)


def admit_b(cfg: ControllerConfig, cs: ControllerState, window: SampleWindow, j: int,
            u_j: float) -> ControllerState:
    x_mid, acc = acceleration_target(window, cfg.observe_velocity)
    mean_a, var_a = cs.model_a[j].posterior(x_mid)
    b_est, b_var = estimate_b(acc[j], mean_a, var_a, cfg.var_dx2, u_j)
    counters = dict(cs.counters)
    try:
        updated = cs.model_b[j].observe(x_mid, b_est, b_var)
    except InvalidObservation as exc:
        log.info("discarding b_%d probe at %s: %s", j, x_mid, exc)
        counters["rejected_b"] += 1
        return replace(cs, counters=counters)
    models = cs.model_b[:j] + (updated,) + cs.model_b[j + 1:]
    counters["admitted_b"] += 1
    return replace(cs, model_b=models, counters=counters)


def posterior_stats(cs: ControllerState, x) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Means/variances of ``a``, log-space moments of ``b`` at ``x``."""
    ma, va = zip(*(m.posterior(x) for m in cs.model_a))
    mb, vb = zip(*(m.log_posterior(x) for m in cs.model_b))
    return np.array(ma), np.array(va), np.array(mb), np.array(vb)


def is_check_time(cfg: ControllerConfig, t: float) -> bool:
    k = int(round(t / cfg.delta_u))
    # the whole probe has to finish before the learning budget runs out
    return k % cfg.check_every == 0 and t + 2 * cfg.delta_u < cfg.probe_budget_end


def decide(cfg: ControllerConfig, cs: ControllerState, t: float, x) -> tuple[np.ndarray, ControllerState]:
    """One controller call at time ``t`` in observed state ``x``."""
    x = np.asarray(x, float).ravel()
    n = cfg.n
    try:
        ma, va, mlb, vlb = posterior_stats(cs, x)
        eb = np.exp(mlb + 0.5 * vlb)
        vb = np.exp(2 * mlb + vlb) * np.expm1(vlb)
        stats = (float(ma[0]), float(va[0]), float(eb[0]), float(vb[0]))
    except NumericalError as exc:
        log.warning("posterior failed at t=%.3f: %s; holding u = 0", t, exc)
        counters = dict(cs.counters, fallbacks=cs.counters["fallbacks"] + 1)
        return np.zeros(n), replace(cs, counters=counters)

    if cs.phase is not Phase.NORMAL:
        u = cs.held_control.copy()
        window = cs.window + ((t, x),)
        if cs.step + 1 < 2:
            return u, replace(cs, step=cs.step + 1, window=window, last_stats=stats,
                              emitted_phase=cs.phase)
        done = replace(cs, window=window, last_stats=stats, emitted_phase=cs.phase)
        if cs.phase is Phase.PROBING_A:
            done = admit_a(cfg, done, _window(done))
        else:
            done = admit_b(cfg, done, _window(done), cs.channel, cfg.u_probe)
        return u, replace(done, phase=Phase.NORMAL, step=0, window=())

    if is_check_time(cfg, t):
        counters = dict(cs.counters)
        if va.max() > cfg.theta_var_a:
            counters["probes_a"] += 1
            u = np.zeros(n)
            return u.copy(), replace(cs, phase=Phase.PROBING_A, step=0, held_control=u,
                                     window=((t, x),), counters=counters, last_stats=stats,
                                     emitted_phase=Phase.PROBING_A)
        over = np.flatnonzero(vlb > cfg.theta_var_b)
        if over.size:
            j = int(over[0])
            counters["probes_b"] += 1
            u = np.zeros(n)
            u[j] = cfg.u_probe
            return u.copy(), replace(cs, phase=Phase.PROBING_B, step=0, channel=j, held_control=u,
                                     window=((t, x),), counters=counters, last_stats=stats,
                                     emitted_phase=Phase.PROBING_B)

    u_prime = inner_law(x, cfg.xi, cfg.w1, cfg.w2)
    try:
        u = outer_law(ma, np.diag(eb), u_prime)
    except ConditioningError as exc:
        log.warning("outer law failed at t=%.3f: %s; holding u = 0", t, exc)
        counters = dict(cs.counters, fallbacks=cs.counters["fallbacks"] + 1)
        return np.zeros(n), replace(cs, counters=counters, last_stats=stats,
                                    emitted_phase=Phase.NORMAL)
    return u, replace(cs, held_control=u, last_stats=stats, emitted_phase=Phase.NORMAL)


class SPController:
    """Stateful wrapper around :func:`decide` used by the simulation loop."""

    label = "sp"

    def __init__(self, cfg: ControllerConfig, state: ControllerState | None = None):
        self.cfg = cfg
        self.state = ControllerState.initial(cfg) if state is None else state

    def __call__(self, t: float, x) -> np.ndarray:
        u, self.state = decide(self.cfg, self.state, t, x)
        return u

    @property
    def phase(self) -> Phase:
        return self.state.emitted_phase

    @property
    def stats(self) -> tuple:
        return self.state.last_stats


class PController:
    label = "p"
    phase = Phase.NORMAL
    stats = (math.nan, math.nan, math.nan, math.nan)

    def __init__(self, xi, gain: float):
        if not gain > 0:
            raise ValueError("gain must be positive")
        self.xi = np.asarray(xi, float)
        self.gain = float(gain)

    def __call__(self, t: float, x) -> np.ndarray:
        return baseline_p(x, self.xi, self.gain)
