"""Log-normal process for a strictly positive function.

A GP is placed on ``log b``; linear-space moments follow from the moments
of a log-normal variable::

    E[b]   = exp(mu + s2 / 2)
    Var[b] = exp(2 mu + s2) * (exp(s2) - 1)

Because ``E[b]`` grows with ``s2``, a controller dividing by ``E[b]``
commands smaller inputs where the model is uncertain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidObservation
from .gp import GPModel, TrainingPoint
from .kernels import KernelSpec


@dataclass(frozen=True, eq=False)
class LogNormalModel:
    log_gp: GPModel
    noise_mode: str = "fixed"  # "fixed" or "delta"
    log_noise: float = 0.1
    log_noise_floor: float = 1e-6

    def __post_init__(self):
        if self.noise_mode not in ("fixed", "delta"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")

    @classmethod
    def empty(cls, kernel: KernelSpec, log_noise: float = 0.1, noise_mode: str = "fixed",
              log_noise_floor: float = 1e-6) -> "LogNormalModel":
        return cls(GPModel(kernel), noise_mode, log_noise, log_noise_floor)

    def __len__(self) -> int:
        return len(self.log_gp)

    def observation_noise(self, b_estimate: float, linear_variance: float) -> float:
        """Log-space noise variance for an observation of ``b``.

        In delta mode ``Var[log b] ~ Var[b] / b^2`` (first-order expansion),
        floored at ``log_noise_floor``.
        """
        if self.noise_mode == "delta":
            return max(self.log_noise_floor, linear_variance / b_estimate ** 2)
        return self.log_noise

    def observe(self, x, b_estimate: float, linear_variance: float = 0.0) -> "LogNormalModel":
        if not b_estimate > 0:
            raise InvalidObservation(f"b estimate {b_estimate:.6g} is not positive")
        noise = self.observation_noise(b_estimate, linear_variance)
        pt = TrainingPoint(tuple(np.ravel(x)), math.log(b_estimate), noise)
        return LogNormalModel(self.log_gp.condition(pt), self.noise_mode, self.log_noise,
                              self.log_noise_floor)

    def log_posterior(self, x) -> tuple[float, float]:
        return self.log_gp.posterior(x)

    def linear_mean(self, x) -> float:
        mu, s2 = self.log_gp.posterior(x)
        return lognormal_mean(mu, s2)

    def linear_variance(self, x) -> float:
        mu, s2 = self.log_gp.posterior(x)
        return lognormal_variance(mu, s2)

    def with_kernel(self, kernel: KernelSpec) -> "LogNormalModel":
        return LogNormalModel(self.log_gp.with_kernel(kernel), self.noise_mode, self.log_noise,
                              self.log_noise_floor)

    def to_dict(self) -> dict:
        return {"type": "lognormal", "log_gp": self.log_gp.to_dict()}

    @classmethod
    def from_dict(cls, d: dict, **kwargs) -> "LogNormalModel":
        if d.get("type") != "lognormal":
            raise ValueError(f"expected a lognormal model, got type {d.get('type')!r}")
        return cls(GPModel.from_dict(d["log_gp"]), **kwargs)


def lognormal_mean(mu, s2):
    return np.exp(mu + 0.5 * s2) if isinstance(mu, np.ndarray) else math.exp(mu + 0.5 * s2)


def lognormal_variance(mu, s2):
    if isinstance(mu, np.ndarray) or isinstance(s2, np.ndarray):
        return np.exp(2 * mu + s2) * np.expm1(s2)
    return math.exp(2 * mu + s2) * math.expm1(s2)


def observe(model: LogNormalModel, x, b_estimate: float, linear_variance: float = 0.0) -> LogNormalModel:
    return model.observe(x, b_estimate, linear_variance)


def linear_mean(model: LogNormalModel, x) -> float:
    return model.linear_mean(x)


def linear_variance(model: LogNormalModel, x) -> float:
    return model.linear_variance(x)
