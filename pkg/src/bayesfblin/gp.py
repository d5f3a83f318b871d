"""Exact GP regression with per-point (heteroscedastic) observation noise."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import DimensionError, NumericalError, OptimizationError
from .kernels import KernelSpec, cross, gram

log = logging.getLogger(__name__)

DEDUP_RADIUS = 1e-6
JITTER_START = 1e-10
JITTER_MAX = 1e-4
NEG_VARIANCE_TOL = 1e-8

#: counts posterior variances that came out slightly negative and were clamped to 0
diagnostics = {"clamped_variances": 0}


@dataclass(frozen=True)
class TrainingPoint:
    input: tuple[float, ...]
    target: float
    noise_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "input", tuple(float(v) for v in np.ravel(self.input)))
        object.__setattr__(self, "target", float(self.target))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if not self.noise_variance >= 0:
            raise ValueError(f"noise_variance must be nonnegative, got {self.noise_variance}")

    def to_dict(self) -> dict:
        return {"input": list(self.input), "target": self.target,
                "noise_variance": self.noise_variance}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingPoint":
        return cls(tuple(d["input"]), d["target"], d.get("noise_variance", 0.0))


def _factorize(G: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor of ``G``, adding escalating diagonal jitter if needed."""
    try:
        return linalg.cholesky(G, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    n = G.shape[0]
    scale = max(float(np.trace(G)) / n, np.finfo(float).tiny)
    level = JITTER_START
    while level <= JITTER_MAX * (1 + 1e-12):
        jitter = level * scale
        try:
            L = linalg.cholesky(G + jitter * np.eye(n), lower=True, check_finite=False)
            log.debug("Cholesky needed jitter %.3g", jitter)
            return L, jitter
        except linalg.LinAlgError:
            level *= 10.0
    raise NumericalError(f"Gram matrix of size {n} is not positive definite even with jitter")


@dataclass(frozen=True, eq=False)
class GPModel:
    """A zero-mean GP conditioned on a finite data set.

    Instances are immutable; :meth:`condition` returns a new model. The
    Cholesky factor ``factor`` and ``alpha_vector = (K + S)^-1 y`` are cached
    at construction, where ``S`` holds ``base_noise_variance`` plus each
    point's own noise variance on its diagonal.
    """

    kernel: KernelSpec
    base_noise_variance: float = 0.0
    X: np.ndarray = field(default=None, repr=False)
    y: np.ndarray = field(default=None, repr=False)
    noise: np.ndarray = field(default=None, repr=False)
    factor: np.ndarray = field(init=False, repr=False, compare=False)
    alpha_vector: np.ndarray = field(init=False, repr=False, compare=False)
    jitter: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = self.kernel.dim
        X = np.zeros((0, d)) if self.X is None else np.asarray(self.X, dtype=float).reshape(-1, d)
        n = X.shape[0]
        y = np.zeros(0) if self.y is None else np.asarray(self.y, dtype=float).reshape(-1)
        nz = np.zeros(n) if self.noise is None else np.asarray(self.noise, dtype=float).reshape(-1)
        if y.shape != (n,) or nz.shape != (n,):
            raise DimensionError("X, y and noise disagree on the number of points")
        if self.base_noise_variance < 0:
            raise ValueError("base_noise_variance must be nonnegative")
        for name, arr in (("X", X), ("y", y), ("noise", nz)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if n:
            G = gram(self.kernel, X, nz + self.base_noise_variance)
            L, jitter = _factorize(G)
            a = linalg.cho_solve((L, True), y, check_finite=False)
        else:
            L, jitter, a = np.zeros((0, 0)), 0.0, np.zeros(0)
        object.__setattr__(self, "factor", L)
        object.__setattr__(self, "alpha_vector", a)
        object.__setattr__(self, "jitter", jitter)

    @classmethod
    def from_points(cls, kernel: KernelSpec, base_noise_variance: float = 0.0,
                    points: Iterable[TrainingPoint] = ()) -> "GPModel":
        model = cls(kernel, base_noise_variance)
        for p in points:
            model = model.condition(p)
        return model

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def data(self) -> list[TrainingPoint]:
        return [TrainingPoint(x, t, s) for x, t, s in zip(self.X, self.y, self.noise)]

    def condition(self, point: TrainingPoint) -> "GPModel":
        """Return the model conditioned on one more observation.

        A point closer than ``DEDUP_RADIUS`` to an existing input replaces
        that input's observation instead of growing the data set.
        """
        x = np.asarray(point.input, dtype=float)
        if x.size != self.kernel.dim:
            raise DimensionError(f"point of dimension {x.size}, model expects {self.kernel.dim}")
        X, y, nz = self.X.copy(), self.y.copy(), self.noise.copy()
        if len(self):
            dist = np.linalg.norm(X - x, axis=1)
            i = int(np.argmin(dist))
            if dist[i] <= DEDUP_RADIUS:
                X[i], y[i], nz[i] = x, point.target, point.noise_variance
                return replace(self, X=X, y=y, noise=nz)
        return replace(self, X=np.vstack([X, x]), y=np.append(y, point.target),
                       noise=np.append(nz, point.noise_variance))

    def with_kernel(self, kernel: KernelSpec, base_noise_variance: float | None = None) -> "GPModel":
        noise = self.base_noise_variance if base_noise_variance is None else base_noise_variance
        return replace(self, kernel=kernel, base_noise_variance=noise)

    def predict(self, Xs) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances at each row of ``Xs``."""
        Xs = np.asarray(Xs, dtype=float).reshape(-1, self.kernel.dim)
        prior = np.full(Xs.shape[0], self.kernel.variance)
        if not len(self):
            return np.zeros(Xs.shape[0]), prior
        Ks = cross(self.kernel, self.X, Xs)
        mean = Ks.T @ self.alpha_vector
        V = linalg.solve_triangular(self.factor, Ks, lower=True, check_finite=False)
        var = prior - np.einsum("ij,ij->j", V, V)
        return mean, _clamp(var, prior)

    def posterior(self, x) -> tuple[float, float]:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.kernel.dim:
            raise DimensionError(f"query of dimension {x.size}, model expects {self.kernel.dim}")
        m, v = self.predict(x[None, :])
        return float(m[0]), float(v[0])

    def log_marginal_likelihood(self) -> float:
        n = len(self)
        if n == 0:
            raise ValueError("log marginal likelihood needs at least one training point")
        logdet = 2.0 * float(np.sum(np.log(np.diag(self.factor))))
        with np.errstate(over="ignore", invalid="ignore"):
            fit = float(self.y @ self.alpha_vector)
        val = -0.5 * fit - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)
        if not math.isfinite(val):
            raise NumericalError("log marginal likelihood is not finite")
        return val

    def to_dict(self) -> dict:
        return {
            "type": "gp",
            "kernel": self.kernel.to_dict(),
            "base_noise_variance": self.base_noise_variance,
            "data": [p.to_dict() for p in self.data],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GPModel":
        kernel = KernelSpec.from_dict(d["kernel"])
        pts = [TrainingPoint.from_dict(p) for p in d.get("data", [])]
        if not pts:
            return cls(kernel, d.get("base_noise_variance", 0.0))
        return cls(
            kernel,
            d.get("base_noise_variance", 0.0),
            np.array([p.input for p in pts]),
            np.array([p.target for p in pts]),
            np.array([p.noise_variance for p in pts]),
        )


def _clamp(var: np.ndarray, prior: np.ndarray) -> np.ndarray:
    neg = var < 0
    if np.any(neg):
        if np.any(var[neg] < -NEG_VARIANCE_TOL * np.maximum(prior[neg], 1.0)):
            raise NumericalError(f"posterior variance {var.min():.3g} is negative")
        diagnostics["clamped_variances"] += int(neg.sum())
        var = np.where(neg, 0.0, var)
    return var


# functional aliases mirroring the method names


def condition(model: GPModel, point: TrainingPoint) -> GPModel:
    return model.condition(point)


def posterior(model: GPModel, x) -> tuple[float, float]:
    return model.posterior(x)


def log_marginal_likelihood(model: GPModel) -> float:
    return model.log_marginal_likelihood()


def default_bounds(model: GPModel, optimize_noise: bool = False) -> np.ndarray:
    """Log-space search box: lengthscales in [0.05, 100], output scale in [1e-2, 1e2]."""
    k = model.kernel
    rows = [(math.log(0.05), math.log(100.0))] * k.dim + [(math.log(1e-2), math.log(1e2))]
    if k.kind.value == "rq_ard":
        rows.append((math.log(0.1), math.log(100.0)))
    if optimize_noise:
        rows.append((math.log(1e-6), math.log(10.0)))
    return np.array(rows)


def _unpack(model: GPModel, p: np.ndarray, optimize_noise: bool) -> GPModel:
    if optimize_noise:
        return model.with_kernel(model.kernel.with_log_params(p[:-1]), float(np.exp(p[-1])))
    return model.with_kernel(model.kernel.with_log_params(p))


def optimize_hyperparameters(
    model: GPModel,
    bounds: Sequence[Sequence[float]] | None = None,
    restarts: int = 5,
    seed: int = 0,
    optimize_noise: bool = False,
    maxiter: int = 500,
) -> GPModel:
    """Maximise the log marginal likelihood over the kernel hyperparameters.

    Nelder-Mead is run from the current hyperparameters and from
    ``restarts`` uniform draws inside ``bounds`` (log space). The best point
    seen, starting points included, is returned, so the result never has a
    lower marginal likelihood than any start.
    """
    if len(model) < 2:
        raise ValueError("hyperparameter optimisation needs at least two training points")
    if optimize_noise and model.base_noise_variance <= 0:
        raise ValueError("cannot optimise a zero base noise in log space")
    box = default_bounds(model, optimize_noise) if bounds is None else np.asarray(bounds, float)
    p0 = model.kernel.log_params()
    if optimize_noise:
        p0 = np.append(p0, math.log(model.base_noise_variance))
    if box.shape != (p0.size, 2):
        raise DimensionError(f"bounds must have shape ({p0.size}, 2), got {box.shape}")

    def neg_lml(p):
        try:
            return -_unpack(model, p, optimize_noise).log_marginal_likelihood()
        except (NumericalError, ValueError):
            return np.inf

    rng = np.random.default_rng(seed)
    starts = [p0] + [rng.uniform(box[:, 0], box[:, 1]) for _ in range(restarts)]
    best_p, best_f = None, np.inf
    for s in starts:
        f0 = neg_lml(s)
        if f0 < best_f:
            best_p, best_f = s, f0
        res = optimize.minimize(neg_lml, np.clip(s, box[:, 0], box[:, 1]), method="Nelder-Mead",
                                bounds=box, options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-9})
        if np.isfinite(res.fun) and res.fun < best_f:
            best_p, best_f = res.x, float(res.fun)
    if best_p is None:
        raise OptimizationError("no restart produced a finite marginal likelihood")
    return _unpack(model, best_p, optimize_noise)
