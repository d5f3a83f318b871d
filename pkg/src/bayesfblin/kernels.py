"""ARD covariance functions over state space.

Two stationary kernels are provided::

    SE-ARD  k(x, x') = sf^2 exp(-r^2 / 2)
    RQ-ARD  k(x, x') = sf^2 (1 + r^2 / (2 alpha))^(-alpha)

with ``r^2 = sum_d (x_d - x'_d)^2 / l_d^2``. The RQ kernel tends to the SE
kernel as ``alpha -> inf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._accel import USE_NUMBA, maybe_njit
from .errors import DimensionError, NumericalError

_SE = 0
_RQ = 1


class KernelKind(str, enum.Enum):
    SE_ARD = "se_ard"
    RQ_ARD = "rq_ard"


@dataclass(frozen=True)
class KernelSpec:
    """Hyperparameters of an ARD kernel.

    ``output_scale`` is the signal standard deviation, so ``k(x, x)`` equals
    ``output_scale**2``. ``alpha`` only matters for the RQ kernel.
    """

    kind: KernelKind
    lengthscales: tuple[float, ...]
    output_scale: float = 1.0
    alpha: float = 2.0
    _inv_ls2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = KernelKind(self.kind)
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "output_scale", float(self.output_scale))
        object.__setattr__(self, "alpha", float(self.alpha))
        if not ls or not all(v > 0 and math.isfinite(v) for v in ls):
            raise ValueError(f"lengthscales must be positive and finite, got {ls}")
        if not (self.output_scale > 0 and math.isfinite(self.output_scale)):
            raise ValueError(f"output_scale must be positive, got {self.output_scale}")
        if kind is KernelKind.RQ_ARD and not self.alpha > 0:
            raise ValueError(f"alpha must be positive for the RQ kernel, got {self.alpha}")
        object.__setattr__(self, "_inv_ls2", 1.0 / np.square(np.asarray(ls)))

    @classmethod
    def se(cls, lengthscales: Sequence[float] | float, output_scale: float = 1.0, dim: int | None = None):
        return cls(KernelKind.SE_ARD, _expand(lengthscales, dim), output_scale)

    @classmethod
    def rq(cls, lengthscales: Sequence[float] | float, output_scale: float = 1.0,
           alpha: float = 2.0, dim: int | None = None):
        return cls(KernelKind.RQ_ARD, _expand(lengthscales, dim), output_scale, alpha)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    @property
    def variance(self) -> float:
        return self.output_scale ** 2

    # log-space parameter vector used by the optimiser: [log l_1..l_d, log sf, (log alpha)]
    def log_params(self) -> np.ndarray:
        p = list(np.log(self.lengthscales)) + [math.log(self.output_scale)]
        if self.kind is KernelKind.RQ_ARD:
            p.append(math.log(self.alpha))
        return np.array(p)

    def with_log_params(self, p: np.ndarray) -> "KernelSpec":
        p = np.asarray(p, dtype=float)
        d = self.dim
        kw = dict(lengthscales=tuple(np.exp(p[:d])), output_scale=float(np.exp(p[d])))
        if self.kind is KernelKind.RQ_ARD:
            kw["alpha"] = float(np.exp(p[d + 1]))
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "lengthscales": list(self.lengthscales),
            "output_scale": self.output_scale,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            KernelKind(d["kind"]),
            tuple(d["lengthscales"]),
            d.get("output_scale", 1.0),
            d.get("alpha", 2.0),
        )


def _expand(lengthscales, dim):
    ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
    if dim is not None and ls.size == 1:
        ls = np.repeat(ls, dim)
    return tuple(ls)


@maybe_njit
def _kmat_loop(X, Z, inv_ls2, sf2, kind, alpha):
    n, d = X.shape
    m = Z.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            r2 = 0.0
            for k in range(d):
                diff = X[i, k] - Z[j, k]
                r2 += diff * diff * inv_ls2[k]
            if kind == 0:
                out[i, j] = sf2 * np.exp(-0.5 * r2)
            else:
                out[i, j] = sf2 * (1.0 + r2 / (2.0 * alpha)) ** (-alpha)
    return out


def _kmat_numpy(X, Z, inv_ls2, sf2, kind, alpha):
    diff = X[:, None, :] - Z[None, :, :]
    r2 = np.einsum("ijk,k->ij", diff * diff, inv_ls2)
    if kind == _SE:
        return sf2 * np.exp(-0.5 * r2)
    return sf2 * (1.0 + r2 / (2.0 * alpha)) ** (-alpha)


def _as_points(X, dim: int, name: str) -> np.ndarray:
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size == dim else A.reshape(-1, 1)
    if A.ndim != 2 or A.shape[1] != dim:
        raise DimensionError(f"{name} has shape {np.shape(X)}, kernel expects dimension {dim}")
    return np.ascontiguousarray(A)


def cross(spec: KernelSpec, X, Z, *, use_numba: bool | None = None) -> np.ndarray:
    """Cross-covariance matrix ``K[i, j] = k(X[i], Z[j])``."""
    A = _as_points(X, spec.dim, "X")
    B = _as_points(Z, spec.dim, "Z")
    kind = _SE if spec.kind is KernelKind.SE_ARD else _RQ
    fast = USE_NUMBA if use_numba is None else use_numba
    fn = _kmat_loop if fast else _kmat_numpy
    return fn(A, B, spec._inv_ls2, spec.variance, kind, spec.alpha)


def evaluate(spec: KernelSpec, x, x_prime) -> float:
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(x_prime, dtype=float).ravel()
    if x.size != spec.dim or xp.size != spec.dim:
        raise DimensionError(
            f"inputs of size {x.size} and {xp.size} for a {spec.dim}-dimensional kernel"
        )
    r2 = float(np.sum((x - xp) ** 2 * spec._inv_ls2))
    if spec.kind is KernelKind.SE_ARD:
        return spec.variance * math.exp(-0.5 * r2)
    return spec.variance * (1.0 + r2 / (2.0 * spec.alpha)) ** (-spec.alpha)


def gram(spec: KernelSpec, X, noise=0.0, *, use_numba: bool | None = None) -> np.ndarray:
    """Gram matrix with ``noise`` added on the diagonal.

    ``noise`` is a scalar or one nonnegative variance per point.
    """
    A = _as_points(X, spec.dim, "X")
    n = A.shape[0]
    nz = np.asarray(noise, dtype=float)
    if nz.ndim == 0:
        nz = np.full(n, float(nz))
    if nz.shape != (n,):
        raise DimensionError(f"noise has {nz.size} entries for {n} points")
    if np.any(nz < 0):
        raise ValueError("noise variances must be nonnegative")
    G = cross(spec, A, A, use_numba=use_numba)
    G[np.diag_indices_from(G)] += nz
    if not np.all(np.isfinite(G)):
        raise NumericalError("Gram matrix has non-finite entries")
    return G
