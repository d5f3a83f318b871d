"""Reference computations written independently of the package internals."""

import math

import numpy as np


def k_se(x, z, ls, sf):
    s = sum(((a - b) / l) ** 2 for a, b, l in zip(x, z, ls))
    return sf * sf * math.exp(-0.5 * s)


def k_rq(x, z, ls, sf, alpha):
    s = sum(((a - b) / l) ** 2 for a, b, l in zip(x, z, ls))
    return sf * sf * (1.0 + s / (2.0 * alpha)) ** (-alpha)


def dense_gp(kfun, X, y, noise, Xs):
    """Posterior mean, variance and LML via an explicit matrix inverse."""
    n = len(X)
    K = np.array([[kfun(X[i], X[j]) for j in range(n)] for i in range(n)]) + np.diag(noise)
    Kinv = np.linalg.inv(K)
    ks = np.array([[kfun(X[i], s) for s in Xs] for i in range(n)])
    mean = ks.T @ Kinv @ y
    var = np.array([kfun(s, s) for s in Xs]) - np.einsum("ij,ik,kj->j", ks, Kinv, ks)
    sign, logdet = np.linalg.slogdet(K)
    lml = -0.5 * y @ Kinv @ y - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)
    return mean, var, lml
