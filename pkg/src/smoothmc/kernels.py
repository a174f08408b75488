"""Squared-exponential kernel and Gaussian helpers.

The kernel is ``exp(-|x - x'|^2 / (2 * length_scale))``: the length scale
enters linearly, not squared, which keeps the input gradient equal to
``-(x - x') / length_scale * k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve


@dataclass(frozen=True)
class KernelParams:
    length_scale: float = 0.25
    jitter: float = 1e-6

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


@dataclass(frozen=True)
class GaussianDist:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(-1)
        c = np.asarray(self.cov, dtype=float).reshape(m.size, m.size)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @property
    def dim(self) -> int:
        return self.mean.size


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def sq_dist(a, b) -> np.ndarray:
    a = _as_points(a)
    b = _as_points(b)
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def se_kernel(x, x2, params: KernelParams) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape:
        raise ValueError("dimension mismatch")
    d = x - x2
    return float(np.exp(-(d @ d) / (2.0 * params.length_scale)))


def kernel_matrix(a, b, params: KernelParams, *, symmetric: bool | None = None) -> np.ndarray:
    """Cross-covariance between two point sets.

    When ``b`` is ``a`` (or ``symmetric=True``) the jitter is added to the
    diagonal.  Rows of the point arrays are points; 1-D input means 1-D points.
    """
    if symmetric is None:
        symmetric = b is a
    if symmetric:
        a = _as_points(a)
        diff = a[:, None, :] - a[None, :, :]
        k = np.exp(-np.einsum("ijk,ijk->ij", diff, diff) / (2.0 * params.length_scale))
        k[np.diag_indices_from(k)] += params.jitter
        return k
    return np.exp(-sq_dist(a, b) / (2.0 * params.length_scale))


def se_kernel_gradient(x, u, params: KernelParams) -> np.ndarray:
    """d k(x, u) / dx."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return -(x - u) / params.length_scale * se_kernel(x, u, params)


def kl_gaussians(q: GaussianDist, p: GaussianDist) -> float:
    """KL(q || p) for multivariate normals; raises if p's covariance is singular."""
    if q.dim != p.dim:
        raise ValueError("dimension mismatch")
    try:
        cp = cho_factor(p.cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("p covariance is not positive definite") from exc
    d = q.mean - p.mean
    trace = np.trace(cho_solve(cp, q.cov))
    maha = d @ cho_solve(cp, d)
    logdet_p = 2.0 * np.log(np.diag(cp[0])).sum()
    sign, logdet_q = np.linalg.slogdet(q.cov)
    if sign <= 0:
        return np.inf
    return max(0.5 * (trace + maha - q.dim + logdet_p - logdet_q), 0.0)


@lru_cache(maxsize=None)
def hermite_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for expectations under N(0, 1).

    Weights sum to exactly one.  The arrays are shared, so they are returned
    read-only.
    """
    if nodes < 1:
        raise ValueError("need at least one node")
    x, w = np.polynomial.hermite.hermgauss(nodes)
    z = np.sqrt(2.0) * x
    w = w / w.sum()
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def gauss_hermite_expect(f, mean, var, nodes: int = 32):
    """E[f(g)] for g ~ N(mean, var); ``mean``/``var`` may be arrays."""
    if np.any(np.asarray(var) < 0):
        raise ValueError("variance must be non-negative")
    z, w = hermite_rule(nodes)
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.asarray(var, dtype=float))
    g = mean[..., None] + sd[..., None] * z
    return (np.asarray(f(g)) * w).sum(-1)
