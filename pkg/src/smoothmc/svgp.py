"""Sparse variational GP classification with a probit link.

The posterior over inducing values is ``q(u) = N(mu, R R^T)`` with ``R``
lower triangular.  Optimisation happens in whitened coordinates
``mu = L m``, ``R = L C`` where ``L L^T = K_mm``; ``L C`` is again lower
triangular, so this is just a rescaled square-root parametrisation that
keeps the problem well conditioned when ``K_mm`` is nearly singular.

Repeated training locations are pooled: the likelihood of ``n1`` successes
and ``n0`` failures at one location only needs one latent marginal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.special import log_ndtr, ndtr, owens_t

from .kernels import GaussianDist, KernelParams, hermite_rule, kernel_matrix

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_VAR_FLOOR = 1e-12


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 500
    tolerance: float = 1e-6
    quadrature_nodes: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.quadrature_nodes < 1 or not self.tolerance > 0:
            raise ValueError("FitOptions fields must be positive")


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if pts.size else pts.reshape(0, 1)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(pts) != len(labels):
            raise ValueError("points and labels differ in length")
        if np.any((labels != 0) & (labels != 1)):
            raise ValueError("labels must be 0 or 1")
        self.points = pts
        self.labels = labels

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.vstack([self.points, other.points]), np.concatenate([self.labels, other.labels]))

    def aggregate(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unique locations (sorted) with success and failure counts."""
        if len(self) == 0:
            return self.points, np.zeros(0), np.zeros(0)
        locs, inverse = np.unique(self.points, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        n1 = np.bincount(inverse, weights=self.labels, minlength=len(locs))
        n0 = np.bincount(inverse, minlength=len(locs)) - n1
        return locs, n1, n0


@dataclass(frozen=True)
class PredictiveDist:
    """Latent marginals ``N(mean[i], variance[i])`` at a set of test points."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True, eq=False)
class VariationalPosterior:
    inducing: np.ndarray
    mean: np.ndarray
    cov_root: np.ndarray
    kernel: KernelParams
    trace: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        z = np.asarray(self.inducing, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        m = len(z)
        if m < 1:
            raise ValueError("need at least one inducing point")
        object.__setattr__(self, "inducing", z)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(m))
        object.__setattr__(self, "cov_root", np.tril(np.asarray(self.cov_root, dtype=float).reshape(m, m)))
        kmm = kernel_matrix(z, z, self.kernel)
        object.__setattr__(self, "chol", np.linalg.cholesky(kmm))
        object.__setattr__(self, "alpha", cho_solve((self.chol, True), self.mean))

    @property
    def m(self) -> int:
        return len(self.inducing)

    @property
    def cov(self) -> np.ndarray:
        return self.cov_root @ self.cov_root.T

    @property
    def dist(self) -> GaussianDist:
        return GaussianDist(self.mean, self.cov)

    def whitened(self) -> tuple[np.ndarray, np.ndarray]:
        m_w = solve_triangular(self.chol, self.mean, lower=True)
        c_w = solve_triangular(self.chol, self.cov_root, lower=True)
        return m_w, np.tril(c_w)

    @classmethod
    def from_whitened(cls, inducing, kernel, m_w, c_w, trace=()) -> "VariationalPosterior":
        z = np.asarray(inducing, dtype=float)
        z = z[:, None] if z.ndim == 1 else z
        chol = np.linalg.cholesky(kernel_matrix(z, z, kernel))
        return cls(z, chol @ m_w, chol @ np.tril(c_w), kernel, tuple(trace))

    def with_trace(self, trace) -> "VariationalPosterior":
        return VariationalPosterior(self.inducing, self.mean, self.cov_root, self.kernel, tuple(trace))

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "smoothmc-posterior/1",
            "link": "probit",
            "length_scale": self.kernel.length_scale,
            "jitter": self.kernel.jitter,
            "inducing": self.inducing.tolist(),
            "mean": self.mean.tolist(),
            "cov_root": self.cov_root.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariationalPosterior":
        if d.get("link") != "probit":
            raise ValueError(f"unsupported link {d.get('link')!r}")
        return cls(
            np.array(d["inducing"], dtype=float),
            np.array(d["mean"], dtype=float),
            np.array(d["cov_root"], dtype=float),
            KernelParams(d["length_scale"], d["jitter"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "VariationalPosterior":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_posterior(inducing, kernel: KernelParams) -> VariationalPosterior:
    """``q(u) = N(0, I)`` at the given (distinct) inducing locations."""
    z = np.asarray(inducing, dtype=float)
    z = z[:, None] if z.ndim == 1 else z
    if len(np.unique(z, axis=0)) != len(z):
        raise ValueError("inducing points must be distinct")
    m = len(z)
    return VariationalPosterior(z, np.zeros(m), np.eye(m), kernel)


def prior_posterior(inducing, kernel: KernelParams) -> VariationalPosterior:
    """``q(u) = p(u)``; handy as a neutral starting point."""
    z = np.asarray(inducing, dtype=float)
    z = z[:, None] if z.ndim == 1 else z
    m = len(z)
    return VariationalPosterior.from_whitened(z, kernel, np.zeros(m), np.eye(m))


def latent_marginals(q: VariationalPosterior, X) -> PredictiveDist:
    X = np.asarray(X, dtype=float)
    X = X.reshape(-1, q.inducing.shape[1])
    kmx = kernel_matrix(q.inducing, X, q.kernel, symmetric=False)
    a = solve_triangular(q.chol, kmx, lower=True)
    # K^-1 k  then  R^T K^-1 k
    b = q.cov_root.T @ solve_triangular(q.chol.T, a, lower=False)
    mean = kmx.T @ q.alpha
    var = 1.0 - (a * a).sum(0) + (b * b).sum(0)
    return PredictiveDist(mean, np.maximum(var, 0.0))


def probit_probability(mean, var) -> np.ndarray:
    """E[Phi(g)] for g ~ N(mean, var)."""
    return ndtr(np.asarray(mean) / np.sqrt(1.0 + np.asarray(var)))


def probit_variance(mean, var) -> np.ndarray:
    """Var[Phi(g)] for g ~ N(mean, var).

    E[Phi(g)^2] is a bivariate normal orthant probability with correlation
    var / (1 + var), which Owen's T function gives in closed form.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    h = mean / np.sqrt(1.0 + var)
    a = 1.0 / np.sqrt(1.0 + 2.0 * var)
    p = ndtr(h)
    second = p - 2.0 * owens_t(h, a)
    return np.clip(second - p * p, 0.0, 0.25)


def predict_probability(q: VariationalPosterior, X) -> np.ndarray:
    f = latent_marginals(q, X)
    return probit_probability(f.mean, f.variance)


def predictive_variance(q: VariationalPosterior, X) -> np.ndarray:
    f = latent_marginals(q, X)
    return probit_variance(f.mean, f.variance)


# ---------------------------------------------------------------------------
# objective


def _inverse_mills(t):
    """phi(t) / Phi(t), stable for large negative t."""
    return np.exp(-0.5 * t * t - LOG_SQRT_2PI - log_ndtr(t))


class _Correction:
    """Streaming terms  E_{q_new(u)}[log q_old(u) - log p(u)].

    Worked in the whitened frame of the old inducing set, where
    ``p(u) = N(0, I)`` and ``q_old(u) = N(m_o, C_o C_o^T)``.  ``G`` maps new
    whitened coordinates to old ones (identity when the sets coincide).
    """

    def __init__(self, q_old: VariationalPosterior, inducing_new: np.ndarray, chol_new: np.ndarray):
        m_o, c_o = q_old.whitened()
        self.m_o = m_o
        same = q_old.inducing.shape == inducing_new.shape and np.array_equal(q_old.inducing, inducing_new)
        if same:
            self.G = None
            self.d0 = None
        else:
            kvu = kernel_matrix(inducing_new, q_old.inducing, q_old.kernel, symmetric=False)
            a_u = solve_triangular(chol_new, kvu, lower=True)
            self.G = solve_triangular(q_old.chol, a_u.T, lower=True)
            self.d0 = np.eye(len(m_o)) - self.G @ self.G.T
        eye = np.eye(len(m_o))
        self.s_inv = cho_solve((c_o, True), eye)
        self.s_inv = 0.5 * (self.s_inv + self.s_inv.T)
        self.p_hat = self.s_inv - eye
        self.logdet_s = 2.0 * np.log(np.abs(np.diag(c_o))).sum()

    def value_and_grad(self, m_w, c_w):
        G = self.G
        w = m_w if G is None else G @ m_w
        gc = c_w if G is None else G @ c_w
        r = w - self.m_o
        s_r = self.s_inv @ r
        ph_gc = self.p_hat @ gc
        val = -0.5 * np.sum(gc * ph_gc) - 0.5 * r @ s_r + 0.5 * w @ w - 0.5 * self.logdet_s
        if self.d0 is not None:
            val -= 0.5 * np.sum(self.p_hat * self.d0)
        g_w = -s_r + w
        g_c = -ph_gc
        if G is not None:
            g_w = G.T @ g_w
            g_c = G.T @ g_c
        return val, g_w, g_c


class _Objective:
    def __init__(self, inducing, kernel: KernelParams, data: Dataset, nodes: int, correction_from=None):
        self.inducing = inducing
        self.kernel = kernel
        self.m = len(inducing)
        self.chol = np.linalg.cholesky(kernel_matrix(inducing, inducing, kernel))
        locs, self.n1, self.n0 = data.aggregate()
        if len(locs):
            kmx = kernel_matrix(inducing, locs, kernel, symmetric=False)
            self.A = solve_triangular(self.chol, kmx, lower=True)
            self.base_var = 1.0 - (self.A * self.A).sum(0)
        else:
            self.A = np.zeros((self.m, 0))
            self.base_var = np.zeros(0)
        self.z, self.w = hermite_rule(nodes)
        self.tril = np.tril_indices(self.m)
        self.correction = None if correction_from is None else _Correction(correction_from, inducing, self.chol)

    def pack(self, m_w, c_w):
        return np.concatenate([m_w, c_w[self.tril]])

    def unpack(self, theta):
        m_w = theta[: self.m]
        c_w = np.zeros((self.m, self.m))
        c_w[self.tril] = theta[self.m :]
        return m_w, c_w

    def value_and_grad(self, m_w, c_w):
        m = self.m
        diag = np.diag(c_w)
        # KL(N(m_w, C C^T) || N(0, I))
        kl = 0.5 * (np.sum(c_w * c_w) + m_w @ m_w - m - 2.0 * np.log(np.abs(diag)).sum())
        g_m = -m_w
        g_c = -c_w + np.diag(1.0 / diag)
        val = -kl
        if self.A.shape[1]:
            A = self.A
            B = c_w.T @ A
            mean = A.T @ m_w
            var = np.maximum(self.base_var + (B * B).sum(0), _VAR_FLOOR)
            sd = np.sqrt(var)
            g = mean[:, None] + sd[:, None] * self.z
            n1 = self.n1[:, None]
            n0 = self.n0[:, None]
            f = n1 * log_ndtr(g) + n0 * log_ndtr(-g)
            df = n1 * _inverse_mills(g) - n0 * _inverse_mills(-g)
            val += float((f @ self.w).sum())
            d_mean = df @ self.w
            d_var = (df * self.z) @ self.w / (2.0 * sd)
            g_m = g_m + A @ d_mean
            g_c = g_c + 2.0 * A @ (d_var[:, None] * B.T)
        if self.correction is not None:
            cv, cg_m, cg_c = self.correction.value_and_grad(m_w, c_w)
            val += cv
            g_m = g_m + cg_m
            g_c = g_c + cg_c
        return val, g_m, np.tril(g_c)

    def value(self, m_w, c_w) -> float:
        return self.value_and_grad(m_w, c_w)[0]

    def maximise(self, m0, c0, opts: FitOptions):
        def negative(theta):
            m_w, c_w = self.unpack(theta)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                val, g_m, g_c = self.value_and_grad(m_w, c_w)
            if not np.isfinite(val):
                return np.inf, np.zeros_like(theta)
            return -val, -self.pack(g_m, g_c)

        theta0 = self.pack(m0, np.tril(c0))
        start, _ = negative(theta0)
        if not np.isfinite(start):
            raise FitError("non-finite ELBO at iteration 0")
        trace = [-start]

        def record(intermediate_result):
            if not np.isfinite(intermediate_result.fun):
                raise FitError(f"non-finite ELBO at iteration {len(trace)}")
            trace.append(-float(intermediate_result.fun))

        res = minimize(
            negative,
            theta0,
            jac=True,
            method="L-BFGS-B",
            callback=record,
            options={"maxiter": opts.max_iterations, "ftol": opts.tolerance, "gtol": 1e-8, "maxcor": 20},
        )
        theta = res.x
        if -res.fun < trace[0]:
            theta = theta0
        m_w, c_w = self.unpack(theta)
        return m_w, c_w, trace


def elbo(q: VariationalPosterior, data: Dataset, opts: FitOptions | None = None) -> float:
    """Expected log likelihood under q minus KL(q(u) || p(u))."""
    opts = opts or FitOptions()
    obj = _Objective(q.inducing, q.kernel, data, opts.quadrature_nodes)
    return obj.value(*q.whitened())


def fit(q0: VariationalPosterior, data: Dataset, opts: FitOptions | None = None) -> VariationalPosterior:
    """Maximise the ELBO starting from ``q0``; the result carries the trace."""
    opts = opts or FitOptions()
    obj = _Objective(q0.inducing, q0.kernel, data, opts.quadrature_nodes)
    m_w, c_w, trace = obj.maximise(*q0.whitened(), opts)
    return VariationalPosterior.from_whitened(q0.inducing, q0.kernel, m_w, c_w, trace)
