"""Parameter-space designs and batch query strategies."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc
from sklearn.cluster import KMeans

from .kernels import kernel_matrix
from .svgp import VariationalPosterior, predictive_variance

STRATEGIES = ("variance", "gradient", "random")


class ParameterSpace:
    """Axis-aligned box with an affine map onto the unit cube.

    The GP works in unit coordinates so one length scale suits every axis.
    """

    def __init__(self, bounds):
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if np.any(b[:, 0] > b[:, 1]):
            raise ValueError("lower bound above upper bound")
        self.bounds = b

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def width(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    def to_unit(self, x) -> np.ndarray:
        w = np.where(self.width > 0, self.width, 1.0)
        return (np.asarray(x, dtype=float) - self.lower) / w

    def from_unit(self, z) -> np.ndarray:
        return self.clip(self.lower + np.asarray(z, dtype=float) * self.width)

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.bounds[:, 0], self.bounds[:, 1])

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.bounds[:, 0]) & (x <= self.bounds[:, 1]), axis=1)


def grid_design(space: ParameterSpace, dims) -> np.ndarray:
    """Regular grid including the box corners; first axis varies slowest."""
    dims = [int(n) for n in dims]
    if len(dims) != space.dim or any(n < 1 for n in dims):
        raise ValueError(f"grid needs {space.dim} positive sizes, got {dims}")
    axes = [
        np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
        for (lo, hi), n in zip(space.bounds, dims)
    ]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, space.dim)


def uniform_design(space: ParameterSpace, n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return space.clip(space.lower + rng.random((n, space.dim)) * space.width)


def lhs_design(space: ParameterSpace, n: int, seed) -> np.ndarray:
    sample = qmc.LatinHypercube(d=space.dim, seed=np.random.default_rng(seed)).random(n)
    return space.from_unit(sample)


def sample_pool(space: ParameterSpace, n: int, seed) -> np.ndarray:
    if n < 1:
        raise ValueError("pool size must be >= 1")
    return uniform_design(space, n, seed)


def kmeans(points, k: int, seed) -> np.ndarray:
    """k-means++ seeding then Lloyd iterations (at most 100)."""
    x = np.asarray(points, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    if k > len(x):
        raise ValueError(f"k={k} exceeds the number of points ({len(x)})")
    if k < 1:
        raise ValueError("k must be >= 1")
    random_state = int(np.random.default_rng(seed).integers(2**31 - 1))
    km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=100, tol=0.0, random_state=random_state)
    km.fit(x)
    return km.cluster_centers_


def mean_gradient(q: VariationalPosterior, X) -> np.ndarray:
    """Gradient of the posterior latent mean ``k(x, u) alpha`` in ``x``."""
    X = np.asarray(X, dtype=float).reshape(-1, q.inducing.shape[1])
    weights = kernel_matrix(X, q.inducing, q.kernel, symmetric=False) * q.alpha
    return -(weights.sum(1)[:, None] * X - weights @ q.inducing) / q.kernel.length_scale


def scores(q: VariationalPosterior, centers, strategy: str) -> np.ndarray:
    if strategy == "variance":
        return predictive_variance(q, centers)
    if strategy == "gradient":
        return np.linalg.norm(mean_gradient(q, centers), axis=1)
    raise ValueError(f"strategy {strategy!r} has no score")


def select_batch(q: VariationalPosterior, centers, batch_size: int, strategy: str, seed=None) -> np.ndarray:
    """Pick ``batch_size`` rows of ``centers`` (unit coordinates)."""
    centers = np.asarray(centers, dtype=float).reshape(-1, q.inducing.shape[1])
    if batch_size > len(centers):
        raise ValueError("batch_size exceeds the number of candidates")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy == "random":
        idx = np.random.default_rng(seed).choice(len(centers), size=batch_size, replace=False)
    else:
        # stable sort: equal scores keep pool order
        idx = np.argsort(-scores(q, centers, strategy), kind="stable")[:batch_size]
    return centers[idx]


@dataclass(frozen=True)
class QueryConfig:
    pool_size: int = 1000
    n_clusters: int = 450
    batch_size: int = 150
    strategy: str = "variance"
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0 <= self.batch_size <= self.n_clusters <= self.pool_size:
            raise ValueError("need batch_size <= n_clusters <= pool_size")


def choose_points(q: VariationalPosterior, space: ParameterSpace, config: QueryConfig, seed=None) -> np.ndarray:
    """Pool sampling, clustering and selection; returns points in model units."""
    if config.batch_size == 0:
        return np.zeros((0, space.dim))
    ss = np.random.SeedSequence(config.seed if seed is None else seed)
    pool_seed, kmeans_seed, pick_seed = ss.spawn(3)
    pool = space.to_unit(sample_pool(space, config.pool_size, pool_seed))
    centers = kmeans(pool, config.n_clusters, kmeans_seed)
    chosen = select_batch(q, centers, config.batch_size, config.strategy, pick_seed)
    return space.from_unit(chosen)


def query_new(q, model, phi, space: ParameterSpace, config: QueryConfig, n_traj: int, t_end: float, seed=None):
    """Choose a batch and label it by simulation; the Dataset is in model units."""
    from .experiment import label_points

    points = choose_points(q, space, config, seed)
    return label_points(model, phi, points, n_traj, t_end, config.seed if seed is None else seed)
