"""Online updates of a sparse posterior from batches of new observations.

Old observations only enter through ``q_old``.  The bound maximised is

    E_{q_new}[log p(y_new | g)] - KL(q_new(v) || p(v))
        - KL(q_new(u) || q_old(u)) + KL(q_new(u) || p(u))

where ``u`` are the old and ``v`` the new inducing locations.  The two
trailing KL terms share the entropy of ``q_new(u)``, so they are evaluated
together as ``E_{q_new(u)}[log q_old(u) - log p(u)]``; that form stays
finite when ``q_new(u)`` is degenerate (``v`` smaller than ``u``).
"""

from __future__ import annotations

import numpy as np

from .kernels import KernelParams, kernel_matrix
from .svgp import Dataset, FitOptions, VariationalPosterior, _Objective


def _check_kernels(q_old: VariationalPosterior, kernel: KernelParams):
    if q_old.kernel != kernel:
        raise ValueError("old and new posteriors must share kernel parameters")


def streaming_bound(
    q_new: VariationalPosterior,
    data_new: Dataset,
    q_old: VariationalPosterior,
    opts: FitOptions | None = None,
) -> float:
    opts = opts or FitOptions()
    _check_kernels(q_old, q_new.kernel)
    obj = _Objective(q_new.inducing, q_new.kernel, data_new, opts.quadrature_nodes, correction_from=q_old)
    return obj.value(*q_new.whitened())


def project(q_old: VariationalPosterior, v) -> VariationalPosterior:
    """The joint marginal of ``q_old`` at locations ``v`` as a posterior over ``v``."""
    v = np.asarray(v, dtype=float)
    v = v[:, None] if v.ndim == 1 else v
    if v.shape == q_old.inducing.shape and np.array_equal(v, q_old.inducing):
        return q_old
    kernel = q_old.kernel
    kvu = kernel_matrix(v, q_old.inducing, kernel, symmetric=False)
    kvv = kernel_matrix(v, v, kernel)  # carries the jitter regularisation
    proj = np.linalg.solve(q_old.chol.T, np.linalg.solve(q_old.chol, kvu.T)).T
    mean = proj @ q_old.mean
    a = np.linalg.solve(q_old.chol, kvu.T)
    cov = kvv - a.T @ a + (proj @ q_old.cov_root) @ (proj @ q_old.cov_root).T
    cov = 0.5 * (cov + cov.T)
    return VariationalPosterior(v, mean, np.linalg.cholesky(cov), kernel)


def update(
    q_old: VariationalPosterior,
    data_new: Dataset,
    v=None,
    opts: FitOptions | None = None,
) -> VariationalPosterior:
    """Fold ``data_new`` into ``q_old``, optionally moving to inducing set ``v``.

    Starts from ``q_old`` projected onto ``v``; with ``v`` omitted the
    inducing locations are kept.
    """
    opts = opts or FitOptions()
    if v is None and len(data_new) == 0:
        # the bound reduces to -KL(q_new || q_old)
        return q_old
    start = q_old if v is None else project(q_old, v)
    obj = _Objective(start.inducing, start.kernel, data_new, opts.quadrature_nodes, correction_from=q_old)
    m_w, c_w, trace = obj.maximise(*start.whitened(), opts)
    return VariationalPosterior.from_whitened(start.inducing, start.kernel, m_w, c_w, trace)
