import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import expit

from smoothmc.kernels import (
    GaussianDist,
    KernelParams,
    gauss_hermite_expect,
    hermite_rule,
    kernel_matrix,
    kl_gaussians,
    se_kernel,
    se_kernel_gradient,
)

coords = st.floats(-3, 3, allow_nan=False)
lengths = st.floats(0.01, 5.0)


def test_kernel_examples():
    p = KernelParams(length_scale=0.3)
    assert se_kernel([0.2, 0.4], [0.2, 0.4], p) == 1.0
    # |x - x'|^2 = 2 l  ->  exp(-1)
    assert se_kernel([0.0], [np.sqrt(0.6)], p) == pytest.approx(0.367879441, rel=1e-9)
    values = [se_kernel([0.0, 0.0], [0.5, 0.5], KernelParams(length_scale=l)) for l in (0.1, 1, 10, 100, 1e4)]
    assert np.all(np.diff(values) > 0) and values[-1] == pytest.approx(1.0, abs=1e-4)


@given(st.lists(coords, min_size=2, max_size=2), st.lists(coords, min_size=2, max_size=2), lengths)
def test_kernel_symmetric_and_bounded(x, y, l):
    p = KernelParams(length_scale=l)
    k = se_kernel(x, y, p)
    assert k == se_kernel(y, x, p)
    assert 0.0 <= k <= 1.0


def test_kernel_matrix_examples():
    p = KernelParams()
    np.testing.assert_allclose(kernel_matrix([[0.3, 0.3]], [[0.3, 0.3]], p, symmetric=True), [[1 + 1e-6]])
    pts = np.array([[0.1, 0.2], [0.1, 0.2]])
    np.testing.assert_allclose(kernel_matrix(pts, pts, p), np.ones((2, 2)) + 1e-6 * np.eye(2))
    a = np.random.default_rng(0).random((5, 2))
    k = kernel_matrix(a, a, p)
    np.linalg.cholesky(k)
    assert np.linalg.eigvalsh(k).min() > 0
    cross = kernel_matrix(a, a[:3], p)
    for i in range(5):
        for j in range(3):
            assert cross[i, j] == pytest.approx(se_kernel(a[i], a[j], p), rel=1e-12)


@settings(max_examples=30)
@given(st.integers(1, 50), st.integers(1, 3), lengths, st.integers(0, 10**6))
def test_kernel_matrix_positive_definite(n, d, l, seed):
    a = np.random.default_rng(seed).random((n, d))
    k = kernel_matrix(a, a, KernelParams(length_scale=l))
    np.testing.assert_allclose(k, k.T)
    np.linalg.cholesky(k)


def test_gradient_examples():
    p = KernelParams(length_scale=1.0)
    np.testing.assert_array_equal(se_kernel_gradient([0.4, 0.1], [0.4, 0.1], p), [0.0, 0.0])
    assert se_kernel_gradient([1.0], [0.0], p)[0] == pytest.approx(-0.6065306597, rel=1e-9)


@settings(max_examples=100)
@given(
    st.lists(st.floats(0, 1), min_size=2, max_size=2),
    st.lists(st.floats(0, 1), min_size=2, max_size=2),
    st.floats(0.05, 2.0),
)
def test_gradient_finite_differences(x, u, l):
    p = KernelParams(length_scale=l)
    x = np.array(x)
    grad = se_kernel_gradient(x, u, p)
    h = 1e-5
    fd = np.array(
        [(se_kernel(x + h * e, u, p) - se_kernel(x - h * e, u, p)) / (2 * h) for e in np.eye(2)]
    )
    scale = max(np.abs(grad).max(), 1e-3)
    assert np.abs(grad - fd).max() / scale < 1e-5


def test_kl_examples():
    p = GaussianDist(np.zeros(3), np.diag([1.0, 2.0, 3.0]))
    assert kl_gaussians(p, p) == pytest.approx(0.0, abs=1e-12)
    assert kl_gaussians(GaussianDist([1.0], [[1.0]]), GaussianDist([0.0], [[1.0]])) == pytest.approx(0.5)
    assert kl_gaussians(GaussianDist([0.0, 0.1], np.eye(2)), GaussianDist(np.zeros(2), np.eye(2))) > 0
    with pytest.raises(np.linalg.LinAlgError):
        kl_gaussians(GaussianDist(np.zeros(2), np.eye(2)), GaussianDist(np.zeros(2), np.ones((2, 2))))


def _random_gaussian(rng, d):
    a = rng.normal(size=(d, d))
    return GaussianDist(rng.normal(size=d), a @ a.T + 0.5 * np.eye(d))


def _logpdf(x, g: GaussianDist):
    d = x - g.mean
    sol = np.linalg.solve(g.cov, d.T).T
    _, logdet = np.linalg.slogdet(g.cov)
    return -0.5 * ((d * sol).sum(1) + logdet + g.dim * np.log(2 * np.pi))


def test_kl_monte_carlo(rng):
    q, p = _random_gaussian(rng, 3), _random_gaussian(rng, 3)
    x = rng.multivariate_normal(q.mean, q.cov, size=10**6)
    diff = _logpdf(x, q) - _logpdf(x, p)
    se = diff.std() / np.sqrt(len(diff))
    assert abs(kl_gaussians(q, p) - diff.mean()) < 3 * se


@settings(max_examples=50)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_kl_non_negative(seed, d):
    rng = np.random.default_rng(seed)
    q, p = _random_gaussian(rng, d), _random_gaussian(rng, d)
    assert kl_gaussians(q, p) >= 0
    near = GaussianDist(q.mean + 1e-3, q.cov)
    assert kl_gaussians(near, q) > 0


@pytest.mark.parametrize("nodes", [1, 2, 5, 32, 64])
def test_hermite_constant(nodes):
    assert gauss_hermite_expect(lambda g: np.ones_like(g), 0.7, 3.0, nodes) == pytest.approx(1.0, abs=1e-14)
    z, w = hermite_rule(nodes)
    assert not w.flags.writeable


def test_hermite_moments():
    assert gauss_hermite_expect(lambda g: g, 0.3, 2.0) == pytest.approx(0.3, abs=1e-14)
    assert gauss_hermite_expect(lambda g: g**2, 0.3, 2.0) == pytest.approx(2.09, rel=1e-12)
    np.testing.assert_allclose(gauss_hermite_expect(lambda g: g, np.array([0.0, 1.0]), np.array([1.0, 0.0])), [0, 1])


def test_hermite_logistic_against_dense_integration():
    got = gauss_hermite_expect(expit, 0.0, 1.0, 32)
    dense, _ = integrate.quad(lambda g: expit(g) * np.exp(-0.5 * g * g) / np.sqrt(2 * np.pi), -np.inf, np.inf, epsabs=1e-13)
    assert got == pytest.approx(dense, abs=1e-8)
    got = gauss_hermite_expect(expit, 0.8, 1.0, 32)
    dense, _ = integrate.quad(lambda g: expit(g) * np.exp(-0.5 * (g - 0.8) ** 2) / np.sqrt(2 * np.pi), -np.inf, np.inf, epsabs=1e-13)
    assert got == pytest.approx(dense, abs=1e-8)


def test_invalid_params():
    with pytest.raises(ValueError):
        KernelParams(length_scale=0.0)
    with pytest.raises(ValueError):
        KernelParams(jitter=-1.0)
    with pytest.raises(ValueError):
        gauss_hermite_expect(np.sin, 0.0, -1.0)
