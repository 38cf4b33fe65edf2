import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casmore.errors import DimensionMismatchError, FactorizationError
from casmore.gaussian import (
    GaussianSearchDist,
    entropy,
    from_natural,
    kl_divergence,
    natural_params,
    sample,
    scale_cov,
)


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0, math.log(cond), n))
    return (q * eig) @ q.T


def random_dist(rng, n):
    return GaussianSearchDist(rng.standard_normal(n), random_spd(rng, n))


def test_cached_factor_reproduces_covariance():
    rng = np.random.default_rng(0)
    d = random_dist(rng, 6)
    assert np.allclose(d.chol @ d.chol.T, d.cov, rtol=1e-10, atol=0)
    assert np.allclose(np.triu(d.chol, 1), 0.0)


def test_rejects_non_spd_and_bad_shapes():
    with pytest.raises(FactorizationError):
        GaussianSearchDist([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DimensionMismatchError):
        GaussianSearchDist([0.0, 0.0], np.eye(3))


def test_immutable():
    d = GaussianSearchDist.isotropic(np.zeros(2), 1.0)
    with pytest.raises(AttributeError):
        d.mean = np.ones(2)
    with pytest.raises(ValueError):
        d.mean[0] = 1.0


def test_sampling_is_reproducible():
    d = GaussianSearchDist(np.zeros(2), np.eye(2))
    a = sample(d, 3, np.random.default_rng(42))
    b = sample(d, 3, np.random.default_rng(42))
    assert a.shape == (3, 2)
    assert np.array_equal(a, b)


def test_degenerate_variance_samples_collapse_to_mean():
    m = np.array([1.0, -2.0, 3.0])
    d = GaussianSearchDist(m, 1e-20 * np.eye(3))
    xs = sample(d, 50, np.random.default_rng(1))
    assert np.max(np.abs(xs - m)) < 1e-9


def test_sample_moments_standard_normal():
    d = GaussianSearchDist(np.zeros(5), np.eye(5))
    xs = sample(d, 100_000, np.random.default_rng(3))
    assert np.max(np.abs(xs.mean(axis=0))) < 0.02
    assert np.max(np.abs(np.cov(xs, rowvar=False) - np.eye(5))) < 0.05


def test_sample_covariance_within_three_standard_errors():
    rng = np.random.default_rng(4)
    cov = random_spd(rng, 3)
    d = GaussianSearchDist(np.zeros(3), cov)
    count = 100_000
    emp = np.cov(sample(d, count, rng), rowvar=False)
    # Var of a sample covariance entry: (S_ij^2 + S_ii S_jj) / N
    se = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / count)
    assert np.all(np.abs(emp - cov) < 3.0 * se + 1e-12)


@pytest.mark.parametrize(
    "n, scale, expected",
    [
        (1, 1.0, 0.5 * math.log(2 * math.pi * math.e)),
        (2, 1.0, math.log(2 * math.pi * math.e)),
        (3, 4.0, 1.5 * math.log(2 * math.pi * math.e) + 1.5 * math.log(4.0)),
    ],
)
def test_entropy_known_values(n, scale, expected):
    d = GaussianSearchDist(np.zeros(n), scale * np.eye(n))
    assert entropy(d) == pytest.approx(expected, abs=1e-12)


def test_entropy_matches_direct_determinant():
    rng = np.random.default_rng(5)
    d = random_dist(rng, 4)
    direct = 0.5 * 4 * math.log(2 * math.pi * math.e) + 0.5 * math.log(np.linalg.det(d.cov))
    assert entropy(d) == pytest.approx(direct, rel=1e-12)


def test_entropy_scale_law():
    rng = np.random.default_rng(6)
    for _ in range(20):
        n = int(rng.integers(1, 8))
        d = random_dist(rng, n)
        sig = float(np.exp(rng.uniform(-3, 3)))
        assert entropy(scale_cov(d, sig**2)) - entropy(d) == pytest.approx(n * math.log(sig), abs=1e-12)


def test_kl_basic_values():
    rng = np.random.default_rng(7)
    p = random_dist(rng, 3)
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    a = GaussianSearchDist([1.0], [[1.0]])
    b = GaussianSearchDist([0.0], [[1.0]])
    assert kl_divergence(a, b) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DimensionMismatchError):
        kl_divergence(a, p)


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(8)
    p = GaussianSearchDist(rng.standard_normal(2) * 0.5, random_spd(rng, 2, cond=3.0))
    q = GaussianSearchDist(rng.standard_normal(2) * 0.5, random_spd(rng, 2, cond=3.0))
    xs = sample(p, 1_000_000, rng)

    def logpdf(d, x):
        z = np.linalg.solve(d.chol, (x - d.mean).T)
        return -0.5 * np.sum(z * z, axis=0) - 0.5 * d.log_det_cov() - d.dim * 0.5 * math.log(2 * math.pi)

    mc = float(np.mean(logpdf(p, xs) - logpdf(q, xs)))
    assert kl_divergence(p, q) == pytest.approx(mc, abs=0.01)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_kl_non_negative(seed, n):
    rng = np.random.default_rng(seed)
    p, q = random_dist(rng, n), random_dist(rng, n)
    assert kl_divergence(p, q) >= 0.0


def test_natural_parameters_known_values():
    m, lam = natural_params(GaussianSearchDist(np.zeros(2), np.eye(2)))
    assert np.allclose(m, 0.0) and np.allclose(lam, np.eye(2))
    m, lam = natural_params(GaussianSearchDist([2.0], [[4.0]]))
    assert m[0] == pytest.approx(0.5) and lam[0, 0] == pytest.approx(0.25)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_natural_round_trip(seed):
    rng = np.random.default_rng(seed)
    d = random_dist(rng, 5)
    back = from_natural(*natural_params(d))
    assert np.allclose(back.mean, d.mean, rtol=1e-10, atol=1e-10 * np.abs(d.mean).max())
    assert np.allclose(back.cov, d.cov, rtol=1e-10, atol=1e-10 * np.abs(d.cov).max())


def test_from_natural_rejects_non_spd():
    with pytest.raises(FactorizationError):
        from_natural(np.zeros(2), -np.eye(2))
