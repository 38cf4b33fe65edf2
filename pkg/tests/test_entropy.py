import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casmore.entropy import (
    SIGMA_FLOOR,
    BaselineEntropyConfig,
    EvolutionPathState,
    apply_sigma,
    baseline_beta,
    desired_path_length,
    entropy_delta,
    update_path,
)
from casmore.gaussian import GaussianSearchDist, entropy

from oracles import random_spd


def bound_length_step(dist, direction, eps_mu):
    """Mean displacement whose KL to ``dist`` (covariance fixed) equals ``eps_mu``."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return dist.mean + math.sqrt(2 * eps_mu) * dist.chol @ u


@pytest.mark.parametrize("c", [0.05, 0.2, 1 / (2 + 15**0.75), 0.9])
def test_first_bound_step_has_unit_gain_norm(c):
    rng = np.random.default_rng(0)
    dist = GaussianSearchDist(rng.standard_normal(4), random_spd(rng, 4))
    state = EvolutionPathState(4, c)
    new = update_path(state, dist, bound_length_step(dist, rng.standard_normal(4), 0.5), 0.5)
    assert new.path_norm == pytest.approx(math.sqrt(c * (2 - c)), abs=1e-10)
    assert new.desired_len == pytest.approx(math.sqrt(c * (2 - c)), abs=1e-15)
    assert new.t == 1
    assert state.t == 0 and np.all(state.path == 0)  # input untouched


def test_desired_length_recursion():
    c = 0.3
    g = math.sqrt(c * (2 - c))
    assert desired_path_length(0.0, c) == pytest.approx(g)
    # orthogonal steps: squared lengths add
    assert desired_path_length(1.0, c, math.pi / 2) == pytest.approx(math.hypot(1 - c, g))
    # parallel steps: lengths add
    assert desired_path_length(1.0, c, 0.0) == pytest.approx(1 - c + g)
    with pytest.raises(ValueError):
        desired_path_length(-1.0, c)


def test_path_matching_desired_geometry_gives_zero_delta():
    # two bound-length steps at exactly theta apart reproduce the desired length
    c, theta = 0.25, 3 * math.pi / 8
    dist = GaussianSearchDist(np.zeros(2), np.eye(2))
    state = EvolutionPathState(2, c, theta=theta)
    state = update_path(state, dist, bound_length_step(dist, [1.0, 0.0], 0.5), 0.5)
    assert entropy_delta(state) == pytest.approx(0.0, abs=1e-12)
    state = update_path(state, dist, bound_length_step(dist, [math.cos(theta), math.sin(theta)], 0.5), 0.5)
    assert entropy_delta(state) == pytest.approx(0.0, abs=1e-12)


def test_delta_sign():
    c = 0.2
    dist = GaussianSearchDist(np.zeros(2), np.eye(2))
    state = EvolutionPathState(2, c)
    state = update_path(state, dist, bound_length_step(dist, [1.0, 0.0], 0.5), 0.5)
    same = update_path(state, dist, bound_length_step(dist, [1.0, 0.0], 0.5), 0.5)
    back = update_path(state, dist, bound_length_step(dist, [-1.0, 0.0], 0.5), 0.5)
    assert entropy_delta(same) < 0  # consistent steps: grow
    assert entropy_delta(back) > 0  # oscillating steps: shrink
    with pytest.raises(ValueError):
        entropy_delta(EvolutionPathState(2, c))


def test_path_norm_bound_for_bound_length_steps():
    rng = np.random.default_rng(1)
    c = 0.1
    dist = GaussianSearchDist(np.zeros(3), np.eye(3))
    state = EvolutionPathState(3, c)
    for t in range(1, 200):
        state = update_path(state, dist, bound_length_step(dist, rng.standard_normal(3), 0.5), 0.5)
        bound = math.sqrt(c * (2 - c)) * (1 - (1 - c) ** t) / c
        assert state.path_norm <= bound + 1e-12


def test_invalid_c_sigma():
    with pytest.raises(ValueError):
        EvolutionPathState(2, 0.0)
    with pytest.raises(ValueError):
        EvolutionPathState(2, 1.0)


def test_apply_sigma_entropy_change_random_pairs():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 10))
        dist = GaussianSearchDist(rng.standard_normal(n), random_spd(rng, n, cond=100.0))
        delta = float(rng.uniform(-5, 5))
        new, sigma, clamped = apply_sigma(dist, delta)
        assert not clamped
        assert sigma == pytest.approx(math.exp(-delta / n))
        assert entropy(new) - entropy(dist) == pytest.approx(-delta, abs=1e-10)
        assert np.array_equal(new.mean, dist.mean)


def test_apply_sigma_zero_delta_is_identity():
    d = GaussianSearchDist(np.zeros(2), np.eye(2))
    new, sigma, clamped = apply_sigma(d, 0.0)
    assert new is d and sigma == 1.0 and not clamped


def test_apply_sigma_clamps():
    d = GaussianSearchDist(np.zeros(2), np.eye(2))
    new, sigma, clamped = apply_sigma(d, 1000.0)
    assert clamped and sigma == SIGMA_FLOOR
    assert np.allclose(new.cov, SIGMA_FLOOR**2 * np.eye(2))


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.integers(1, 8))
def test_apply_sigma_property(delta, n):
    d = GaussianSearchDist(np.zeros(n), 2.0 * np.eye(n))
    new, _, _ = apply_sigma(d, delta)
    assert entropy(new) - entropy(d) == pytest.approx(-delta, abs=1e-10)


def test_baseline_schedules():
    lin = BaselineEntropyConfig(mode="linear", delta_lin=0.1)
    assert baseline_beta(lin, 5.0) == pytest.approx(4.9)
    floor = BaselineEntropyConfig(mode="linear", delta_lin=0.1, h_min=4.95)
    assert baseline_beta(floor, 5.0) == 4.95
    pct = BaselineEntropyConfig(mode="percentage", gamma=0.9, h_min=-10.0)
    assert baseline_beta(pct, 10.0) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        BaselineEntropyConfig(mode="percentage")
    with pytest.raises(ValueError):
        BaselineEntropyConfig(mode="cosine")
