import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safemap.gp import (Dataset, GpModel, KernelParams, kernel, kernel_matrix,
                        mutual_information, posterior, posterior_covariance_matrix)

P = KernelParams(alpha=1.0, length_scale=0.15, noise_var=0.01)


def test_kernel_identity():
    assert kernel(P, (0.3, 0.7), (0.3, 0.7)) == 1.0
    p2 = KernelParams(alpha=2.0, length_scale=0.15, noise_var=0.01)
    assert kernel(p2, (0.3, 0.7), (0.3, 0.7)) == 4.0


def test_kernel_at_one_length_scale():
    assert kernel(P, (0.0, 0.0), (0.15, 0.0)) == pytest.approx(math.exp(-0.5), abs=1e-12)


@given(st.tuples(st.floats(-1, 1), st.floats(-1, 1)),
       st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
@settings(max_examples=50, deadline=None)
def test_kernel_symmetry(x, y):
    assert kernel(P, x, y) == pytest.approx(kernel(P, y, x), rel=1e-14)


def test_prior_posterior():
    post = posterior(P, Dataset.empty(2), [(0.1, 0.2), (0.8, 0.8)])
    assert np.all(post.mean == 0.0)
    assert np.all(post.variance == 1.0)


def test_single_point_posterior_closed_form():
    y = 0.83
    data = Dataset(np.array([[0.5, 0.5]]), np.array([y]))
    post = posterior(P, data, [(0.5, 0.5)])
    assert post.mean[0] == pytest.approx(y / 1.01, abs=1e-12)
    assert post.variance[0] == pytest.approx(1.0 - 1.0 / 1.01, abs=1e-12)


def test_repeated_observation_variance_closed_form():
    # m noisy repeats at one site: var -> alpha^2 nv / (m alpha^2 + nv)
    for m in (1, 10, 50):
        data = Dataset(np.tile([[0.5, 0.5]], (m, 1)), np.ones(m))
        post = posterior(P, data, [(0.5, 0.5)])
        assert post.variance[0] == pytest.approx(0.01 / (m + 0.01), abs=1e-8)


def test_posterior_variance_bounds():
    rng = np.random.default_rng(5)
    data = Dataset(rng.uniform(0, 1, (40, 2)), rng.normal(0, 1, 40))
    post = posterior(P, data, rng.uniform(0, 1, (200, 2)))
    assert np.all(post.variance >= 0.0)
    assert np.all(post.variance <= 1.0 + 1e-10)


def test_mean_interpolates_in_small_noise_limit():
    p = KernelParams(alpha=1.0, length_scale=0.15, noise_var=1e-8)
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, (20, 2))
    y = rng.normal(0, 0.5, 20)
    post = posterior(p, Dataset(X, y), X)
    assert np.max(np.abs(post.mean - y)) < 1e-3


def test_mutual_information_empty_and_scalar():
    assert mutual_information(P, []) == 0.0
    got = mutual_information(P, [(0.5, 0.5)])
    assert got == pytest.approx(0.5 * math.log(101.0), abs=1e-12)


def test_mutual_information_eigenvalue_identity():
    rng = np.random.default_rng(4)
    for _ in range(10):
        X = rng.uniform(0, 1, (30, 2))
        K = kernel_matrix(P, X)
        lam = np.linalg.eigvalsh(K)
        expected = 0.5 * np.sum(np.log1p(np.maximum(lam, 0) / P.noise_var))
        assert mutual_information(P, X) == pytest.approx(expected, abs=1e-8)


def test_mutual_information_order_invariant():
    rng = np.random.default_rng(9)
    X = rng.uniform(0, 1, (25, 2))
    base = mutual_information(P, X)
    for _ in range(5):
        perm = rng.permutation(len(X))
        assert mutual_information(P, X[perm]) == pytest.approx(base, abs=1e-9)


def test_posterior_covariance_permutation_invariance():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, (25, 2))
    y = rng.normal(0, 1, 25)
    Q = rng.uniform(0, 1, (50, 2))
    base = posterior_covariance_matrix(P, Dataset(X, y), Q)
    for _ in range(5):
        perm = rng.permutation(25)
        other = posterior_covariance_matrix(P, Dataset(X[perm], y[perm]), Q)
        assert np.max(np.abs(base - other)) < 1e-9


def test_posterior_covariance_empty_and_diagonal():
    rng = np.random.default_rng(8)
    Q = rng.uniform(0, 1, (20, 2))
    empty_cov = posterior_covariance_matrix(P, Dataset.empty(2), Q)
    assert np.allclose(empty_cov, kernel_matrix(P, Q))
    X = rng.uniform(0, 1, (15, 2))
    y = rng.normal(0, 1, 15)
    cov = posterior_covariance_matrix(P, Dataset(X, y), Q)
    post = posterior(P, Dataset(X, y), Q)
    assert np.max(np.abs(np.diag(cov) - post.variance)) < 1e-10
    assert np.max(np.abs(cov - cov.T)) < 1e-10


def test_duplicate_locations_permitted():
    X = np.array([[0.5, 0.5], [0.5, 0.5], [0.2, 0.2]])
    y = np.array([1.0, 1.1, 0.3])
    post = posterior(P, Dataset(X, y), [(0.5, 0.5)])
    assert np.isfinite(post.mean[0]) and np.isfinite(post.variance[0])


class TestIncrementalModel:
    def test_matches_batch_solve(self):
        rng = np.random.default_rng(12)
        Q = rng.uniform(0, 1, (60, 2))
        gp = GpModel(P, refactor_every=64)
        gp.attach_grid(Q)
        X, y = [], []
        for i in range(140):  # crosses two refactorization boundaries
            x = rng.uniform(0, 1, 2)
            v = rng.normal(0, 1)
            gp.add(x, v)
            X.append(x)
            y.append(v)
        batch = posterior(P, Dataset(np.array(X), np.array(y)), Q)
        inc = gp.grid_posterior()
        assert np.max(np.abs(batch.mean - inc.mean)) < 1e-9
        assert np.max(np.abs(batch.variance - inc.variance)) < 1e-9

    def test_variance_monotone_under_conditioning(self):
        rng = np.random.default_rng(3)
        probes = rng.uniform(0, 1, (20, 2))
        gp = GpModel(P)
        gp.attach_grid(probes)
        prev = gp.grid_posterior().variance
        for _ in range(80):
            gp.add(rng.uniform(0, 1, 2), rng.normal())
            cur = gp.grid_posterior().variance
            assert np.all(cur <= prev + 1e-10)
            prev = cur

    def test_near_duplicate_points_stay_stable(self):
        gp = GpModel(P)
        gp.attach_grid(np.array([[0.5, 0.5]]))
        for i in range(30):
            gp.add(np.array([0.5, 0.5]) + 1e-12 * i, 1.0)
        post = gp.grid_posterior()
        assert np.isfinite(post.variance[0])
        assert post.variance[0] == pytest.approx(0.01 / (30 + 0.01), rel=1e-3)
