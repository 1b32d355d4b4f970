import numpy as np
import pytest

from graspdecode.cspwd import shrink
from graspdecode.riemann import (
    SpdError, logeuclid_distance, logeuclid_mean, matrix_exp, matrix_log, tangent_project,
    tangent_vectors, trial_covariance, unvec_weighted, uvec_weighted,
)

from conftest import random_spd


def test_white_noise_covariance(rng):
    x = 2.0 * rng.standard_normal((3, 100000))
    c = trial_covariance(x)
    np.testing.assert_allclose(np.diag(c), 4.0, rtol=0.05)
    assert np.max(np.abs(c - np.diag(np.diag(c)))) < 0.4


def test_rank_one_trial_is_spd(rng):
    x = np.outer(rng.standard_normal(4), rng.standard_normal(50))
    assert np.linalg.eigvalsh(trial_covariance(x, lam=0.1)).min() > 0


def test_hand_computed_trial():
    x = np.array([[1.0, 0.0, -1.0, 2.0], [0.0, 1.0, 1.0, 0.0]])
    raw = np.array([[6.0, -1.0], [-1.0, 2.0]]) / 4
    expected = 0.8 * raw + 0.2 * (np.trace(raw) / 2) * np.eye(2)
    np.testing.assert_allclose(trial_covariance(x, lam=0.2), expected, atol=1e-15)
    with pytest.raises(SpdError):
        trial_covariance(np.ones((2, 1)))


def test_matrix_log_cases(rng):
    assert not np.any(matrix_log(np.eye(3)))
    np.testing.assert_allclose(matrix_log(np.diag([np.e, np.e ** 2])), np.diag([1.0, 2.0]), atol=1e-14)
    for _ in range(20):
        a = random_spd(rng, 5)
        assert np.linalg.norm(matrix_exp(matrix_log(a)) - a) <= 1e-9 * np.linalg.norm(a)
    with pytest.raises(SpdError):
        matrix_log(np.diag([1.0, 0.0]))


def test_logeuclid_mean_cases(rng):
    a = random_spd(rng, 3)
    np.testing.assert_allclose(logeuclid_mean([a]), a, atol=1e-12)
    np.testing.assert_allclose(logeuclid_mean([a, a]), a, atol=1e-12)
    np.testing.assert_allclose(logeuclid_mean([np.diag([1.0, 4.0]), np.diag([4.0, 1.0])]),
                               2 * np.eye(2), atol=1e-12)
    with pytest.raises(SpdError):
        logeuclid_mean([])
    with pytest.raises(SpdError):
        logeuclid_mean([np.eye(2), np.eye(3)])


def test_commuting_mean_is_geometric(rng):
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    vals = rng.uniform(0.2, 5, (6, 4))
    mats = [(q * v) @ q.T for v in vals]
    expected = (q * np.exp(np.log(vals).mean(axis=0))) @ q.T
    np.testing.assert_allclose(logeuclid_mean(mats), expected, atol=1e-10)


def test_tangent_cases(rng):
    m = random_spd(rng, 4)
    assert np.linalg.norm(tangent_project(m, m)) < 1e-10
    c = random_spd(rng, 4)
    np.testing.assert_allclose(tangent_project(c, np.eye(4)), matrix_log(c), atol=1e-12)
    np.testing.assert_allclose(tangent_project(np.diag([4.0, 1.0]), np.eye(2)),
                               np.diag([np.log(4), 0.0]), atol=1e-14)
    with pytest.raises(SpdError):
        tangent_project(np.diag([1.0, -1.0]), np.eye(2))


def test_tangent_is_linear_near_base(rng):
    m = random_spd(rng, 4)
    d = rng.standard_normal((4, 4))
    d = d + d.T
    n3 = np.linalg.norm(tangent_project(m + 1e-3 * d, m))
    n4 = np.linalg.norm(tangent_project(m + 1e-4 * d, m))
    assert n3 / n4 == pytest.approx(10.0, rel=0.01)


def test_uvec_weighted():
    assert uvec_weighted(np.zeros((3, 3))).shape == (6,)
    assert not np.any(uvec_weighted(np.zeros((3, 3))))
    np.testing.assert_allclose(uvec_weighted(np.array([[1.0, 3.0], [3.0, 2.0]])),
                               [1.0, 3 * np.sqrt(2), 2.0], atol=1e-15)
    with pytest.raises(SpdError):
        uvec_weighted(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_uvec_norm_and_inverse(rng):
    for _ in range(50):
        s = rng.standard_normal((5, 5))
        s = s + s.T
        z = uvec_weighted(s)
        assert abs(z @ z - np.sum(s ** 2)) < 1e-12 * max(1.0, np.sum(s ** 2))
        np.testing.assert_allclose(unvec_weighted(z, 5), s, atol=1e-14)


def test_inversion_commutes_with_mean(rng):
    for _ in range(20):
        mats = [random_spd(rng, 4) for _ in range(5)]
        inv_mean = logeuclid_mean([np.linalg.inv(a) for a in mats])
        assert np.linalg.norm(inv_mean - np.linalg.inv(logeuclid_mean(mats))) < 1e-9


def test_tangent_vectors_shape(rng):
    covs = np.stack([shrink(random_spd(rng, 6), 0.1).matrix for _ in range(7)])
    v = tangent_vectors(covs, logeuclid_mean(covs))
    assert v.shape == (7, 21)
    assert logeuclid_distance(covs[0], covs[0]) == 0.0
