import numpy as np
import pytest

from graspdecode.cspwd import (
    CspError, class_covariance, csp_apply, csp_fit, default_n_filters, feature_matrix,
    ledoit_wolf_lambda, log_variance_features, shrink,
)
from graspdecode.data import EpochSet, Label
from graspdecode.wavelet import WaveletSpec

from conftest import random_spd


def _lw_direct(obs):
    """Ledoit-Wolf intensity written out term by term (observations as rows)."""
    n, p = obs.shape
    s = sum(np.outer(x, x) for x in obs) / n
    mu = np.trace(s) / p
    d2 = np.linalg.norm(s - mu * np.eye(p), "fro") ** 2 / p
    b2 = sum(np.linalg.norm(np.outer(x, x) - s, "fro") ** 2 for x in obs) / (n * n * p)
    return min(b2, d2) / d2


def test_class_covariance_single_and_sign(rng):
    x = rng.standard_normal((3, 20))
    one = EpochSet(x[None], [0], 20.0, ("a", "b", "c"))
    np.testing.assert_allclose(class_covariance(one, Label.TG), x @ x.T, rtol=1e-13)
    two = EpochSet(np.stack([x, -x]), [0, 0], 20.0, ("a", "b", "c"))
    np.testing.assert_allclose(class_covariance(two, Label.TG), x @ x.T, rtol=1e-13)


def test_class_covariance_brute_force(rng):
    trials = rng.standard_normal((5, 4, 100))
    e = EpochSet(trials, [1] * 5, 100.0, ("a", "b", "c", "d"))
    expected = np.zeros((4, 4))
    for t in trials:
        for i in range(4):
            for j in range(4):
                expected[i, j] += np.dot(t[i], t[j])
    np.testing.assert_allclose(class_covariance(e, Label.PG), expected / 5, rtol=1e-12)
    with pytest.raises(CspError):
        class_covariance(e, Label.TG)


def test_lw_matches_direct_formula(rng):
    for p, n in [(4, 30), (10, 12), (60, 3)]:
        obs = rng.standard_normal((n, p)) * rng.uniform(0.5, 2, p)
        assert ledoit_wolf_lambda(obs.T) == pytest.approx(_lw_direct(obs), rel=1e-10)


def test_lw_against_sklearn(rng):
    sk = pytest.importorskip("sklearn.covariance")
    obs = rng.standard_normal((40, 6)) @ np.diag([1, 2, 3, 1, 1, 5])
    _, lam = sk.ledoit_wolf(obs, assume_centered=True)
    assert ledoit_wolf_lambda(obs.T) == pytest.approx(lam, rel=1e-10)


def test_lw_limits(rng):
    cov = random_spd(rng, 4)
    obs = rng.multivariate_normal(np.zeros(4), cov, size=200000)
    assert ledoit_wolf_lambda(obs.T) < 0.01
    assert ledoit_wolf_lambda(rng.standard_normal((60, 3))) > 0.5
    obs = rng.standard_normal((20, 8))
    assert ledoit_wolf_lambda(np.repeat(obs, 2, axis=0).T) <= ledoit_wolf_lambda(obs.T) + 1e-15
    with pytest.raises(CspError):
        ledoit_wolf_lambda(np.ones((3, 1)))


def test_shrink_cases(rng):
    c = random_spd(rng, 3)
    np.testing.assert_allclose(shrink(c, 0.0).matrix, c)
    np.testing.assert_allclose(shrink(c, 1.0).matrix, np.trace(c) / 3 * np.eye(3))
    np.testing.assert_allclose(shrink(np.diag([2.0, 0.0]), 0.5).matrix, np.diag([1.5, 0.5]))
    with pytest.raises(CspError):
        shrink(np.array([[1.0, 0.5], [0.0, 1.0]]), 0.1)


def test_shrink_improves_conditioning(rng):
    for _ in range(20):
        c = random_spd(rng, 5, cond=1e4)
        for lam in (0.1, 0.5, 1.0):
            assert np.linalg.cond(shrink(c, lam).matrix) <= np.linalg.cond(c) * (1 + 1e-12)


def test_csp_equal_classes():
    c = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_allclose(csp_fit(c, c, 3).eigenvalues, 0.5, atol=1e-12)


def test_csp_analytic_two_by_two():
    m = csp_fit(np.diag([2.0, 1.0]), np.diag([1.0, 2.0]), 2)
    np.testing.assert_allclose(m.eigenvalues, [2 / 3, 1 / 3], atol=1e-12)
    w = m.filters / np.linalg.norm(m.filters, axis=0)
    np.testing.assert_allclose(np.abs(w), np.eye(2), atol=1e-12)


def test_csp_joint_diagonalization(rng):
    for _ in range(50):
        e = int(rng.integers(2, 17))
        ca, cb = random_spd(rng, e), random_spd(rng, e)
        m = csp_fit(ca, cb, e)
        w = m.filters
        assert np.linalg.norm(w.T @ ca @ w + w.T @ cb @ w - np.eye(e)) < 1e-8
        a = w.T @ ca @ w
        assert np.linalg.norm(a - np.diag(np.diag(a))) < 1e-8
        assert np.all(np.diff(np.diag(a)) <= 1e-10)


def test_csp_keeps_extremes(rng):
    ca, cb = random_spd(rng, 20), random_spd(rng, 20)
    full = csp_fit(ca, cb, 20)
    part = csp_fit(ca, cb, 12)
    np.testing.assert_allclose(part.eigenvalues, np.r_[full.eigenvalues[:6], full.eigenvalues[-6:]])
    assert default_n_filters(63) == 12 and default_n_filters(16) == 16


def test_csp_invariant_to_channel_mixing(rng):
    ca, cb = random_spd(rng, 6), random_spd(rng, 6)
    g = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    m1 = csp_fit(ca, cb, 6)
    m2 = csp_fit(g @ ca @ g.T, g @ cb @ g.T, 6)
    np.testing.assert_allclose(np.sort(m1.eigenvalues), np.sort(m2.eigenvalues), atol=1e-8)


@pytest.mark.parametrize("kw", [dict(n_filters=5), dict(n_filters=3)])
def test_csp_errors(rng, kw):
    with pytest.raises(CspError):
        csp_fit(random_spd(rng, 4), random_spd(rng, 4), **kw)


def test_csp_rejects_non_spd():
    with pytest.raises(CspError):
        csp_fit(np.diag([1.0, -1.0]), np.eye(2), 2)


def test_csp_apply(rng):
    m = csp_fit(np.eye(3), np.eye(3), 3)
    ident = type(m)(m.pair, np.eye(3)[:, :2], np.array([0.5, 0.5]))
    x = rng.standard_normal((3, 10))
    np.testing.assert_array_equal(csp_apply(ident, x), x[:2])
    assert not np.any(csp_apply(m, np.zeros((3, 10))))
    w = rng.standard_normal((3, 2))
    rand = type(m)(m.pair, w, np.array([0.6, 0.4]))
    np.testing.assert_allclose(csp_apply(rand, x), w.T @ x)
    with pytest.raises(CspError):
        csp_apply(m, np.zeros((4, 10)))


def _pair_set(rng, n_channels, n_samples, per_class=90):
    data = rng.standard_normal((2 * per_class, n_channels, n_samples))
    data[:per_class, 0] *= 3
    return EpochSet(data, [0] * per_class + [1] * per_class, float(n_samples),
                    tuple(f"c{i}" for i in range(n_channels)))


@pytest.mark.parametrize("n_channels,n_samples,f", [(63, 250, 12), (16, 125, 16)])
def test_feature_matrix_shape(rng, n_channels, n_samples, f):
    e = _pair_set(rng, n_channels, n_samples)
    ca = class_covariance(e, 0) + 1e-6 * np.eye(n_channels)
    cb = class_covariance(e, 1) + 1e-6 * np.eye(n_channels)
    m = csp_fit(ca, cb)
    level = 3 if n_samples >= 200 else 2
    fm = feature_matrix(e, m, WaveletSpec("db4", level))
    assert fm.values.shape == (f, 180)


def test_log_variance_scaling(rng):
    x = rng.standard_normal((4, 250))
    spec = WaveletSpec("db4", 3)
    np.testing.assert_allclose(log_variance_features(2 * x, spec) - log_variance_features(x, spec),
                               2 * np.log(2), atol=1e-12)
    assert np.all(np.isfinite(log_variance_features(np.zeros((2, 250)), spec)))
    both = log_variance_features(x, spec, band="approx+detail")
    assert both.shape == (4,)
