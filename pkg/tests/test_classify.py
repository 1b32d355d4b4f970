import numpy as np
import pytest

from graspdecode.classify import (
    KINDS, MLP, ClassifierError, ModelSpec, SmoConvergenceError, decision_scores, load_model,
    predict, predict_labels, rbf_gram, rbf_kernel, save_model, scg_minimize, smo_solve,
    train_mdm, train_vector,
)
from graspdecode.data import Label
from graspdecode.riemann import logeuclid_distance

from conftest import random_spd

VECTOR = [k for k in KINDS if k != "MDM"]
XOR = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([0, 0, 1, 1])


def kkt_residual(K, y, alpha, rho, C):
    f = K @ (alpha * y) - rho
    m = y * f
    worst = 0.0
    for a, v in zip(alpha, m):
        if a <= 0:
            worst = max(worst, 1 - v)
        elif a >= C:
            worst = max(worst, v - 1)
        else:
            worst = max(worst, abs(v - 1))
    return worst


def _clouds(rng, n=20, gap=10.0, dim=3):
    a = rng.standard_normal((n, dim)) + gap / 2
    b = rng.standard_normal((n, dim)) - gap / 2
    return np.vstack([a, b]).T, np.r_[np.zeros(n, int), np.ones(n, int)]


@pytest.mark.parametrize("kind", VECTOR)
def test_separable_clouds(rng, kind):
    X, y = _clouds(rng)
    m = train_vector(ModelSpec(kind), X, y)
    assert np.all(predict_labels(m, X) == y)


def test_xor():
    rbf = train_vector(ModelSpec("SVM-RBF", C=10.0, gamma=1.0), XOR.T, XOR_Y)
    assert np.all(predict_labels(rbf, XOR.T) == XOR_Y)
    lin = train_vector(ModelSpec("SVM-linear"), XOR.T, XOR_Y)
    assert np.mean(predict_labels(lin, XOR.T) == XOR_Y) <= 0.75


def test_single_class_rejected(rng):
    with pytest.raises(ClassifierError):
        train_vector(ModelSpec("LDA"), rng.standard_normal((2, 6)), np.zeros(6, int))
    with pytest.raises(ClassifierError):
        train_mdm(np.stack([np.eye(2)] * 3), [1, 1, 1])


def test_non_finite_features_rejected():
    X = np.array([[0.0, 1.0, np.nan, 2.0]])
    with pytest.raises(ClassifierError):
        train_vector(ModelSpec("LDA"), X, [0, 0, 1, 1])


def test_unknown_kind():
    with pytest.raises(ClassifierError):
        ModelSpec("kNN")


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
def test_smo_kkt(rng, kernel):
    for trial in range(10):
        gap = 4.0 if trial % 2 else 0.5
        X, y = _clouds(rng, n=25, gap=gap, dim=2)
        S = X.T
        t = np.where(y == 0, 1.0, -1.0)
        K = S @ S.T if kernel == "linear" else rbf_gram(S, S, 0.5)
        alpha, rho, _ = smo_solve(K, t, 1.0)
        assert np.all((alpha >= 0) & (alpha <= 1.0))
        assert abs(alpha @ t) < 1e-10
        assert kkt_residual(K, t, alpha, rho, 1.0) <= 1e-3


def test_smo_iteration_cap(rng):
    X, y = _clouds(rng, n=30, gap=0.2)
    t = np.where(y == 0, 1.0, -1.0)
    with pytest.raises(SmoConvergenceError):
        smo_solve(X.T @ X, t, 1.0, max_iter=2)


def test_svm_hyperplane_point(rng):
    X, y = _clouds(rng, dim=2)
    m = train_vector(ModelSpec("SVM-linear"), X, y)
    w, rho = m.params["w"], float(m.params["rho"])
    on_plane = w * rho / (w @ w)
    assert abs(decision_scores(m, on_plane[:, None])[0]) < 1e-9


def test_lda_midpoint_boundary(rng):
    d = rng.standard_normal((30, 2))
    m = np.array([2.0, -1.0])
    X = np.vstack([m + d, -m - d]).T
    y = np.r_[np.zeros(30, int), np.ones(30, int)]
    model = train_vector(ModelSpec("LDA"), X, y)
    assert abs(decision_scores(model, np.zeros((2, 1)))[0]) < 1e-9
    assert decision_scores(model, m[:, None])[0] > 0


def test_lda_affine_invariance(rng):
    X, y = _clouds(rng, gap=1.5)
    A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    b = rng.standard_normal((3, 1))
    test = rng.standard_normal((3, 50))
    p1 = predict_labels(train_vector(ModelSpec("LDA"), X, y), test)
    p2 = predict_labels(train_vector(ModelSpec("LDA"), A @ X + b, y), A @ test + b)
    np.testing.assert_array_equal(p1, p2)


def test_rbf_kernel():
    a = np.array([1.0, 2.0])
    assert rbf_kernel(a, a, 0.3) == 1.0
    b = a + np.array([1.0, 0.0]) / np.sqrt(0.3)
    assert rbf_kernel(a, b, 0.3) == pytest.approx(np.exp(-1))
    with pytest.raises(ClassifierError):
        rbf_kernel(a, np.zeros(3), 1.0)


def test_gram_psd(rng):
    P = rng.standard_normal((40, 5))
    K = rbf_gram(P, P, 0.7)
    np.testing.assert_allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-10


def test_mlp_gradient(rng):
    X = rng.standard_normal((30, 4))
    t = (rng.random(30) > 0.5).astype(float)
    net = MLP(4, 15)
    for _ in range(10):
        theta = net.init_params(rng)
        _, g = net.loss_grad(theta, X, t)
        num = np.empty_like(theta)
        h = 1e-6
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            num[i] = (net.loss_grad(theta + e, X, t)[0] - net.loss_grad(theta - e, X, t)[0]) / (2 * h)
        assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-5


def test_scg_quadratic(rng):
    A = random_spd(rng, 6)
    b = rng.standard_normal(6)
    x, hist = scg_minimize(lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b), np.zeros(6), max_iter=200)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-6)
    assert all(h2 <= h1 + 1e-12 for h1, h2 in zip(hist, hist[1:]))


def test_mlp_xor():
    X = np.vstack([XOR + 0.05 * k for k in range(5)]).T
    y = np.tile(XOR_Y, 5)
    m = train_vector(ModelSpec("MLP", max_epochs=300), X, y)
    assert np.all(predict_labels(m, X) == y)


def test_training_deterministic(rng):
    X, y = _clouds(rng, gap=1.0)
    for kind in ("MLP", "SVM-RBF"):
        a = train_vector(ModelSpec(kind, seed=3), X, y)
        b = train_vector(ModelSpec(kind, seed=3), X, y)
        np.testing.assert_array_equal(decision_scores(a, X), decision_scores(b, X))


def _spd_clusters(rng, n=10):
    base_a, base_b = np.diag([4.0, 1.0, 1.0]), np.diag([1.0, 1.0, 4.0])
    def jitter(m):
        g = np.eye(3) + 0.05 * rng.standard_normal((3, 3))
        return g @ m @ g.T
    covs = np.stack([jitter(base_a) for _ in range(n)] + [jitter(base_b) for _ in range(n)])
    return covs, np.r_[np.zeros(n, int), np.ones(n, int)]


def test_mdm(rng):
    covs, y = _spd_clusters(rng)
    m = train_mdm(covs, y)
    assert np.all(predict_labels(m, covs) == y)
    label, score = predict(m, m.params["mean_a"])
    assert label == Label.TG and score > 0
    x = covs[3]
    expected = logeuclid_distance(x, m.params["mean_b"]) - logeuclid_distance(x, m.params["mean_a"])
    assert decision_scores(m, x)[0] == pytest.approx(expected, abs=1e-12)


def test_mdm_tie_goes_to_first_class():
    covs = np.stack([np.diag([2.0, 1.0])] * 3 + [np.diag([1.0, 2.0])] * 3)
    m = train_mdm(covs, [1, 1, 1, 2, 2, 2])
    label, score = predict(m, np.eye(2))
    assert score == 0.0 and label == Label.PG


def test_mdm_label_swap(rng):
    covs, y = _spd_clusters(rng)
    test = np.stack([random_spd(rng, 3) for _ in range(20)])
    p1 = predict_labels(train_mdm(covs, y), test)
    p2 = predict_labels(train_mdm(covs, 1 - y), test)
    np.testing.assert_array_equal(p1, 1 - p2)


def test_dimension_mismatch(rng):
    X, y = _clouds(rng)
    m = train_vector(ModelSpec("LDA"), X, y)
    with pytest.raises(ClassifierError):
        decision_scores(m, np.zeros((4, 2)))


@pytest.mark.parametrize("kind", KINDS)
def test_save_load(tmp_path, rng, kind):
    if kind == "MDM":
        X, y = _spd_clusters(rng)
        m = train_mdm(X, y)
    else:
        X, y = _clouds(rng)
        m = train_vector(ModelSpec(kind), X, y)
    save_model(m, tmp_path / "m")
    back = load_model(tmp_path / "m")
    np.testing.assert_array_equal(decision_scores(back, X), decision_scores(m, X))
