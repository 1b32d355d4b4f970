"""Binary classifiers behind one train/predict contract.

Scores are signed: positive means the first class of the trained pair (the
lower Label ordinal). They are not calibrated probabilities.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Label
from .riemann import logeuclid_mean, matrix_log

__all__ = [
    "KINDS", "VECTOR_KINDS", "ModelSpec", "TrainedModel", "ClassifierError", "SmoConvergenceError",
    "rbf_kernel", "rbf_gram", "smo_solve", "train_vector", "train_mdm", "predict",
    "decision_scores", "predict_labels", "MLP", "scg_minimize", "save_model", "load_model",
]

KINDS = ("LDA", "SVM-linear", "SVM-RBF", "MLP", "MDM", "TS-SVM")
VECTOR_KINDS = ("LDA", "SVM-linear", "SVM-RBF", "MLP", "TS-SVM")
TAU = 1e-12


class ClassifierError(ValueError):
    pass


class SmoConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    C: float = 1.0
    gamma: float | None = None  # None: 1 / (F * mean feature variance)
    hidden: int = 15
    max_epochs: int = 150
    tol: float = 1e-3
    max_iter: int = 10 ** 6
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ClassifierError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if not self.C > 0:
            raise ClassifierError("C must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise ClassifierError("gamma must be positive")
        if self.hidden < 1:
            raise ClassifierError("hidden layer needs at least one unit")


@dataclass
class TrainedModel:
    """A fitted classifier. ``params`` holds every array needed to predict."""

    kind: str
    pair: tuple
    dim: int
    params: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)


# ---------------------------------------------------------------- kernels


def rbf_kernel(a, b, gamma: float) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ClassifierError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not gamma > 0:
        raise ClassifierError("gamma must be positive")
    return float(np.exp(-gamma * np.sum((a - b) ** 2)))


def rbf_gram(A, B, gamma: float) -> np.ndarray:
    """Kernel matrix between the rows of A and the rows of B."""
    sq = (np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :] - 2.0 * A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


# ---------------------------------------------------------------- SMO


def smo_solve(K, y, C: float, tol: float = 1e-3, max_iter: int = 10 ** 6):
    """Soft-margin SVM dual by sequential minimal optimization.

    Working pairs are chosen with second-order information; iteration stops
    when the maximal KKT violation ``m(a) - M(a)`` drops below ``tol``.

    Parameters
    ----------
    K : (n, n) array
        Kernel matrix.
    y : (n,) array of +1/-1
    C : float
        Box constraint.

    Returns
    -------
    alpha : (n,) array
    rho : float
        Decision function is ``sum_i alpha_i y_i K(x_i, x) - rho``.
    n_iter : int
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)
    pos = y > 0
    for it in range(max_iter):
        upper = alpha >= C
        lower = alpha <= 0
        # I_up: y=+1 and not upper bound, or y=-1 and not lower bound; value -y*G
        in_up = np.where(pos, ~upper, ~lower)
        in_low = np.where(pos, ~lower, ~upper)
        yg = -y * grad
        if not in_up.any() or not in_low.any():
            break
        cand = np.where(in_up, yg, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        low_vals = np.where(in_low, yg, np.inf)
        gmin = low_vals.min()
        if gmax - gmin < tol:
            break
        grad_diff = gmax - yg  # > 0 for violating candidates j
        quad = QD[i] + QD - 2.0 * y[i] * y * Q[i]
        quad = np.where(quad > 0, quad, TAU)
        ok = in_low & (grad_diff > 0)
        obj = np.where(ok, -(grad_diff ** 2) / quad, np.inf)
        j = int(np.argmin(obj))
        if not np.isfinite(obj[j]):
            break
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            qc = QD[i] + QD[j] + 2.0 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (-grad[i] - grad[j]) / qc
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            qc = QD[i] + QD[j] - 2.0 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (grad[i] - grad[j]) / qc
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        grad += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj
    else:
        raise SmoConvergenceError(f"SMO did not reach tolerance {tol} within {max_iter} pair updates")
    rho = _smo_rho(alpha, grad, y, C)
    return alpha, rho, it


def _smo_rho(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= C
    at_lower = alpha <= 0
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float(0.5 * (ub + lb))


# ---------------------------------------------------------------- MLP / SCG


class MLP:
    """One tanh hidden layer, logistic output, mean cross-entropy loss.

    Parameters are packed in one vector: ``W1 (h x d), b1 (h), w2 (h), b2``.
    """

    def __init__(self, n_in: int, n_hidden: int):
        self.n_in = n_in
        self.n_hidden = n_hidden

    @property
    def n_params(self) -> int:
        return self.n_hidden * (self.n_in + 2) + 1

    def unpack(self, theta):
        h, d = self.n_hidden, self.n_in
        W1 = theta[:h * d].reshape(h, d)
        b1 = theta[h * d:h * d + h]
        w2 = theta[h * d + h:h * d + 2 * h]
        b2 = theta[-1]
        return W1, b1, w2, b2

    def init_params(self, rng) -> np.ndarray:
        h, d = self.n_hidden, self.n_in
        W1 = rng.uniform(-1, 1, (h, d)) / np.sqrt(d)
        b1 = rng.uniform(-1, 1, h) / np.sqrt(d)
        w2 = rng.uniform(-1, 1, h) / np.sqrt(h)
        b2 = rng.uniform(-1, 1) / np.sqrt(h)
        return np.concatenate([W1.ravel(), b1, w2, [b2]])

    def logits(self, theta, X):
        W1, b1, w2, b2 = self.unpack(theta)
        return np.tanh(X @ W1.T + b1) @ w2 + b2

    def loss_grad(self, theta, X, t):
        W1, b1, w2, b2 = self.unpack(theta)
        Z = np.tanh(X @ W1.T + b1)
        a = Z @ w2 + b2
        # cross-entropy with logits, numerically stable
        loss = np.mean(np.logaddexp(0.0, a) - t * a)
        n = X.shape[0]
        d_out = (_sigmoid(a) - t) / n
        g_w2 = Z.T @ d_out
        g_b2 = d_out.sum()
        d_hid = np.outer(d_out, w2) * (1.0 - Z ** 2)
        g_W1 = d_hid.T @ X
        g_b1 = d_hid.sum(axis=0)
        return loss, np.concatenate([g_W1.ravel(), g_b1, g_w2, [g_b2]])


def _sigmoid(a):
    return np.where(a >= 0, 1.0 / (1.0 + np.exp(-np.abs(a))), np.exp(-np.abs(a)) / (1.0 + np.exp(-np.abs(a))))


def scg_minimize(fun, x0, max_iter: int = 150, tol_x: float = 1e-10, tol_f: float = 1e-12):
    """Scaled conjugate gradient (Moller, 1993).

    ``fun(x)`` returns ``(f, grad)``. Curvature along the search direction is
    estimated by a finite difference of gradients; a Levenberg-Marquardt
    style scale ``beta`` keeps the step well defined without a line search.

    Returns the final parameters and the list of accepted objective values.
    """
    sigma0 = 1e-4
    beta, beta_min, beta_max = 1.0, 1e-15, 1e100
    x = np.array(x0, dtype=np.float64)
    n_par = x.size
    f_old, g_new = fun(x)
    g_old = g_new
    d = -g_new
    success, n_success = True, 0
    history = [f_old]
    mu = kappa = gamma = 0.0
    for _ in range(max_iter):
        if success:
            mu = d @ g_new
            if mu >= 0:
                d = -g_new
                mu = d @ g_new
            kappa = d @ d
            if kappa < np.finfo(float).eps:
                break
            sigma = sigma0 / np.sqrt(kappa)
            _, g_plus = fun(x + sigma * d)
            gamma = d @ (g_plus - g_new) / sigma
        delta = gamma + beta * kappa
        if delta <= 0:
            delta = beta * kappa
            beta = beta - gamma / kappa
        step = -mu / delta
        x_new = x + step * d
        f_new, _ = fun(x_new)
        comparison = 2.0 * (f_new - f_old) / (step * mu)
        if comparison >= 0:
            success = True
            n_success += 1
            x = x_new
        else:
            success = False
        if success:
            if np.max(np.abs(step * d)) < tol_x and abs(f_new - f_old) < tol_f:
                history.append(f_new)
                break
            f_old = f_new
            history.append(f_new)
            g_old = g_new
            _, g_new = fun(x)
            if g_new @ g_new == 0:
                break
        if comparison < 0.25:
            beta = min(4.0 * beta, beta_max)
        if comparison > 0.75:
            beta = max(0.5 * beta, beta_min)
        if n_success == n_par:
            d = -g_new
            n_success = 0
        elif success:
            g_coef = (g_old - g_new) @ g_new / mu
            d = g_coef * d - g_new
    return x, history


# ---------------------------------------------------------------- training


def _binary_targets(y):
    y = np.asarray(y).astype(np.int64).reshape(-1)
    classes = np.unique(y)
    if classes.size != 2:
        raise ClassifierError(f"need exactly two classes, got {classes.tolist()}")
    pair = (int(classes[0]), int(classes[1]))
    return pair, np.where(y == pair[0], 1.0, -1.0)


def _as_samples(X, n_labels):
    """Features arrive as F x n; return n x F rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_labels:
        raise ClassifierError(f"features must be F x n with n={n_labels}, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("features contain non-finite values")
    return X.T


def train_vector(spec: ModelSpec, X, y) -> TrainedModel:
    """Fit LDA, an SVM, the MLP or TS-SVM on F x n features ``X`` with labels ``y``."""
    if spec.kind not in VECTOR_KINDS:
        raise ClassifierError(f"{spec.kind} is not a feature-vector classifier")
    pair, t = _binary_targets(y)
    S = _as_samples(X, t.size)
    dim = S.shape[1]
    hyper = asdict(spec)
    if spec.kind == "LDA":
        params = _fit_lda(S, t)
    elif spec.kind == "MLP":
        params = _fit_mlp(S, t, spec)
    else:
        kernel = "linear" if spec.kind == "SVM-linear" else "rbf"
        gamma = spec.gamma
        if kernel == "rbf" and gamma is None:
            mean_var = S.var(axis=0).mean()
            gamma = 1.0 / (dim * mean_var) if mean_var > 0 else 1.0
        K = S @ S.T if kernel == "linear" else rbf_gram(S, S, gamma)
        alpha, rho, n_iter = smo_solve(K, t, spec.C, spec.tol, spec.max_iter)
        sv = alpha > 0
        params = {"support": S[sv], "coef": alpha[sv] * t[sv], "rho": np.array(rho),
                  "gamma": np.array(gamma if gamma is not None else 0.0)}
        if kernel == "linear":
            params["w"] = params["coef"] @ params["support"]
        hyper["gamma"] = gamma
        hyper["n_iter"] = int(n_iter)
    return TrainedModel(spec.kind, pair, dim, params, hyper)


def _fit_lda(S, t):
    a, b = S[t > 0], S[t < 0]
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    scatter = (a - ma).T @ (a - ma) + (b - mb).T @ (b - mb)
    dof = max(S.shape[0] - 2, 1)
    pooled = scatter / dof
    ridge = 1e-6 * max(np.trace(pooled) / pooled.shape[0], np.finfo(float).tiny)
    w = np.linalg.solve(pooled + ridge * np.eye(pooled.shape[0]), ma - mb)
    bias = -w @ (ma + mb) / 2.0 + np.log(a.shape[0] / b.shape[0])
    return {"w": w, "b": np.array(bias), "mean_a": ma, "mean_b": mb}


def _fit_mlp(S, t, spec):
    center = S.mean(axis=0)
    scale = S.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    Z = (S - center) / scale
    net = MLP(Z.shape[1], spec.hidden)
    rng = np.random.default_rng(spec.seed)
    theta0 = net.init_params(rng)
    target = (t > 0).astype(np.float64)
    theta, _ = scg_minimize(lambda th: net.loss_grad(th, Z, target), theta0, spec.max_epochs)
    return {"theta": theta, "center": center, "scale": scale, "hidden": np.array(spec.hidden)}


def train_mdm(covs, y) -> TrainedModel:
    """Minimum distance to the log-Euclidean class means."""
    pair, t = _binary_targets(y)
    covs = np.asarray(covs, dtype=np.float64)
    if covs.ndim != 3 or covs.shape[0] != t.size:
        raise ClassifierError(f"expected {t.size} covariance matrices, got array of shape {covs.shape}")
    mean_a = logeuclid_mean(covs[t > 0])
    mean_b = logeuclid_mean(covs[t < 0])
    params = {"mean_a": mean_a, "mean_b": mean_b,
              "log_a": matrix_log(mean_a), "log_b": matrix_log(mean_b)}
    return TrainedModel("MDM", pair, covs.shape[1], params, {"kind": "MDM"})


# ---------------------------------------------------------------- inference


def decision_scores(model: TrainedModel, X) -> np.ndarray:
    """Signed scores for a batch: F x n features, or an (n, E, E) stack for MDM."""
    p = model.params
    if model.kind == "MDM":
        covs = np.asarray(X, dtype=np.float64)
        if covs.ndim == 2:
            covs = covs[None]
        if covs.shape[1:] != (model.dim, model.dim):
            raise ClassifierError(f"expected {model.dim}x{model.dim} matrices, got {covs.shape[1:]}")
        logs = matrix_log(covs)
        da = np.linalg.norm(logs - p["log_a"], axis=(1, 2))
        db = np.linalg.norm(logs - p["log_b"], axis=(1, 2))
        return db - da
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != model.dim:
        raise ClassifierError(f"model expects {model.dim} features, got {X.shape[0]}")
    S = X.T
    if model.kind == "LDA":
        return S @ p["w"] + float(p["b"])
    if model.kind == "MLP":
        net = MLP(model.dim, int(p["hidden"]))
        return net.logits(p["theta"], (S - p["center"]) / p["scale"])
    if model.kind == "SVM-linear":
        return S @ p["w"] - float(p["rho"])
    K = rbf_gram(S, p["support"], float(p["gamma"]))
    return K @ p["coef"] - float(p["rho"])


def predict_labels(model: TrainedModel, X) -> np.ndarray:
    """Labels for a batch; a zero score goes to the first class of the pair."""
    scores = decision_scores(model, X)
    return np.where(scores >= 0, model.pair[0], model.pair[1])


def predict(model: TrainedModel, x):
    """Label and signed score for a single feature vector or covariance matrix."""
    score = float(decision_scores(model, x)[0])
    label = model.pair[0] if score >= 0 else model.pair[1]
    return Label(label), score


# ---------------------------------------------------------------- serialization


def save_model(model: TrainedModel, path) -> None:
    """JSON header line followed by an ``.npz`` parameter payload."""
    header = {"kind": model.kind, "pair": list(model.pair), "dim": model.dim,
              "hyper": model.hyper, "params": sorted(model.params)}
    buf = io.BytesIO()
    np.savez(buf, **{k: np.asarray(v) for k, v in model.params.items()})
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(buf.getvalue())


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = np.load(io.BytesIO(fh.read()))
        params = {k: payload[k] for k in header["params"]}
    return TrainedModel(header["kind"], tuple(header["pair"]), int(header["dim"]), params, header["hyper"])
