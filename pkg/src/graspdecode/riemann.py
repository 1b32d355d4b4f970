"""SPD covariances, log-Euclidean means and weighted tangent-space vectors."""
from __future__ import annotations

import numpy as np

from .cspwd import ledoit_wolf_lambda, shrink

__all__ = [
    "SpdError", "check_spd", "trial_covariance", "trial_covariances", "matrix_log", "matrix_exp",
    "logeuclid_mean", "logeuclid_distance", "inv_sqrtm", "tangent_project", "uvec_weighted",
    "unvec_weighted", "tangent_vectors",
]

SYMMETRY_TOL = 1e-10
EIG_FLOOR = 1e-12


class SpdError(ValueError):
    pass


def _sym_check(a, what="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise SpdError(f"{what} must be square, got shape {a.shape}")
    scale = max(float(np.abs(a).max()) if a.size else 0.0, 1.0)
    if np.abs(a - np.swapaxes(a, -1, -2)).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise SpdError(f"{what} is not symmetric")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_spd(a) -> np.ndarray:
    a = _sym_check(a, "SPD matrix")
    if np.any(np.linalg.eigvalsh(a) <= 0):
        raise SpdError("matrix is not positive definite")
    return a


def trial_covariance(trial, lam: float | None = None) -> np.ndarray:
    """Shrunk ``X X^T / S`` of one E x S trial.

    ``lam=None`` estimates the Ledoit-Wolf intensity from the trial's samples.
    """
    x = np.asarray(trial, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise SpdError(f"trial must be E x S with S >= 2, got {x.shape}")
    cov = x @ x.T / x.shape[1]
    cov = 0.5 * (cov + cov.T)
    if lam is None:
        lam = ledoit_wolf_lambda(x)
    return shrink(cov, lam).matrix


def trial_covariances(trials, lam: float | None = None) -> np.ndarray:
    return np.stack([trial_covariance(t, lam) for t in trials])


def _eig_apply(a, fn):
    vals, vecs = np.linalg.eigh(a)
    out = (vecs * fn(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def matrix_log(a) -> np.ndarray:
    """Principal logarithm of SPD matrix (or stack of matrices)."""
    a = _sym_check(a, "matrix_log argument")
    vals, vecs = np.linalg.eigh(a)
    if np.any(vals <= 0):
        raise SpdError(f"matrix_log needs positive eigenvalues, min is {vals.min():.3g}")
    out = (vecs * np.log(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def matrix_exp(b) -> np.ndarray:
    b = _sym_check(b, "matrix_exp argument")
    return _eig_apply(b, np.exp)


def inv_sqrtm(a) -> np.ndarray:
    """``A^{-1/2}``; eigenvalues below 1e-12 are rejected."""
    a = _sym_check(a, "base point")
    vals, vecs = np.linalg.eigh(a)
    if np.any(vals < EIG_FLOOR):
        raise SpdError(f"base point is (near-)singular, min eigenvalue {vals.min():.3g}")
    out = (vecs / np.sqrt(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def logeuclid_mean(mats) -> np.ndarray:
    """``exp(mean_i log A_i)``."""
    if len(mats) == 0:
        raise SpdError("log-Euclidean mean of an empty list")
    shapes = {np.shape(m) for m in mats}
    if len(shapes) != 1:
        raise SpdError(f"matrices have different shapes: {sorted(shapes)}")
    logs = matrix_log(np.stack([np.asarray(m, dtype=np.float64) for m in mats]))
    return matrix_exp(logs.mean(axis=0))


def logeuclid_distance(a, b) -> float:
    """``||log A - log B||_F``."""
    return float(np.linalg.norm(matrix_log(a) - matrix_log(b)))


def tangent_project(cov, base) -> np.ndarray:
    """``log(M^{-1/2} C M^{-1/2})``; ``cov`` may be a stack of matrices."""
    c = check_spd(cov)
    isq = inv_sqrtm(check_spd(base))
    return matrix_log(isq @ c @ isq)


_SQRT2 = np.sqrt(2.0)


def uvec_weighted(s) -> np.ndarray:
    """Upper triangle (row-major, with diagonal) of ``S * Q``, Q = 1 on, sqrt(2) off the diagonal.

    Accepts one matrix or a stack; the Euclidean norm of the result equals
    the Frobenius norm of ``S``.
    """
    s = _sym_check(s, "tangent matrix")
    n = s.shape[-1]
    rows, cols = np.triu_indices(n)
    weights = np.where(rows == cols, 1.0, _SQRT2)
    return s[..., rows, cols] * weights


def unvec_weighted(z, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    rows, cols = np.triu_indices(n)
    weights = np.where(rows == cols, 1.0, _SQRT2)
    out = np.zeros(z.shape[:-1] + (n, n))
    out[..., rows, cols] = z / weights
    out[..., cols, rows] = z / weights
    return out


def tangent_vectors(covs, base) -> np.ndarray:
    """Weighted tangent vectors of a stack of covariances, shape (n, E(E+1)/2)."""
    return uvec_weighted(tangent_project(covs, base))
