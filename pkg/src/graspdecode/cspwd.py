"""Shrinkage class covariances, two-class CSP and wavelet log-variance features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EpochSet, Label
from .wavelet import WaveletSpec, dwt

__all__ = [
    "CovEstimate", "CspModel", "FeatureMatrix", "class_covariance", "ledoit_wolf_lambda",
    "shrink", "shrunk_class_covariance", "csp_fit", "csp_apply", "feature_matrix",
    "default_n_filters", "log_variance_features", "CspError",
]

SYMMETRY_TOL = 1e-12
LOG_VAR_FLOOR = 1e-300


class CspError(ValueError):
    pass


@dataclass(frozen=True)
class CovEstimate:
    matrix: np.ndarray
    lam: float
    n_trials: int


@dataclass(frozen=True)
class CspModel:
    """Spatial filters (columns of ``filters``) for one class pair.

    ``eigenvalues[i]`` is the fraction of pooled variance that filter ``i``
    assigns to ``pair[0]``; filters are in descending eigenvalue order.
    """

    pair: tuple
    filters: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n_filters(self) -> int:
        return self.filters.shape[1]


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # (F, n_trials)
    labels: np.ndarray


def class_covariance(epochs: EpochSet, label) -> np.ndarray:
    """Mean over the class's trials of ``X X^T`` (no centering, no 1/S)."""
    trials = epochs.data[epochs.labels == int(label)]
    if trials.shape[0] == 0:
        raise CspError(f"no trials of class {Label(int(label)).display}")
    return _mean_outer(trials)


def _mean_outer(trials) -> np.ndarray:
    cov = np.einsum("nes,nfs->ef", trials, trials) / trials.shape[0]
    return 0.5 * (cov + cov.T)


def ledoit_wolf_lambda(trials) -> float:
    """Ledoit-Wolf optimal shrinkage intensity toward the scaled identity.

    Every time sample of every trial is one (uncentered) observation vector.

    Parameters
    ----------
    trials : sequence of (E, S) arrays, or a single (E, S) array
    """
    if isinstance(trials, np.ndarray) and trials.ndim == 2:
        obs = trials.T
    else:
        obs = np.concatenate([np.asarray(t, dtype=np.float64).T for t in trials], axis=0)
    n, p = obs.shape
    if n < 2:
        raise CspError(f"need at least 2 observations for shrinkage, got {n}")
    sample = obs.T @ obs / n
    mu = np.trace(sample) / p
    target_dist = np.sum((sample - mu * np.eye(p)) ** 2) / p
    if target_dist <= 0:
        return 0.0
    # sum_k ||x_k x_k^T - S||_F^2 = sum_k ||x_k||^4 - n ||S||_F^2
    sq_norms = np.einsum("ij,ij->i", obs, obs)
    spread = (np.sum(sq_norms ** 2) - n * np.sum(sample ** 2)) / (n * n * p)
    spread = max(spread, 0.0)
    return float(min(spread, target_dist) / target_dist)


def shrink(cov, lam: float, n_trials: int = 0) -> CovEstimate:
    """``(1 - lam) C + lam * (trace(C)/E) I``."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise CspError(f"covariance must be square, got {cov.shape}")
    scale = max(np.abs(cov).max(), 1.0)
    if np.abs(cov - cov.T).max() > SYMMETRY_TOL * scale:
        raise CspError("covariance matrix is not symmetric")
    if not 0.0 <= lam <= 1.0:
        raise CspError(f"shrinkage intensity must be in [0, 1], got {lam}")
    nu = np.trace(cov) / cov.shape[0]
    out = (1.0 - lam) * cov + lam * nu * np.eye(cov.shape[0])
    return CovEstimate(0.5 * (out + out.T), float(lam), n_trials)


def shrunk_class_covariance(epochs: EpochSet, label) -> CovEstimate:
    trials = epochs.data[epochs.labels == int(label)]
    cov = class_covariance(epochs, label)
    return shrink(cov, ledoit_wolf_lambda(list(trials)), trials.shape[0])


def default_n_filters(n_channels: int) -> int:
    """12 filters above 16 channels; otherwise all channels."""
    return 12 if n_channels > 16 else n_channels


def _eigh_spd(mat, what):
    vals, vecs = np.linalg.eigh(mat)
    if vals[0] <= 0:
        raise CspError(f"{what} is not positive definite (min eigenvalue {vals[0]:.3g})")
    return vals, vecs


def csp_fit(cov_a, cov_b, n_filters: int | None = None, pair=(0, 1)) -> CspModel:
    """Solve ``Ca w = mu (Ca + Cb) w`` and keep the extreme filters.

    Parameters
    ----------
    cov_a, cov_b : CovEstimate or (E, E) array
        SPD covariance of the first and second class.
    n_filters : int, optional
        Number of filters F. Must be even unless it equals E (all filters kept).
        Defaults to :func:`default_n_filters`.

    Returns
    -------
    CspModel
        Filters normalized so that ``w^T (Ca + Cb) w = 1``; the first F/2 have
        the largest eigenvalues, the last F/2 the smallest.
    """
    ca = getattr(cov_a, "matrix", cov_a)
    cb = getattr(cov_b, "matrix", cov_b)
    ca = np.asarray(ca, dtype=np.float64)
    cb = np.asarray(cb, dtype=np.float64)
    if ca.shape != cb.shape or ca.ndim != 2 or ca.shape[0] != ca.shape[1]:
        raise CspError(f"covariance shapes differ or are not square: {ca.shape} vs {cb.shape}")
    n_ch = ca.shape[0]
    if n_filters is None:
        n_filters = default_n_filters(n_ch)
    if n_filters > n_ch:
        raise CspError(f"{n_filters} filters requested for {n_ch} channels")
    if n_filters < 1 or (n_filters % 2 and n_filters != n_ch):
        raise CspError(f"filter count must be even (or equal to the channel count), got {n_filters}")
    _eigh_spd(ca, "first class covariance")
    _eigh_spd(cb, "second class covariance")
    composite = ca + cb
    d, u = _eigh_spd(composite, "composite covariance")
    whiten = u / np.sqrt(d)  # columns: u_i / sqrt(d_i), so whiten^T C whiten = I
    rotated = whiten.T @ ca @ whiten
    mu, v = np.linalg.eigh(0.5 * (rotated + rotated.T))
    order = np.argsort(mu, kind="stable")[::-1]
    mu, v = mu[order], v[:, order]
    filters = whiten @ v
    if n_filters < n_ch:
        half = n_filters // 2
        keep = np.r_[np.arange(half), np.arange(n_ch - half, n_ch)]
        filters, mu = filters[:, keep], mu[keep]
    # deterministic sign: largest-magnitude entry of each filter positive
    signs = np.sign(filters[np.abs(filters).argmax(axis=0), np.arange(filters.shape[1])])
    filters = filters * np.where(signs == 0, 1.0, signs)
    return CspModel(tuple(pair), filters, np.clip(mu, 0.0, 1.0))


def csp_apply(model: CspModel, trial) -> np.ndarray:
    """Project ``trial`` (E x S, or n x E x S) onto the spatial filters."""
    x = np.asarray(trial, dtype=np.float64)
    if x.shape[-2] != model.filters.shape[0]:
        raise CspError(f"trial has {x.shape[-2]} channels, model expects {model.filters.shape[0]}")
    return np.einsum("ef,...es->...fs", model.filters, x)


def log_variance_features(projected, spec: WaveletSpec, band: str = "approx") -> np.ndarray:
    """Log-variance of the deepest wavelet band(s) of each projected signal.

    ``band="approx"`` uses the deepest approximation; ``band="approx+detail"``
    concatenates the deepest approximation and deepest detail coefficients.
    Returns an array of shape ``projected.shape[:-1]``.
    """
    coeffs = dwt(projected, spec)
    if band == "approx":
        c = coeffs.approx
    elif band == "approx+detail":
        c = np.concatenate([coeffs.approx, coeffs.details[0]], axis=-1)
    else:
        raise ValueError(f"unknown wavelet band choice {band!r}")
    var = np.var(c, axis=-1)
    return np.log(np.maximum(var, LOG_VAR_FLOOR))


def feature_matrix(epochs: EpochSet, model: CspModel, spec: WaveletSpec,
                   band: str = "approx") -> FeatureMatrix:
    """F x n_trials log-variance features for a set holding the model's classes."""
    present = set(np.unique(epochs.labels).tolist())
    if not present <= set(int(p) for p in model.pair):
        raise CspError(f"set contains classes {sorted(present)} outside the model pair {model.pair}")
    projected = csp_apply(model, epochs.data)
    feats = log_variance_features(projected, spec, band)
    return FeatureMatrix(feats.T.copy(), epochs.labels.copy())
