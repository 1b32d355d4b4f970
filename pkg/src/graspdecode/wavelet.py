"""Periodized orthogonal discrete wavelet transform.

Each level applies an orthogonal (periodized) two-channel filter bank to the
even-length part of the current approximation. When that approximation has
odd length its last sample is set aside as a one-sample *tail* band, so the
transform is orthogonal for every signal length: reconstruction is exact and
energy is preserved.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["WaveletSpec", "WaveletCoeffs", "dwt", "idwt", "scaling_filter", "WAVELETS"]

# Daubechies scaling filters from minimum-phase spectral factorization (50-digit
# arithmetic, rounded); commonly tabulated values are only good to ~1e-12.
WAVELETS = {
    "haar": (0.70710678118654752440, 0.70710678118654752440),
    "db2": (0.48296291314453414337, 0.83651630373780790558, 0.22414386804201338103,
            -0.12940952255126038117),
    "db4": (0.23037781330889650086, 0.71484657055291564709, 0.63088076792985890788,
            -0.027983769416859854211, -0.18703481171909308408, 0.030841381835560763627,
            0.032883011666885199735, -0.010597401785069032105),
}
WAVELETS["db1"] = WAVELETS["haar"]


def scaling_filter(family: str) -> np.ndarray:
    try:
        return np.array(WAVELETS[family], dtype=np.float64)
    except KeyError:
        raise ValueError(f"unknown wavelet family {family!r}; available: {sorted(WAVELETS)}") from None


@dataclass(frozen=True)
class WaveletSpec:
    family: str = "db4"
    level: int = 3

    def __post_init__(self):
        scaling_filter(self.family)
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")


@dataclass(frozen=True)
class WaveletCoeffs:
    """Coefficient bands of a multilevel decomposition.

    ``details[0]`` is the deepest (coarsest) detail band, ``details[-1]`` the
    finest, matching the conventional ``[cA_n, cD_n, ..., cD_1]`` ordering.
    ``tails`` follows the same ordering and holds the 0 or 1 samples set
    aside at each level.
    """

    approx: np.ndarray
    details: tuple
    tails: tuple
    length: int
    spec: WaveletSpec

    def bands(self) -> list:
        return [self.approx, *self.details]

    def all_coefficients(self) -> np.ndarray:
        return np.concatenate([self.approx, *self.details, *self.tails], axis=-1)

    def map(self, fn) -> "WaveletCoeffs":
        """Apply ``fn(band, name)`` to every band including tails."""
        return WaveletCoeffs(
            fn(self.approx, "approx"),
            tuple(fn(d, f"detail{i}") for i, d in enumerate(self.details)),
            tuple(fn(t, f"tail{i}") for i, t in enumerate(self.tails)),
            self.length, self.spec)


@lru_cache(maxsize=64)
def _analysis_matrix(family: str, n: int) -> np.ndarray:
    """Orthogonal N x N matrix: first N/2 rows low-pass, last N/2 high-pass."""
    h = scaling_filter(family)
    taps = h.size
    g = h[::-1] * (-1.0) ** np.arange(taps)
    half = n // 2
    mat = np.zeros((n, n))
    cols = (2 * np.arange(half)[:, None] + np.arange(taps)[None, :]) % n
    rows = np.repeat(np.arange(half), taps).reshape(half, taps)
    np.add.at(mat, (rows, cols), np.broadcast_to(h, (half, taps)))
    np.add.at(mat, (rows + half, cols), np.broadcast_to(g, (half, taps)))
    mat.setflags(write=False)
    return mat


def dwt(signal, spec: WaveletSpec = WaveletSpec()) -> WaveletCoeffs:
    """Multilevel decomposition along the last axis.

    Parameters
    ----------
    signal : array_like, shape (..., S)
        Signal(s) to decompose; S must be at least ``2 ** spec.level``.
    spec : WaveletSpec
        Wavelet family and decomposition depth.
    """
    x = np.asarray(signal, dtype=np.float64)
    length = x.shape[-1]
    if length < 2 ** spec.level:
        raise ValueError(f"signal of length {length} too short for level {spec.level} "
                         f"(needs >= {2 ** spec.level})")
    details, tails = [], []
    approx = x
    for _ in range(spec.level):
        n = approx.shape[-1]
        even = n - n % 2
        tails.append(approx[..., even:].copy())
        coeffs = approx[..., :even] @ _analysis_matrix(spec.family, even).T
        approx, detail = coeffs[..., :even // 2], coeffs[..., even // 2:]
        details.append(detail)
    return WaveletCoeffs(approx, tuple(details[::-1]), tuple(tails[::-1]), length, spec)


def idwt(coeffs: WaveletCoeffs) -> np.ndarray:
    """Inverse of :func:`dwt`."""
    approx = coeffs.approx
    for detail, tail in zip(coeffs.details, coeffs.tails):
        stacked = np.concatenate([approx, detail], axis=-1)
        mat = _analysis_matrix(coeffs.spec.family, stacked.shape[-1])
        approx = np.concatenate([stacked @ mat, tail], axis=-1)
    if approx.shape[-1] != coeffs.length:
        raise ValueError("inconsistent coefficient bands")
    return approx
