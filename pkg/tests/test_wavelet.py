import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graspdecode.wavelet import WAVELETS, WaveletSpec, dwt, idwt


@pytest.mark.parametrize("family", sorted(WAVELETS))
def test_scaling_filter_is_orthonormal(family):
    h = np.array(WAVELETS[family])
    assert abs(h.sum() - np.sqrt(2)) < 1e-14
    for shift in range(0, h.size, 2):
        expected = 1.0 if shift == 0 else 0.0
        assert abs(np.dot(h[shift:], h[:h.size - shift]) - expected) < 1e-14


@pytest.mark.parametrize("n", [125, 250, 64, 17])
@pytest.mark.parametrize("level", [1, 2, 3])
def test_perfect_reconstruction_and_energy(rng, n, level):
    x = rng.standard_normal((5, n))
    c = dwt(x, WaveletSpec("db4", level))
    assert np.max(np.abs(idwt(c) - x)) < 1e-10
    energy = np.sum(c.all_coefficients() ** 2, axis=-1)
    np.testing.assert_allclose(energy, np.sum(x ** 2, axis=-1), rtol=0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(8, 300), st.sampled_from(["haar", "db2", "db4"]), st.integers(0, 10 ** 6))
def test_reconstruction_property(n, family, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    c = dwt(x, WaveletSpec(family, 3))
    assert np.allclose(idwt(c), x, atol=1e-10)


def test_constant_signal_has_no_detail():
    c = dwt(np.full(128, 3.7), WaveletSpec("db4", 3))
    for d in c.details:
        assert np.max(np.abs(d)) < 1e-10


def test_band_lengths_and_ordering():
    c = dwt(np.zeros(250), WaveletSpec("db4", 3))
    # 250 -> 125 -> 62 (+1 tail) -> 31
    assert c.approx.shape[-1] == 31
    assert [d.shape[-1] for d in c.details] == [31, 62, 125]
    assert [t.shape[-1] for t in c.tails] == [0, 1, 0]


def test_too_short_signal():
    with pytest.raises(ValueError):
        dwt(np.zeros(4), WaveletSpec("db4", 3))


def test_unknown_family():
    with pytest.raises(ValueError):
        WaveletSpec("sym5")
