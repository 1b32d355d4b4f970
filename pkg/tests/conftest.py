import numpy as np
import pytest

from graspdecode.data import EpochSet, Label


def random_spd(rng, n, cond=None):
    a = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(a)
    vals = rng.uniform(0.5, 3.0, n) if cond is None else np.geomspace(1.0, cond, n)
    return (q * vals) @ q.T


def random_epochs(rng, n_per_class=(6, 6, 6, 6), n_channels=4, n_samples=64, rate=64.0, f32=False):
    labels = np.concatenate([np.full(k, lab) for lab, k in zip(Label, n_per_class)])
    data = rng.standard_normal((labels.size, n_channels, n_samples))
    if f32:
        data = data.astype(np.float32).astype(np.float64)
    names = tuple(f"E{i}" for i in range(n_channels))
    return EpochSet(data, labels, rate, names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
