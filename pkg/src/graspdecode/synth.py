"""Seeded synthetic EEG epochs with planted class-dependent spatial band power."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .data import EpochSet, Label, SessionMeta

__all__ = ["SynthSpec", "SynthError", "generate", "planted_patterns", "default_spec", "central_spec"]

SOURCE_BAND = (8.0, 30.0)


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    """Generator configuration.

    Each trial of class ``k`` is ``gain_k * jitter * s(t) * pattern_k + noise``
    where ``s`` is unit-variance 8-30 Hz band-limited noise, ``jitter`` a
    per-trial log-normal amplitude factor (``jitter_sd`` in log units) and
    ``noise`` spatially white Gaussian noise of standard deviation ``noise``.
    """

    channels: tuple
    sample_rate: float = 250.0
    trials_per_class: dict = field(default_factory=lambda: {lab: 30 for lab in Label})
    patterns: dict = field(default_factory=dict)
    gains: dict = field(default_factory=dict)
    noise: float = 1.0
    jitter_sd: float = 0.0
    seed: int = 0
    epoch_s: float = 1.0
    meta: SessionMeta = field(default_factory=SessionMeta)

    def __post_init__(self):
        n = len(self.channels)
        if n < 1:
            raise SynthError("need at least one channel")
        if self.sample_rate <= 2 * SOURCE_BAND[1]:
            raise SynthError(f"sample rate {self.sample_rate} Hz too low for a {SOURCE_BAND} Hz source")
        for lab, count in self.trials_per_class.items():
            if count < 3:
                raise SynthError(f"class {Label(lab).display} needs >= 3 trials, got {count}")
        for lab in self.trials_per_class:
            if lab not in self.patterns or lab not in self.gains:
                raise SynthError(f"missing pattern or gain for class {Label(lab).display}")
            p = np.asarray(self.patterns[lab], dtype=np.float64)
            if p.shape != (n,):
                raise SynthError(f"pattern for {Label(lab).display} has shape {p.shape}, expected ({n},)")
            if abs(np.linalg.norm(p) - 1.0) > 1e-9:
                raise SynthError(f"pattern for {Label(lab).display} is not unit-norm")
            if not self.gains[lab] > 0:
                raise SynthError(f"gain for {Label(lab).display} must be positive")
        if self.noise < 0 or self.jitter_sd < 0:
            raise SynthError("noise and jitter must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.epoch_s * self.sample_rate))

    def to_json(self) -> str:
        doc = {
            "channels": list(self.channels), "sample_rate": self.sample_rate,
            "trials_per_class": {Label(k).display: v for k, v in self.trials_per_class.items()},
            "patterns": {Label(k).display: np.asarray(v).tolist() for k, v in self.patterns.items()},
            "gains": {Label(k).display: v for k, v in self.gains.items()},
            "noise": self.noise, "jitter_sd": self.jitter_sd, "seed": self.seed,
            "epoch_s": self.epoch_s, "meta": self.meta.to_dict(),
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        doc = json.loads(text)
        lab = lambda d: {Label.parse(k): v for k, v in d.items()}  # noqa: E731
        return cls(
            channels=tuple(doc["channels"]), sample_rate=float(doc["sample_rate"]),
            trials_per_class={k: int(v) for k, v in lab(doc["trials_per_class"]).items()},
            patterns={k: np.asarray(v, dtype=np.float64) for k, v in lab(doc["patterns"]).items()},
            gains={k: float(v) for k, v in lab(doc["gains"]).items()},
            noise=float(doc["noise"]), jitter_sd=float(doc.get("jitter_sd", 0.0)),
            seed=int(doc["seed"]), epoch_s=float(doc.get("epoch_s", 1.0)),
            meta=SessionMeta(**doc.get("meta", {})),
        )


def _band_source(rng, n, fs, sos, pad):
    raw = rng.standard_normal(n + 2 * pad)
    s = signal.sosfiltfilt(sos, raw)[pad:pad + n]
    return s / s.std()


def generate(spec: SynthSpec) -> EpochSet:
    """Epochs for every class in ``spec``, classes in Label order.

    Each trial draws from its own child generator, so trials are independent
    of generation order.
    """
    n = spec.n_samples
    sos = signal.butter(4, SOURCE_BAND, btype="bandpass", fs=spec.sample_rate, output="sos")
    pad = n
    root = np.random.SeedSequence(spec.seed)
    labels = [lab for lab in sorted(spec.trials_per_class) for _ in range(spec.trials_per_class[lab])]
    children = root.spawn(len(labels))
    data = np.empty((len(labels), len(spec.channels), n))
    for t, (lab, child) in enumerate(zip(labels, children)):
        rng = np.random.default_rng(child)
        source = _band_source(rng, n, spec.sample_rate, sos, pad)
        amp = spec.gains[lab] * np.exp(spec.jitter_sd * rng.standard_normal())
        pattern = np.asarray(spec.patterns[lab], dtype=np.float64)
        data[t] = amp * np.outer(pattern, source) + spec.noise * rng.standard_normal((len(spec.channels), n))
    return EpochSet(data, np.array([int(x) for x in labels]), spec.sample_rate, spec.channels, spec.meta)


def planted_patterns(channels, support, overlap: float = 0.8, seed: int = 0,
                     classes=(Label.TG, Label.PG, Label.OPEN, Label.REST)) -> dict:
    """Unit spatial patterns supported on ``support`` channels.

    All classes share a common component; ``overlap`` is the cosine between
    each class pattern and that common component, and the class-specific
    remainders are mutually orthogonal, so two class patterns have cosine
    ``overlap ** 2``.
    """
    channels = list(channels)
    idx = [channels.index(c) for c in support]
    if not idx:
        raise SynthError("empty support")
    rng = np.random.default_rng(seed)
    common = np.zeros(len(channels))
    common[idx] = rng.standard_normal(len(idx))
    common /= np.linalg.norm(common)
    out = {}
    basis = [common]
    for lab in classes:
        v = np.zeros(len(channels))
        v[idx] = rng.standard_normal(len(idx))
        # orthogonal to the common part and to the other classes' private parts
        # (while the support allows), so every pair overlaps equally
        for b in basis:
            v -= (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            basis.append(v)
        else:
            v = np.zeros(len(channels))
        p = overlap * common + np.sqrt(max(1.0 - overlap ** 2, 0.0)) * v
        out[lab] = p / np.linalg.norm(p)
    return out


def default_spec(n_channels: int = 16, sample_rate: float = 250.0, trials=None, seed: int = 0,
                 overlap: float = 0.9985, noise: float = 1.0, rest_gain: float = 0.2,
                 move_gain: float = 5.0, jitter_sd: float = 0.25, channels=None) -> SynthSpec:
    """Movement classes share partially overlapping patterns; Rest is weak."""
    if channels is None:
        channels = tuple(f"Ch{i + 1}" for i in range(n_channels))
    if trials is None:
        trials = {Label.TG: 30, Label.PG: 30, Label.OPEN: 30, Label.REST: 10}
    patterns = planted_patterns(channels, channels, overlap=overlap, seed=seed + 7919)
    gains = {lab: (rest_gain if lab == Label.REST else move_gain) for lab in Label}
    return SynthSpec(tuple(channels), sample_rate, dict(trials), patterns, gains, noise, jitter_sd, seed)


CENTRAL = ("FC5", "FC3", "FC1", "FC2", "FC4", "FC6", "C5", "C3", "C1", "Cz", "C2", "C4", "C6",
           "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6")


def central_spec(channels, sample_rate: float = 250.0, trials=None, seed: int = 0,
                 overlap: float = 0.9985, noise: float = 1.0, rest_gain: float = 0.2,
                 move_gain: float = 5.0, jitter_sd: float = 0.25) -> SynthSpec:
    """Like :func:`default_spec` but the planted signal lives on central channels only."""
    support = [c for c in CENTRAL if c in channels]
    if trials is None:
        trials = {Label.TG: 30, Label.PG: 30, Label.OPEN: 30, Label.REST: 10}
    patterns = planted_patterns(channels, support, overlap=overlap, seed=seed + 7919)
    gains = {lab: (rest_gain if lab == Label.REST else move_gain) for lab in Label}
    return SynthSpec(tuple(channels), sample_rate, dict(trials), patterns, gains, noise, jitter_sd, seed)
