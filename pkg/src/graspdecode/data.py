"""Core domain types, the binary epoch file format and electrode layouts.

Epoch file layout (little-endian)::

    magic        b"EEGE"
    version      u16 (= 1)
    n_trials     u32
    n_channels   u32
    n_samples    u32
    sample_rate  f32
    labels       n_trials x u8   (0=TG, 1=PG, 2=Open, 3=Rest)
    channels     n_channels x (u16 byte length + UTF-8 name)
    data         n_trials*n_channels*n_samples x f32, trial-major, sample-minor
    [trailer]    optional: b"META" + u32 byte length + UTF-8 JSON session metadata
"""
from __future__ import annotations

import enum
import json
import re
import struct
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Label", "SessionMeta", "EpochSet", "ElectrodeLayout", "CombinationSpec",
    "EpochFormatError", "MalformedHeaderError", "DimensionMismatchError",
    "UnknownLabelError", "NonFiniteSampleError", "InvariantError", "LayoutError",
    "load_epochs", "save_epochs", "resolve_combination", "select_electrodes",
    "load_layout", "default_layout", "mirror_channel",
]

MAGIC = b"EEGE"
META_MAGIC = b"META"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIf")


class Label(enum.IntEnum):
    """Decoded movement classes. The ordinal values are part of the file format."""

    TG = 0
    PG = 1
    OPEN = 2
    REST = 3

    @property
    def display(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def parse(cls, text: str) -> "Label":
        key = text.strip().lower()
        for label, name in _DISPLAY.items():
            if name.lower() == key:
                return label
        raise ValueError(f"unknown label {text!r}")


_DISPLAY = {Label.TG: "TG", Label.PG: "PG", Label.OPEN: "Open", Label.REST: "Rest"}


class InvariantError(ValueError):
    """An EpochSet (or related value) violates its invariants."""


class EpochFormatError(ValueError):
    """Base class for epoch-file decoding failures."""


class MalformedHeaderError(EpochFormatError):
    pass


class DimensionMismatchError(EpochFormatError):
    pass


class UnknownLabelError(EpochFormatError):
    pass


class NonFiniteSampleError(EpochFormatError):
    pass


class LayoutError(ValueError):
    """Electrode layout or combination cannot be resolved."""


GROUPS = ("able-bodied", "amputee")
CONDITIONS = ("ME", "MI", "MO")
HANDEDNESS = ("left", "right")


@dataclass(frozen=True)
class SessionMeta:
    subject_id: str = "unknown"
    group: str = "able-bodied"
    session: int = 1
    condition: str = "ME"
    handedness: str = "right"

    def __post_init__(self):
        if self.group not in GROUPS:
            raise InvariantError(f"group must be one of {GROUPS}, got {self.group!r}")
        if self.session not in (1, 2, 3):
            raise InvariantError(f"session must be 1, 2 or 3, got {self.session!r}")
        if self.condition not in CONDITIONS:
            raise InvariantError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.handedness not in HANDEDNESS:
            raise InvariantError(f"handedness must be left or right, got {self.handedness!r}")

    def to_dict(self) -> dict:
        return {"subject_id": self.subject_id, "group": self.group, "session": self.session,
                "condition": self.condition, "handedness": self.handedness}


@dataclass(frozen=True, eq=False)
class EpochSet:
    """Trials x channels x samples EEG amplitudes (microvolts) with labels.

    Arrays are copied and made read-only on construction.
    """

    data: np.ndarray
    labels: np.ndarray
    sample_rate: float
    channels: tuple
    meta: SessionMeta = field(default_factory=SessionMeta)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        channels = tuple(str(c) for c in self.channels)
        if data.ndim != 3:
            raise InvariantError(f"data must be 3-D (trials, channels, samples), got shape {data.shape}")
        if labels.shape[0] != data.shape[0]:
            raise InvariantError(f"{labels.shape[0]} labels for {data.shape[0]} trials")
        if len(channels) != data.shape[1]:
            raise InvariantError(f"{len(channels)} channel names for {data.shape[1]} channels")
        if len(set(channels)) != len(channels):
            raise InvariantError("channel names must be unique")
        if labels.size and (labels.min() < 0 or labels.max() > 3):
            raise InvariantError("labels must be in 0..3")
        if not np.all(np.isfinite(data)):
            raise InvariantError("all amplitudes must be finite")
        rate = float(self.sample_rate)
        if not rate > 0:
            raise InvariantError(f"sample_rate must be positive, got {rate}")
        data.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "sample_rate", rate)

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def with_data(self, data, labels=None, sample_rate=None) -> "EpochSet":
        return replace(self, data=data,
                       labels=self.labels if labels is None else labels,
                       sample_rate=self.sample_rate if sample_rate is None else sample_rate)

    def subset(self, idx) -> "EpochSet":
        idx = np.asarray(idx)
        return replace(self, data=self.data[idx], labels=self.labels[idx])

    def of_classes(self, classes) -> "EpochSet":
        mask = np.isin(self.labels, [int(c) for c in classes])
        return self.subset(np.flatnonzero(mask))

    def class_counts(self) -> dict:
        return {Label(k): int(np.sum(self.labels == k)) for k in np.unique(self.labels)}

    def equals(self, other: "EpochSet") -> bool:
        return (np.array_equal(self.data, other.data)
                and np.array_equal(self.labels, other.labels)
                and self.sample_rate == other.sample_rate
                and self.channels == other.channels
                and self.meta == other.meta)


def _encode(epochs: EpochSet) -> bytes:
    rate32 = np.float32(epochs.sample_rate)
    if float(rate32) <= 0 or not np.isfinite(rate32):
        raise InvariantError("sample rate not representable as f32")
    data32 = epochs.data.astype("<f4")
    if not np.all(np.isfinite(data32)):
        raise InvariantError("data overflow when casting to f32")
    parts = [_HEADER.pack(MAGIC, VERSION, epochs.n_trials, epochs.n_channels,
                          epochs.n_samples, float(rate32)),
             epochs.labels.astype(np.uint8).tobytes()]
    for name in epochs.channels:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(np.ascontiguousarray(data32).tobytes())
    meta = json.dumps(epochs.meta.to_dict(), sort_keys=True).encode("utf-8")
    parts.append(META_MAGIC + struct.pack("<I", len(meta)) + meta)
    return b"".join(parts)


def save_epochs(epochs: EpochSet, path) -> None:
    """Write an epoch set to ``path``. Identical sets produce identical bytes.

    Amplitudes are stored as float32.
    """
    if not np.all(np.isfinite(epochs.data)):
        raise InvariantError("refusing to write non-finite samples")
    payload = _encode(epochs)
    Path(path).write_bytes(payload)


def load_epochs(path) -> EpochSet:
    """Read an epoch file written by :func:`save_epochs`."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: file too short for header ({len(buf)} bytes)")
    magic, version, n_trials, n_channels, n_samples, rate = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise MalformedHeaderError(f"{path}: unsupported version {version}")
    if not np.isfinite(rate) or rate <= 0:
        raise MalformedHeaderError(f"{path}: invalid sample rate {rate}")
    pos = _HEADER.size
    if len(buf) < pos + n_trials:
        raise DimensionMismatchError(f"{path}: truncated label block")
    labels = np.frombuffer(buf, dtype=np.uint8, count=n_trials, offset=pos).astype(np.int64)
    if labels.size and labels.max() > 3:
        raise UnknownLabelError(f"{path}: unknown label code {int(labels.max())}")
    pos += n_trials
    channels = []
    for _ in range(n_channels):
        if len(buf) < pos + 2:
            raise DimensionMismatchError(f"{path}: truncated channel-name block")
        (length,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if len(buf) < pos + length:
            raise DimensionMismatchError(f"{path}: truncated channel name")
        try:
            channels.append(buf[pos:pos + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise MalformedHeaderError(f"{path}: channel name is not UTF-8") from exc
        pos += length
    n_values = n_trials * n_channels * n_samples
    end = pos + 4 * n_values
    if len(buf) < end:
        raise DimensionMismatchError(
            f"{path}: expected {n_values} samples, file holds {(len(buf) - pos) // 4}")
    data = np.frombuffer(buf, dtype="<f4", count=n_values, offset=pos)
    if not np.all(np.isfinite(data)):
        raise NonFiniteSampleError(f"{path}: non-finite sample in data block")
    meta = SessionMeta()
    rest = buf[end:]
    if rest:
        if rest[:4] != META_MAGIC or len(rest) < 8:
            raise DimensionMismatchError(f"{path}: {len(rest)} unexpected trailing bytes")
        (length,) = struct.unpack_from("<I", rest, 4)
        if len(rest) != 8 + length:
            raise DimensionMismatchError(f"{path}: metadata trailer length mismatch")
        try:
            meta = SessionMeta(**json.loads(rest[8:].decode("utf-8")))
        except (ValueError, TypeError) as exc:
            raise MalformedHeaderError(f"{path}: bad metadata trailer: {exc}") from exc
    data = data.astype(np.float64).reshape(n_trials, n_channels, n_samples)
    return EpochSet(data, labels, float(rate), tuple(channels), meta)


@dataclass(frozen=True)
class ElectrodeLayout:
    names: tuple
    positions: Mapping[str, tuple] | None = None

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise LayoutError("electrode names must be unique")
        if self.positions is not None and set(self.positions) != set(names):
            raise LayoutError("positions must provide exactly one entry per electrode")
        object.__setattr__(self, "names", names)

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class CombinationSpec:
    id: int
    members_right: tuple
    members_left: tuple

    def __post_init__(self):
        if not 0 <= self.id <= 9:
            raise LayoutError(f"combination id must be in 0..9, got {self.id}")
        object.__setattr__(self, "members_right", tuple(self.members_right))
        object.__setattr__(self, "members_left", tuple(self.members_left))


_NAME_RE = re.compile(r"^([A-Za-z]+?)(\d+|z)$")


def mirror_channel(name: str) -> str:
    """Reflect a 10-20 name across the midline (C3 <-> C4, Cz unchanged)."""
    m = _NAME_RE.match(name)
    if not m:
        raise LayoutError(f"cannot mirror channel name {name!r}")
    stem, suffix = m.groups()
    if suffix == "z":
        return name
    n = int(suffix)
    return f"{stem}{n + 1 if n % 2 else n - 1}"


def _parse_members(value, layout_names, mirror_of=None):
    if value == "all":
        return tuple(layout_names)
    if value == "mirror":
        if mirror_of is None:
            raise LayoutError("'mirror' is only valid for left-handed members")
        return tuple(mirror_channel(n) for n in mirror_of)
    if not isinstance(value, list):
        raise LayoutError(f"members must be 'all', 'mirror' or a list, got {value!r}")
    return tuple(str(v) for v in value)


def load_layout(path=None):
    """Load a layout/combination file.

    The file is JSON with a ``layout`` object (``name``, ``channels`` and an
    optional ``positions`` mapping name -> [x, y]) and a ``combinations`` list
    whose entries carry ``id``, ``right`` and ``left``. Member lists are either
    explicit channel lists, ``"all"``, or (for ``left``) ``"mirror"``.

    Returns
    -------
    layout : ElectrodeLayout
    combos : dict of int -> CombinationSpec
    """
    if path is None:
        text = resources.files("graspdecode").joinpath("data/actichamp63.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text)
        lay = doc["layout"]
        positions = lay.get("positions")
        if positions is not None:
            positions = {k: tuple(v) for k, v in positions.items()}
        layout = ElectrodeLayout(tuple(lay["channels"]), positions)
        combos = {}
        for entry in doc.get("combinations", []):
            right = _parse_members(entry["right"], layout.names)
            left = _parse_members(entry.get("left", "mirror"), layout.names, mirror_of=right)
            spec = CombinationSpec(int(entry["id"]), right, left)
            if spec.id in combos:
                raise LayoutError(f"duplicate combination id {spec.id}")
            combos[spec.id] = spec
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise LayoutError(f"malformed layout file: {exc}") from exc
    for spec in combos.values():
        for members in (spec.members_right, spec.members_left):
            missing = [m for m in members if m not in layout.names]
            if missing:
                raise LayoutError(f"combination {spec.id}: {missing} not in layout")
    if 0 in combos and set(combos[0].members_right) != set(layout.names):
        raise LayoutError("combination 0 must be the full layout")
    if 9 in combos and len(combos[9].members_right) != 16:
        raise LayoutError("combination 9 must have exactly 16 members")
    return layout, combos


def default_layout():
    return load_layout(None)


def resolve_combination(layout: ElectrodeLayout, combo: CombinationSpec,
                        handedness: str = "right") -> list:
    """Channel names of ``combo`` for the given handedness, in layout order."""
    if handedness not in HANDEDNESS:
        raise LayoutError(f"handedness must be left or right, got {handedness!r}")
    members = combo.members_right if handedness == "right" else combo.members_left
    missing = [m for m in members if m not in layout.names]
    if missing:
        raise LayoutError(f"combination {combo.id}: {missing} not in layout")
    wanted = set(members)
    return [n for n in layout.names if n in wanted]


def select_electrodes(epochs: EpochSet, names: Sequence[str]) -> EpochSet:
    index = {c: i for i, c in enumerate(epochs.channels)}
    unknown = [n for n in names if n not in index]
    if unknown:
        raise LayoutError(f"unknown channel(s): {unknown}")
    rows = [index[n] for n in names]
    return replace(epochs, data=epochs.data[:, rows, :], channels=tuple(names))
