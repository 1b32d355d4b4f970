"""Predicted label to prosthesis DAC command, with a 6-byte wire encoding.

Wire format (little-endian)::

    byte 0     channel   u8   0 = none, 1 = open, 2 = close
    bytes 1-2  millivolts u16
    bytes 3-4  duration_ms u16
    byte 5     checksum  u8   XOR of bytes 0-4
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

from .data import Label

__all__ = [
    "Channel", "DacCommand", "LookupTable", "ActuationError", "MIN_MV", "MAX_MV",
    "validate_command", "validate_table", "command_for", "encode_command", "decode_command",
    "default_table", "load_table", "table_to_json",
]

MIN_MV = 600
MAX_MV = 1600
_WIRE = struct.Struct("<BHH")


class ActuationError(ValueError):
    pass


class Channel(IntEnum):
    NONE = 0
    OPEN = 1
    CLOSE = 2

    @classmethod
    def parse(cls, text) -> "Channel":
        if isinstance(text, Channel):
            return text
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise ActuationError(f"unknown DAC channel {text!r}") from None


@dataclass(frozen=True)
class DacCommand:
    channel: Channel
    millivolts: int
    duration_ms: int

    @classmethod
    def noop(cls) -> "DacCommand":
        return cls(Channel.NONE, 0, 0)


def validate_command(c: DacCommand) -> None:
    if not isinstance(c.millivolts, int) or not isinstance(c.duration_ms, int):
        raise ActuationError(f"millivolts and duration must be integers, got {c}")
    if c.channel == Channel.NONE:
        if c.millivolts != 0 or c.duration_ms != 0:
            raise ActuationError(f"no-op command must have zero voltage and duration, got {c}")
        return
    if not MIN_MV <= c.millivolts <= MAX_MV:
        raise ActuationError(f"{c.millivolts} mV outside the actuation window {MIN_MV}-{MAX_MV} mV")
    if c.duration_ms <= 0:
        raise ActuationError(f"duration must be positive, got {c.duration_ms} ms")
    if c.duration_ms > 0xFFFF:
        raise ActuationError(f"duration {c.duration_ms} ms does not fit in 16 bits")


class LookupTable:
    """Label -> DacCommand. Must pass :func:`validate_table` before use."""

    def __init__(self, entries: dict):
        self._entries = {Label(k): v for k, v in entries.items()}
        self._validated = False

    @property
    def validated(self) -> bool:
        return self._validated

    def entries(self) -> dict:
        return dict(self._entries)

    def __getitem__(self, label) -> DacCommand:
        return self._entries[Label(label)]


def validate_table(t: LookupTable) -> None:
    """Check every entry; marks the table as validated on success."""
    missing = [lab.display for lab in Label if lab not in t._entries]
    if missing:
        raise ActuationError(f"lookup table is missing {', '.join(missing)}")
    for lab, cmd in t._entries.items():
        try:
            validate_command(cmd)
        except ActuationError as exc:
            raise ActuationError(f"{lab.display}: {exc}") from None
    if t._entries[Label.REST].channel != Channel.NONE:
        raise ActuationError("Rest must map to the no-op channel")
    t._validated = True


def command_for(label, t: LookupTable) -> DacCommand:
    if not t.validated:
        raise ActuationError("lookup table has not been validated")
    return t[Label.parse(label) if isinstance(label, str) else label]


def encode_command(c: DacCommand) -> bytes:
    validate_command(c)
    body = _WIRE.pack(int(c.channel), c.millivolts, c.duration_ms)
    check = 0
    for b in body:
        check ^= b
    return body + bytes([check])


def decode_command(raw: bytes) -> DacCommand:
    if len(raw) != 6:
        raise ActuationError(f"command must be 6 bytes, got {len(raw)}")
    check = 0
    for b in raw[:5]:
        check ^= b
    if check != raw[5]:
        raise ActuationError(f"checksum mismatch: {raw[5]:#04x} != {check:#04x}")
    ch, mv, ms = _WIRE.unpack(raw[:5])
    try:
        channel = Channel(ch)
    except ValueError:
        raise ActuationError(f"unknown channel byte {ch}") from None
    cmd = DacCommand(channel, mv, ms)
    validate_command(cmd)
    return cmd


def default_table() -> LookupTable:
    """Placeholder values inside the actuation window; not calibrated for any device."""
    return LookupTable({
        Label.TG: DacCommand(Channel.CLOSE, 900, 400),
        Label.PG: DacCommand(Channel.CLOSE, 1300, 600),
        Label.OPEN: DacCommand(Channel.OPEN, 1200, 500),
        Label.REST: DacCommand.noop(),
    })


def table_to_json(t: LookupTable) -> str:
    doc = {lab.display: {"channel": cmd.channel.name.lower(), "millivolts": cmd.millivolts,
                         "duration_ms": cmd.duration_ms}
           for lab, cmd in sorted(t.entries().items())}
    return json.dumps(doc, indent=1)


def load_table(path) -> LookupTable:
    """Read a JSON table ``{"TG": {"channel": "close", "millivolts": 900, "duration_ms": 400}, ...}``.

    The table is returned unvalidated.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ActuationError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ActuationError(f"{path}: expected an object keyed by label")
    entries = {}
    for key, val in doc.items():
        try:
            lab = Label.parse(key)
        except ValueError as exc:
            raise ActuationError(str(exc)) from None
        if not isinstance(val, dict) or set(val) != {"channel", "millivolts", "duration_ms"}:
            raise ActuationError(f"{key}: need exactly channel, millivolts, duration_ms")
        entries[lab] = DacCommand(Channel.parse(val["channel"]), val["millivolts"], val["duration_ms"])
    return LookupTable(entries)
