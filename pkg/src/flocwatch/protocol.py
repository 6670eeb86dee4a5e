"""Line protocol between sensor devices and the ingestion service.

A frame is one ASCII line::

    FLOC1,<device_id>,<seq>,<timestamp>,<temp>,<ph>,<tds>,<floc>,<checksum>\\n

The checksum is the XOR of every payload byte (``FLOC1`` through the last
byte of the floc field), written as two uppercase hex digits.
"""
from __future__ import annotations

import re
from decimal import Decimal
from functools import reduce
from typing import Union

from .datamodel import DEVICE_ID_RE, U64_MAX, FlocError, SensorFrame, WaterSample

MAGIC = "FLOC1"
N_FIELDS = 9

_DECIMAL = re.compile(rb"-?[0-9]+(\.[0-9]+)?")
_UNSIGNED = re.compile(rb"[0-9]+")
_HEX2 = re.compile(rb"[0-9A-F]{2}")


class ProtocolError(FlocError, ValueError):
    reason = "protocol"

    def __init__(self, message: str, line=None):
        super().__init__(message)
        self.line = line


class BadMagic(ProtocolError):
    reason = "bad_magic"


class FieldCount(ProtocolError):
    reason = "field_count"


class ChecksumMismatch(ProtocolError):
    reason = "checksum_mismatch"

    def __init__(self, computed: str, transmitted: str, line=None):
        super().__init__(f"checksum {transmitted!r} != computed {computed!r}", line)
        self.computed = computed
        self.transmitted = transmitted


class NumericParse(ProtocolError):
    """A field value failed syntax or range checks. Also used for device_id."""

    reason = "numeric_parse"

    def __init__(self, field: str, message: str, line=None):
        super().__init__(f"{field}: {message}", line)
        self.field = field


class InvalidFrame(ProtocolError):
    reason = "invalid_frame"


def checksum(payload: bytes) -> str:
    return "%02X" % reduce(lambda acc, b: acc ^ b, payload, 0)


def _render_short(x: float) -> str:
    # one fractional digit at most, integers without a point
    q = round(float(x), 1) + 0.0
    if q == int(q):
        return str(int(q))
    return f"{q:.1f}"


def _render_exact(x: float) -> str:
    text = format(Decimal(repr(float(x) + 0.0)), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def canonical_sample(sample: WaterSample) -> WaterSample:
    """The sample as it survives a trip through the wire format."""
    return WaterSample(
        temp=float(_render_short(sample.temp)),
        ph=float(_render_short(sample.ph)),
        tds=float(_render_short(sample.tds)),
        floc=float(_render_exact(sample.floc)),
    )


def encode_frame(frame: SensorFrame) -> str:
    """Render ``frame`` as a canonical newline-terminated line.

    temp, pH and TDS are rounded to one decimal, so parse(encode(f)) == f
    holds for frames whose readings are already on that grid.
    """
    problem = frame.first_violation()
    if problem is not None:
        raise InvalidFrame(problem)
    s = frame.sample
    payload = ",".join([
        MAGIC,
        frame.device_id,
        str(frame.seq),
        str(frame.timestamp),
        _render_short(s.temp),
        _render_short(s.ph),
        _render_short(s.tds),
        _render_exact(s.floc),
    ])
    return f"{payload},{checksum(payload.encode('ascii'))}\n"


def _number(name: str, raw: bytes, line) -> float:
    if not _DECIMAL.fullmatch(raw):
        raise NumericParse(name, f"not a decimal number: {raw[:40]!r}", line)
    return float(raw)


def _unsigned(name: str, raw: bytes, line) -> int:
    if not _UNSIGNED.fullmatch(raw):
        raise NumericParse(name, f"not an unsigned integer: {raw[:40]!r}", line)
    if len(raw.lstrip(b"0")) > 20 or int(raw) > U64_MAX:
        raise NumericParse(name, "exceeds 64 bits", line)
    return int(raw)


def parse_frame(line: Union[str, bytes]) -> SensorFrame:
    """Parse and validate one frame line; a single trailing newline is allowed.

    Checks run in this order: field count, checksum (when the transmitted
    value is well-formed hex), numeric syntax, malformed checksum, magic,
    device id, value ranges. Any single-byte payload corruption therefore
    surfaces as ChecksumMismatch, NumericParse or FieldCount.
    """
    raw = line.encode("utf-8", "surrogateescape") if isinstance(line, str) else bytes(line)
    if raw.endswith(b"\n"):
        raw = raw[:-1]
        if raw.endswith(b"\r"):
            raw = raw[:-1]
    fields = raw.split(b",")
    if len(fields) != N_FIELDS:
        raise FieldCount(f"expected {N_FIELDS} fields, got {len(fields)}", line)
    payload, _, transmitted = raw.rpartition(b",")
    computed = checksum(payload)
    well_formed = bool(_HEX2.fullmatch(transmitted))
    shown = transmitted.decode("ascii", "replace")
    if well_formed and shown != computed:
        raise ChecksumMismatch(computed, shown, line)

    seq = _unsigned("seq", fields[2], line)
    ts = _unsigned("timestamp", fields[3], line)
    values = [_number(name, fields[i], line) for i, name in zip(range(4, 8), ("temp", "ph", "tds", "floc"))]

    if not well_formed:
        raise ChecksumMismatch(computed, shown, line)
    if fields[0] != MAGIC.encode():
        raise BadMagic(f"unknown magic {fields[0][:16]!r}", line)
    device_id = fields[1].decode("ascii", "replace")
    if not DEVICE_ID_RE.fullmatch(device_id):
        raise NumericParse("device_id", "must be 1-32 chars of [A-Za-z0-9_-]", line)

    sample = WaterSample(*values)
    problem = sample.first_violation()
    if problem is not None:
        raise NumericParse(problem.split()[0], problem, line)
    return SensorFrame(device_id=device_id, seq=seq, timestamp=ts, sample=sample)
