from functools import reduce

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flocwatch.datamodel import SensorFrame, WaterSample
from flocwatch.protocol import (
    BadMagic,
    ChecksumMismatch,
    FieldCount,
    InvalidFrame,
    NumericParse,
    ProtocolError,
    checksum,
    encode_frame,
    parse_frame,
)

from .conftest import TESTDATA

# XOR of the payload bytes, computed independently with a one-line reduce
GOLDEN_PAYLOAD = "FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,10"
GOLDEN_CHECKSUM = "47"
GOLDEN_LINE = GOLDEN_PAYLOAD + ",47\n"
GOLDEN_FRAME = SensorFrame("TANK-A", 1, 1602998400, WaterSample(29.5, 6.9, 1.7, 10.0))


def tenths(lo, hi):
    return st.integers(lo, hi).map(lambda k: k / 10)


frames = st.builds(
    SensorFrame,
    device_id=st.from_regex(r"[A-Za-z0-9_-]{1,32}", fullmatch=True),
    seq=st.integers(0, 2**64 - 1),
    timestamp=st.integers(0, 2**64 - 1),
    sample=st.builds(
        WaterSample,
        temp=tenths(0, 599),
        ph=tenths(0, 140),
        tds=tenths(0, 99999),
        floc=st.floats(0, 1e6, allow_nan=False, allow_infinity=False),
    ),
)


@pytest.mark.parametrize("payload, expected", [(b"", "00"), (b"A", "41"), (b"AB", "03")])
def test_checksum_trivial(payload, expected):
    assert checksum(payload) == expected


def test_checksum_golden():
    assert "%02X" % reduce(lambda a, b: a ^ b, GOLDEN_PAYLOAD.encode(), 0) == GOLDEN_CHECKSUM
    assert checksum(GOLDEN_PAYLOAD.encode()) == GOLDEN_CHECKSUM


def test_golden_file_matches():
    assert (TESTDATA / "golden_frame.txt").read_text() == GOLDEN_LINE


def test_parse_golden():
    assert parse_frame(GOLDEN_LINE) == GOLDEN_FRAME
    assert parse_frame(GOLDEN_LINE.rstrip("\n")) == GOLDEN_FRAME
    assert parse_frame(GOLDEN_LINE.encode()) == GOLDEN_FRAME


def test_encode_golden():
    assert encode_frame(GOLDEN_FRAME) == GOLDEN_LINE


def test_bad_checksum():
    with pytest.raises(ChecksumMismatch) as exc:
        parse_frame(GOLDEN_PAYLOAD + ",00\n")
    assert exc.value.computed == "47" and exc.value.transmitted == "00"


def test_non_numeric_temp():
    with pytest.raises(NumericParse) as exc:
        parse_frame("FLOC1,TANK-A,1,1602998400,hot,6.9,1.7,10,XX")
    assert exc.value.field == "temp"


def test_field_count():
    with pytest.raises(FieldCount):
        parse_frame("FLOC1,TANK-A,1,1602998400,29.5,6.9,1.7,47")


def test_bad_magic_with_valid_checksum():
    payload = "FLOC2,TANK-A,1,1602998400,29.5,6.9,1.7,10"
    with pytest.raises(BadMagic):
        parse_frame(f"{payload},{checksum(payload.encode())}")


@pytest.mark.parametrize("field, payload", [
    ("ph", "FLOC1,T,1,1,29.5,14.5,1.7,10"),
    ("temp", "FLOC1,T,1,1,60,7,1.7,10"),
    ("temp", "FLOC1,T,1,1,-1,7,1.7,10"),
    ("seq", "FLOC1,T,18446744073709551616,1,29,7,1.7,10"),
    ("floc", "FLOC1,T,1,1,29,7,1.7,1e3"),
    ("device_id", "FLOC1,T!,1,1,29,7,1.7,10"),
    ("device_id", "FLOC1,,1,1,29,7,1.7,10"),
])
def test_out_of_range_fields(field, payload):
    with pytest.raises(NumericParse) as exc:
        parse_frame(f"{payload},{checksum(payload.encode())}")
    assert exc.value.field == field


def test_error_carries_line():
    line = GOLDEN_PAYLOAD + ",00"
    with pytest.raises(ProtocolError) as exc:
        parse_frame(line)
    assert exc.value.line == line


def test_encode_rejects_comma_in_device_id():
    with pytest.raises(InvalidFrame):
        encode_frame(SensorFrame("TANK,A", 1, 1, WaterSample(29.5, 6.9, 1.7, 10)))


def test_encode_canonical_numbers():
    line = encode_frame(SensorFrame("d", 0, 0, WaterSample(30.04, 7.0, 0.0, 0.0001)))
    assert line.startswith("FLOC1,d,0,0,30,7,0,0.0001,")


@settings(max_examples=300, deadline=None)
@given(frames)
def test_round_trip(frame):
    assert parse_frame(encode_frame(frame)) == frame


@settings(max_examples=100, deadline=None)
@given(frames, st.data())
def test_single_byte_corruption_detected(frame, data):
    raw = bytearray(encode_frame(frame).encode())
    payload_len = raw.rfind(b",")
    pos = data.draw(st.integers(0, payload_len - 1))
    new = data.draw(st.integers(0, 255).filter(lambda b: b != raw[pos]))
    raw[pos] = new
    with pytest.raises((ChecksumMismatch, NumericParse, FieldCount)):
        parse_frame(bytes(raw))


@settings(max_examples=500, deadline=None)
@given(st.binary(max_size=200))
def test_parser_total_on_bytes(blob):
    try:
        parse_frame(blob)
    except ProtocolError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=120))
def test_parser_total_on_text(text):
    try:
        parse_frame(text)
    except ProtocolError:
        pass
