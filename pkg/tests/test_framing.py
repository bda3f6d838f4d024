"""Byte envelope codec: golden fixture, roundtrips, failure modes."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardauth.errors import FrameError
from cardauth.framing import frame_fields, frame_texts, parse_frame

# "CAUTH1" + 0x01 + len("ab") + "ab" + len("c") + "c", frozen
GOLDEN = bytes.fromhex("434155544831" + "01" + "00000002" + "6162" + "00000001" + "63")


def test_golden_fixture():
    assert frame_texts(["ab", "c"]) == GOLDEN


def test_empty_field_list():
    data = frame_fields([])
    assert parse_frame(data) == []


@given(fields=st.lists(st.binary(min_size=0, max_size=200), max_size=8))
@settings(max_examples=100, deadline=None)
def test_roundtrip(fields):
    assert parse_frame(frame_fields(fields)) == fields


def test_magic_missing():
    with pytest.raises(FrameError):
        parse_frame(b"NOTCAUTH" + GOLDEN)


def test_truncated_length():
    with pytest.raises(FrameError):
        parse_frame(GOLDEN[:-7])


def test_field_runs_past_end():
    with pytest.raises(FrameError):
        parse_frame(GOLDEN[:-1])


def test_expected_count_enforced():
    with pytest.raises(FrameError):
        parse_frame(GOLDEN, expect=3)
    assert len(parse_frame(GOLDEN, expect=2)) == 2
