"""Byte envelope shared by sealed messages, signatures, cards and transport payloads.

Layout: magic ``CAUTH1``, one version byte 0x01, then each field as a 4-byte
big-endian length followed by the field bytes, in declared order. The magic
makes wrong-key decryptions detectable: garbage plaintext almost never starts
with the 7 fixed bytes.
"""

from __future__ import annotations

import struct

from .errors import FrameError

MAGIC = b"CAUTH1"
VERSION = 0x01
_HEADER = MAGIC + bytes([VERSION])


def frame_fields(fields: list[bytes]) -> bytes:
    """Encode `fields` into a framed envelope."""
    parts = [_HEADER]
    for f in fields:
        parts.append(struct.pack(">I", len(f)))
        parts.append(f)
    return b"".join(parts)


def parse_frame(data: bytes, expect: int | None = None) -> list[bytes]:
    """Decode a framed envelope back into its field list.

    Raises FrameError when the magic is absent, a declared length runs past
    the end of the data, there are trailing bytes, or (with `expect`) the
    field count differs.
    """
    if len(data) < len(_HEADER) or data[: len(_HEADER)] != _HEADER:
        raise FrameError("frame magic absent")
    pos = len(_HEADER)
    fields = []
    while pos < len(data):
        if pos + 4 > len(data):
            raise FrameError("truncated length prefix")
        (n,) = struct.unpack(">I", data[pos : pos + 4])
        pos += 4
        if pos + n > len(data):
            raise FrameError("field runs past end of frame")
        fields.append(data[pos : pos + n])
        pos += n
    if expect is not None and len(fields) != expect:
        raise FrameError(f"expected {expect} fields, found {len(fields)}")
    return fields


def frame_texts(fields: list[str]) -> bytes:
    """frame_fields over UTF-8 encodings; convenience for text payloads."""
    return frame_fields([f.encode("utf-8") for f in fields])
