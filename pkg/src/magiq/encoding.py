"""Canonical length-prefixed encoding.

Every hashed, signed, MAC'd or framed structure goes through :func:`encode`.
Each field is written as a 4-octet big-endian length followed by the field
octets; fields are concatenated in declared order.  Integers are 8-octet
big-endian unsigned, strings are UTF-8, and nested sequences are encoded
recursively and then treated as a single octet field.
"""

from __future__ import annotations

import struct
from typing import Sequence, Union

Field = Union[bytes, bytearray, str, int, Sequence["Field"], None]

_LEN = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class EncodingError(ValueError):
    """Raised when octets cannot be parsed as a canonical encoding."""


def field_bytes(value: Field) -> bytes:
    """Octets of a single field before length-prefixing."""
    if value is None:
        return b""
    if isinstance(value, bool):
        return _U64.pack(int(value))
    if isinstance(value, int):
        if value < 0:
            raise EncodingError(f"negative integer {value} has no canonical form")
        return _U64.pack(value)
    if isinstance(value, (bytes, bytearray)):
        return bytes(value)
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, (list, tuple)):
        return encode(*value)
    raise EncodingError(f"cannot encode {type(value).__name__}")


def encode(*fields: Field) -> bytes:
    out = bytearray()
    for f in fields:
        b = field_bytes(f)
        out += _LEN.pack(len(b))
        out += b
    return bytes(out)


def decode(data: bytes) -> list[bytes]:
    """Split an encoding into its top-level raw fields."""
    fields = []
    pos = 0
    n = len(data)
    while pos < n:
        if pos + 4 > n:
            raise EncodingError("truncated length prefix")
        (ln,) = _LEN.unpack_from(data, pos)
        pos += 4
        if pos + ln > n:
            raise EncodingError("field overruns buffer")
        fields.append(bytes(data[pos:pos + ln]))
        pos += ln
    return fields


def decode_exact(data: bytes, count: int) -> list[bytes]:
    fields = decode(data)
    if len(fields) != count:
        raise EncodingError(f"expected {count} fields, got {len(fields)}")
    return fields


def to_int(b: bytes) -> int:
    if len(b) != 8:
        raise EncodingError("integer field must be 8 octets")
    return _U64.unpack(b)[0]


def to_str(b: bytes) -> str:
    try:
        return b.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError("invalid utf-8 in string field") from exc


def to_opt(b: bytes) -> bytes | None:
    return b if b else None


def frame(tag: int, body: bytes) -> bytes:
    """Prefix a canonical body with its 1-octet message-type tag."""
    return bytes([tag]) + body


def unframe(data: bytes) -> tuple[int, bytes]:
    if not data:
        raise EncodingError("empty frame")
    return data[0], data[1:]


def write_log(path, records: Sequence[bytes]) -> None:
    """Append-style log: one canonical record per entry, each length-prefixed."""
    with open(path, "wb") as fh:
        for r in records:
            fh.write(_LEN.pack(len(r)))
            fh.write(r)


def append_log(fh, record: bytes) -> None:
    fh.write(_LEN.pack(len(record)))
    fh.write(record)
    fh.flush()


def read_log(path) -> list[bytes]:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode(data)
