"""Datagram wire format.

Both packet kinds share a fixed 16-byte big-endian header:

    offset  size  update (kind=0)        ack (kind=1)
    0       1     version = 1            version = 1
    1       1     kind = 0               kind = 1
    2       4     seq                    seq being acknowledged
    6       8     gen_timestamp_us       echo_timestamp_us (copied verbatim)
    14      2     payload_len            reserved, written as 0

An update carries payload_len opaque bytes after the header; an ACK is the
bare header. The echoed timestamp lets the source compute round trips on
its own clock, so the two ends never need synchronized time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import EncodingError, MalformedPacketError

VERSION = 1
KIND_UPDATE = 0
KIND_ACK = 1
HEADER_LEN = 16

_HEADER = struct.Struct(">BBIQH")
assert _HEADER.size == HEADER_LEN

_U32_MAX = 2**32 - 1
_U64_MAX = 2**64 - 1
_U16_MAX = 2**16 - 1


@dataclass(frozen=True)
class UpdateHeader:
    seq: int
    gen_timestamp_us: int
    payload_len: int = 0
    version: int = VERSION


@dataclass(frozen=True)
class AckHeader:
    seq: int
    echo_timestamp_us: int
    version: int = VERSION


@dataclass(frozen=True)
class DecodedUpdate:
    header: UpdateHeader
    payload: bytes


def _check_common(seq: int, timestamp_us: int) -> None:
    if not 0 <= seq <= _U32_MAX:
        raise EncodingError(f"seq {seq} out of 32-bit range")
    if not 0 <= timestamp_us <= _U64_MAX:
        raise EncodingError(f"timestamp {timestamp_us} out of 64-bit range")


def encode_update(h: UpdateHeader, payload: bytes = b"") -> bytes:
    _check_common(h.seq, h.gen_timestamp_us)
    if len(payload) > _U16_MAX:
        raise EncodingError(f"payload of {len(payload)} bytes exceeds 16-bit length")
    if len(payload) != h.payload_len:
        raise EncodingError(
            f"payload_len field {h.payload_len} != actual payload {len(payload)}"
        )
    return _HEADER.pack(
        h.version, KIND_UPDATE, h.seq, h.gen_timestamp_us, h.payload_len
    ) + payload


def encode_ack(h: AckHeader) -> bytes:
    _check_common(h.seq, h.echo_timestamp_us)
    return _HEADER.pack(h.version, KIND_ACK, h.seq, h.echo_timestamp_us, 0)


def ack_for(update: UpdateHeader) -> AckHeader:
    """The ACK a monitor sends for an accepted update."""
    return AckHeader(seq=update.seq, echo_timestamp_us=update.gen_timestamp_us)


def decode_packet(raw: bytes) -> DecodedUpdate | AckHeader:
    """Parse one datagram.

    Anything that does not parse raises MalformedPacketError; receivers
    drop such datagrams and continue.
    """
    if len(raw) < HEADER_LEN:
        raise MalformedPacketError(f"buffer of {len(raw)} bytes is shorter than header")
    version, kind, seq, timestamp_us, tail = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise MalformedPacketError(f"unknown version {version}")
    if kind == KIND_UPDATE:
        payload = raw[HEADER_LEN:]
        if len(payload) != tail:
            raise MalformedPacketError(
                f"payload_len says {tail} but {len(payload)} bytes follow"
            )
        return DecodedUpdate(
            UpdateHeader(seq=seq, gen_timestamp_us=timestamp_us, payload_len=tail),
            payload,
        )
    if kind == KIND_ACK:
        if len(raw) != HEADER_LEN:
            raise MalformedPacketError(
                f"ack datagram has {len(raw) - HEADER_LEN} trailing bytes"
            )
        return AckHeader(seq=seq, echo_timestamp_us=timestamp_us)
    raise MalformedPacketError(f"unknown kind {kind}")
