"""Wire format of protocol messages.

Every frame is a 10-byte header followed by the payload:

    offset  size  field
    0       4     payload length, big-endian
    4       1     sender party id
    5       1     message type (MsgType)
    6       4     per-link sequence number, big-endian

Handshake payload: 16-byte session id, 1-byte party id, 32-byte circuit hash.
"""

from __future__ import annotations

import enum
import struct

from ..errors import HandshakeError, ProtocolError

HEADER = struct.Struct(">IBBI")
HEADER_SIZE = HEADER.size
SESSION_ID_SIZE = 16
DIGEST_SIZE = 32
MAX_PAYLOAD = 1 << 30


class MsgType(enum.IntEnum):
    HANDSHAKE = 0
    SEED_SETUP = 1
    INPUT_SHARE = 2
    GATE_BATCH = 3
    RECONSTRUCT = 4


def encode_frame(sender: int, msg_type: int, seq: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds the frame limit")
    return HEADER.pack(len(payload), sender, int(msg_type), seq) + payload


def decode_header(header: bytes) -> tuple[int, int, int, int]:
    """Return (payload_length, sender, msg_type, seq)."""
    length, sender, msg_type, seq = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"announced payload of {length} bytes exceeds the frame limit")
    return length, sender, msg_type, seq


def decode_frame(frame: bytes) -> tuple[int, int, int, bytes]:
    """Return (sender, msg_type, seq, payload) for one complete frame."""
    if len(frame) < HEADER_SIZE:
        raise ProtocolError("truncated frame header")
    length, sender, msg_type, seq = decode_header(frame[:HEADER_SIZE])
    payload = frame[HEADER_SIZE:]
    if len(payload) != length:
        raise ProtocolError(f"frame announces {length} payload bytes, carries {len(payload)}")
    return sender, msg_type, seq, payload


def frame_size(payload_bytes: int) -> int:
    return HEADER_SIZE + payload_bytes


def handshake_payload(session_id: bytes, party_id: int, circuit_digest: bytes) -> bytes:
    if len(session_id) != SESSION_ID_SIZE or len(circuit_digest) != DIGEST_SIZE:
        raise ValueError("session id must be 16 bytes and circuit digest 32 bytes")
    return session_id + bytes([party_id]) + circuit_digest


def parse_handshake(payload: bytes) -> tuple[bytes, int, bytes]:
    if len(payload) != SESSION_ID_SIZE + 1 + DIGEST_SIZE:
        raise HandshakeError(f"handshake payload has {len(payload)} bytes")
    return payload[:16], payload[16], payload[17:]
