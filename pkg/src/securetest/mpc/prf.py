"""Keyed pseudorandom bit streams and pairwise zero sharing.

The PRF is keyed BLAKE2b with the 128-bit key as MAC key and the session id as
salt, applied to a 64-bit block counter; each block yields 512 output bits.
Bit `c` of a stream is the correlated-randomness bit for global counter c.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

KEY_SIZE = 16
_BLOCK_BITS = 512


def prf_bits(key: bytes, session_id: bytes, start: int, count: int) -> np.ndarray:
    """Bits start .. start+count-1 of the stream for (key, session_id)."""
    if count <= 0:
        return np.zeros(0, dtype=np.uint8)
    first = start // _BLOCK_BITS
    last = (start + count - 1) // _BLOCK_BITS
    raw = b"".join(
        hashlib.blake2b(block.to_bytes(8, "big"), key=key, salt=session_id, digest_size=64).digest()
        for block in range(first, last + 1)
    )
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    offset = start - first * _BLOCK_BITS
    return bits[offset:offset + count]


@dataclass(frozen=True)
class SeedPair:
    """Party i's keys: its own key (also held by party i-1) and party i+1's key."""

    own_key: bytes
    next_key: bytes
    session_id: bytes

    def zero_share(self, start: int, count: int) -> np.ndarray:
        """alpha_i for counters start..start+count-1; the three parties' values XOR to 0."""
        return prf_bits(self.own_key, self.session_id, start, count) ^ prf_bits(
            self.next_key, self.session_id, start, count
        )
