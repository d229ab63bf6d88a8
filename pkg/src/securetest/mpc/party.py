"""One party of the semi-honest three-party replicated boolean sharing protocol.

A bit x is split as x = x0 ^ x1 ^ x2 and party i holds the pair (x_i, x_{i+1}).
XOR and NOT are local; each AND costs one bit sent per party (to its previous
neighbour), masked by a PRF-derived zero sharing.  Share state is kept as two
uint8 arrays of shape (n_gates, batch): component i and component i+1.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ..circuit.ir import Circuit, Owner
from ..errors import HandshakeError, ReconstructionError
from .framing import MsgType, handshake_payload, parse_handshake
from .prf import KEY_SIZE, SeedPair
from .transport import Transport

# Default topology: model owner sits with party 0, test owner with party 1.
PROVIDER = {Owner.MODEL: 0, Owner.TEST: 1}


def next_party(i: int) -> int:
    return (i + 1) % 3


def prev_party(i: int) -> int:
    return (i + 2) % 3


def pack_bits(*arrays: np.ndarray) -> bytes:
    flat = np.concatenate([np.asarray(a, dtype=np.uint8).ravel() for a in arrays]) if arrays else np.zeros(0, np.uint8)
    return np.packbits(flat, bitorder="little").tobytes()


def unpack_bits(payload: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    if len(bits) < count or len(payload) != (count + 7) // 8:
        raise ReconstructionError(f"payload carries {len(payload)} bytes, expected {count} bits")
    return bits[:count]


class RandomSource:
    """Randomness for keys and input masks: OS entropy, or a seeded stream for reproducible runs."""

    def __init__(self, seed=None):
        self._rng = None if seed is None else np.random.default_rng(seed)

    def bytes(self, n: int) -> bytes:
        return os.urandom(n) if self._rng is None else self._rng.bytes(n)

    def bits(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        raw = np.frombuffer(self.bytes((n + 7) // 8), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[:n].reshape(shape)


def share_input(bits, rng: RandomSource) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split bits into three replicated shares; element i is party i's pair (x_i, x_{i+1})."""
    x = np.asarray(bits, dtype=np.uint8)
    x0 = rng.bits(x.shape)
    x1 = rng.bits(x.shape)
    x2 = x ^ x0 ^ x1
    comps = (x0, x1, x2)
    return [(comps[i], comps[(i + 1) % 3]) for i in range(3)]


def reconstruct_shares(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Open a full set of three pairs, checking that every duplicated component agrees."""
    for i in range(3):
        if not np.array_equal(pairs[i][1], pairs[(i + 1) % 3][0]):
            raise ReconstructionError(f"component {(i + 1) % 3} differs between parties {i} and {(i + 1) % 3}")
    return pairs[0][0] ^ pairs[1][0] ^ pairs[2][0]


def and_cross_term(a: tuple, b: tuple, alpha) -> np.ndarray:
    """c_i = a_i b_i ^ a_i b_{i+1} ^ a_{i+1} b_i ^ alpha_i, party i's share of a AND b."""
    a0, a1 = a
    b0, b1 = b
    return (a0 & b0) ^ (a0 & b1) ^ (a1 & b0) ^ alpha


def and_gate(party_id: int, a: tuple, b: tuple, alpha, transport: Transport) -> tuple:
    """Full AND round for one party: compute, send to prev, receive from next.

    Works on single bits or whole arrays of gates; returns the new pair.
    """
    c = np.asarray(and_cross_term(a, b, alpha), dtype=np.uint8)
    transport.send(prev_party(party_id), MsgType.GATE_BATCH, pack_bits(c))
    c_next = unpack_bits(transport.recv(next_party(party_id), MsgType.GATE_BATCH), c.size)
    return c, c_next.reshape(c.shape)


@dataclass
class PartyCounters:
    gate_bits: int = 0
    input_bits: int = 0
    reconstruct_bits: int = 0
    gate_rounds: int = 0
    and_counter: int = 0


class Party:
    """Sequential protocol state machine for party `party_id`.

    Call order: handshake, setup_seeds, input_sharing, evaluate, reconstruct.
    """

    def __init__(self, party_id: int, transport: Transport, circuit: Circuit, session_id: bytes,
                 *, batch: int = 1, seed=None):
        if party_id not in (0, 1, 2):
            raise ValueError("party id must be 0, 1 or 2")
        if len(session_id) != 16:
            raise ValueError("session id must be 16 bytes")
        self.id = party_id
        self.transport = transport
        self.circuit = circuit
        self.session_id = session_id
        self.batch = batch
        self.rng = RandomSource(None if seed is None else [seed, party_id])
        self.seeds: Optional[SeedPair] = None
        self.counters = PartyCounters()
        n = len(circuit)
        self.s0 = np.zeros((n, batch), dtype=np.uint8)
        self.s1 = np.zeros((n, batch), dtype=np.uint8)

    @property
    def next(self) -> int:
        return next_party(self.id)

    @property
    def prev(self) -> int:
        return prev_party(self.id)

    def handshake(self) -> None:
        """Exchange (session id, party id, circuit hash) with both neighbours and verify."""
        mine = handshake_payload(self.session_id, self.id, self.circuit.digest)
        for peer in (self.next, self.prev):
            self.transport.send(peer, MsgType.HANDSHAKE, mine)
        for peer in (self.next, self.prev):
            sid, pid, digest = parse_handshake(self.transport.recv(peer, MsgType.HANDSHAKE))
            if pid != peer:
                raise HandshakeError(f"party {self.id}: peer claims id {pid}, expected {peer}")
            if sid != self.session_id:
                raise HandshakeError(f"party {self.id}: session id mismatch with party {peer}")
            if digest != self.circuit.digest:
                raise HandshakeError(f"party {self.id}: circuit hash mismatch with party {peer}")

    def setup_seeds(self) -> SeedPair:
        """Draw own PRF key, give it to prev, receive next's key."""
        own = self.rng.bytes(KEY_SIZE)
        self.transport.send(self.prev, MsgType.SEED_SETUP, own)
        nxt = self.transport.recv(self.next, MsgType.SEED_SETUP)
        if len(nxt) != KEY_SIZE:
            raise HandshakeError(f"party {self.id}: malformed seed from party {self.next}")
        self.seeds = SeedPair(own, nxt, self.session_id)
        return self.seeds

    def _as_batch(self, bits, n: int) -> np.ndarray:
        x = np.asarray(bits, dtype=np.uint8)
        if x.ndim == 1:
            x = np.repeat(x[:, None], self.batch, axis=1)
        if x.shape != (n, self.batch):
            raise ValueError(f"expected input bits of shape ({n}, {self.batch}), got {x.shape}")
        if np.any(x > 1):
            raise ValueError("input bits must be 0 or 1")
        return x

    def input_sharing(self, own_inputs: Mapping[Owner, object] = (), public: Mapping[Owner, object] = ()) -> None:
        """Share the inputs this party provides and receive shares of the others.

        `own_inputs` maps each owner this party provides for to its bits;
        `public` carries the PUBLIC owner's bits, known to every party.
        """
        own_inputs = {Owner(k): v for k, v in dict(own_inputs).items()}
        for owner, wires in self.circuit.inputs.items():
            n = len(wires)
            if n == 0:
                continue
            if owner is Owner.PUBLIC:
                x = self._as_batch(dict(public)[Owner.PUBLIC], n)
                self.s0[wires] = x if self.id == 0 else 0
                self.s1[wires] = x if self.id == 2 else 0
                continue
            provider = PROVIDER[owner]
            if provider == self.id:
                x = self._as_batch(own_inputs[owner], n)
                pairs = share_input(x, self.rng)
                for peer in (self.next, self.prev):
                    payload = pack_bits(*pairs[peer])
                    self.transport.send(peer, MsgType.INPUT_SHARE, payload)
                    self.counters.input_bits += 2 * x.size
                self.s0[wires], self.s1[wires] = pairs[self.id]
            else:
                count = n * self.batch
                bits = unpack_bits(self.transport.recv(provider, MsgType.INPUT_SHARE), 2 * count)
                self.s0[wires] = bits[:count].reshape(n, self.batch)
                self.s1[wires] = bits[count:].reshape(n, self.batch)

    def evaluate(self) -> None:
        if self.seeds is None:
            raise RuntimeError("setup_seeds must run before evaluate")
        sched = self.circuit.schedule
        s0, s1 = self.s0, self.s1
        if len(sched.const_wires):
            c = sched.const_bits[:, None]
            s0[sched.const_wires] = c if self.id == 0 else 0
            s1[sched.const_wires] = c if self.id == 2 else 0
        flip0 = np.uint8(self.id == 0)  # NOT toggles component x0, held by parties 0 and 2
        flip1 = np.uint8(self.id == 2)
        for depth, (out, a, b) in enumerate(sched.and_levels):
            if len(out):
                m = len(out) * self.batch
                alpha = self.seeds.zero_share(self.counters.and_counter, m).reshape(len(out), self.batch)
                self.counters.and_counter += m
                z, z_next = and_gate(self.id, (s0[a], s1[a]), (s0[b], s1[b]), alpha, self.transport)
                s0[out] = z
                s1[out] = z_next
                self.counters.gate_bits += m
                self.counters.gate_rounds += 1
            for (xo, xa, xb), (no, na) in sched.local_levels[depth]:
                if len(xo):
                    s0[xo] = s0[xa] ^ s0[xb]
                    s1[xo] = s1[xa] ^ s1[xb]
                if len(no):
                    s0[no] = s0[na] ^ flip0
                    s1[no] = s1[na] ^ flip1

    def output_shares(self) -> tuple[np.ndarray, np.ndarray]:
        out = self.circuit.outputs
        return self.s0[out].copy(), self.s1[out].copy()

    def reconstruct(self, recipients: Sequence[int] | str = "all", shares: tuple | None = None):
        """Open the output wires to the given recipients.

        Non-recipients only send.  A recipient receives the full pair of both
        other parties and checks each duplicated component against the copies
        it holds.  Returns the (n_outputs, batch) bits if this party is a
        recipient, else None.
        """
        if recipients == "all":
            recipients = (0, 1, 2)
        recipients = tuple(sorted(set(recipients)))
        mine = self.output_shares() if shares is None else shares
        for r in recipients:
            if r != self.id:
                self.transport.send(r, MsgType.RECONSTRUCT, pack_bits(*mine))
                self.counters.reconstruct_bits += 2 * mine[0].size
        if self.id not in recipients:
            return None
        count = mine[0].size
        got = {}
        for peer in (self.next, self.prev):
            bits = unpack_bits(self.transport.recv(peer, MsgType.RECONSTRUCT), 2 * count)
            got[peer] = (bits[:count].reshape(mine[0].shape), bits[count:].reshape(mine[0].shape))
        pairs = [None, None, None]
        pairs[self.id] = mine
        pairs[self.next] = got[self.next]
        pairs[self.prev] = got[self.prev]
        return reconstruct_shares(pairs)
