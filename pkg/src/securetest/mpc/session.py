"""Running complete three-party sessions and accounting for their traffic."""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ..circuit.ir import Circuit, Owner
from ..errors import TransportError
from .framing import MsgType
from .party import PROVIDER, Party
from .transport import DEFAULT_TIMEOUT, TcpTransport, Transport, make_inprocess_transports


@dataclass
class CommStats:
    """Traffic of one session.

    bytes_sent maps "src->dst" to framed bytes on that directed link;
    payload_bits[i] counts the AND-gate bits party i sent (one per AND gate per
    batch element); input and reconstruction bits are tallied separately.
    """

    bytes_sent: dict
    bytes_by_type: dict
    payload_bits: list
    input_bits: list
    reconstruct_bits: list
    round_count: int

    def to_dict(self) -> dict:
        return {
            "bytes_sent": dict(self.bytes_sent),
            "bytes_by_type": dict(self.bytes_by_type),
            "payload_bits": list(self.payload_bits),
            "input_bits": list(self.input_bits),
            "reconstruct_bits": list(self.reconstruct_bits),
            "round_count": self.round_count,
            "total_bytes_per_party": [
                sum(v for k, v in self.bytes_sent.items() if k.startswith(f"{i}->")) for i in range(3)
            ],
        }


def comm_stats(parties: Sequence[Party]) -> CommStats:
    bytes_sent = {}
    by_type = {}
    for p in parties:
        for (peer, mtype), n in sorted(p.transport.sent_bytes.items()):
            key = f"{p.id}->{peer}"
            bytes_sent[key] = bytes_sent.get(key, 0) + n
            name = MsgType(mtype).name.lower()
            by_type[name] = by_type.get(name, 0) + n
    return CommStats(
        bytes_sent=dict(sorted(bytes_sent.items())),
        bytes_by_type=dict(sorted(by_type.items())),
        payload_bits=[p.counters.gate_bits for p in parties],
        input_bits=[p.counters.input_bits for p in parties],
        reconstruct_bits=[p.counters.reconstruct_bits for p in parties],
        round_count=max((p.counters.gate_rounds for p in parties), default=0),
    )


@dataclass
class MpcResult:
    outputs: dict  # recipient party id -> (n_outputs, batch) bits
    stats: CommStats
    timing: dict = field(default_factory=dict)
    parties: list = field(default_factory=list, repr=False)

    def output(self, recipient: Optional[int] = None) -> np.ndarray:
        if recipient is None:
            recipient = min(self.outputs)
        return self.outputs[recipient]


def session_id_for(seed) -> bytes:
    if seed is None:
        return os.urandom(16)
    return hashlib.blake2b(repr(seed).encode(), digest_size=16, person=b"session-id").digest()


def run_party(party: Party, own_inputs: Mapping = (), public: Mapping = (), recipients="all",
              timing: Optional[dict] = None):
    """Drive one party through the whole protocol and return its revealed output (or None)."""
    marks = [("start", time.perf_counter())]
    party.handshake()
    marks.append(("setup", time.perf_counter()))
    party.setup_seeds()
    marks.append(("offline", time.perf_counter()))
    party.input_sharing(own_inputs, public)
    party.evaluate()
    marks.append(("online", time.perf_counter()))
    out = party.reconstruct(recipients)
    marks.append(("reveal", time.perf_counter()))
    if timing is not None:
        for (_, t0), (name, t1) in zip(marks, marks[1:]):
            timing[f"{name}_s"] = t1 - t0
    return out


def _infer_batch(circuit: Circuit, inputs: Mapping) -> int:
    batch = None
    for owner, bits in inputs.items():
        arr = np.asarray(bits)
        if arr.ndim == 2:
            if batch not in (None, arr.shape[1]):
                raise ValueError("inconsistent batch sizes across inputs")
            batch = arr.shape[1]
    return batch or 1


def _split_inputs(inputs: Mapping, party_id: int):
    own = {o: v for o, v in inputs.items() if o is not Owner.PUBLIC and PROVIDER[o] == party_id}
    public = {Owner.PUBLIC: inputs[Owner.PUBLIC]} if Owner.PUBLIC in inputs else {}
    return own, public


def eval_circuit_mpc(
    circuit: Circuit,
    inputs: Mapping,
    *,
    seed=None,
    recipients="all",
    backend: str = "inprocess",
    session_id: Optional[bytes] = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> MpcResult:
    """Evaluate `circuit` with three parties running concurrently in this process.

    `inputs` maps each owner to its bits, shape (n_bits,) or (n_bits, batch).
    Backend "tcp" connects the parties over loopback sockets.
    """
    inputs = {Owner(k): v for k, v in inputs.items()}
    for owner in Owner:
        if circuit.input_size(owner) and owner not in inputs:
            raise ValueError(f"missing inputs for {owner.value}")
    batch = _infer_batch(circuit, inputs)
    session_id = session_id or session_id_for(seed)

    if backend == "inprocess":
        net, transports = make_inprocess_transports(timeout)
        abort = net.abort
        make_transport = lambda i: transports[i]  # noqa: E731
    elif backend == "tcp":
        listeners = [TcpTransport.listen(("127.0.0.1", 0)) for _ in range(3)]
        addrs = {i: listeners[i].getsockname() for i in range(3)}
        made: list[Transport] = []

        def make_transport(i):
            t = TcpTransport(i, listeners[i], {j: addrs[j] for j in range(3) if j != i}, timeout)
            made.append(t)
            return t

        def abort():
            for t in list(made):
                t.close()
    else:
        raise ValueError(f"unknown backend {backend!r}")

    parties: list = [None, None, None]
    outputs: dict = {}
    errors: list = []
    timings: list = [dict() for _ in range(3)]

    def worker(i):
        try:
            party = Party(i, make_transport(i), circuit, session_id, batch=batch, seed=seed)
            parties[i] = party
            own, public = _split_inputs(inputs, i)
            out = run_party(party, own, public, recipients, timings[i])
            if out is not None:
                outputs[i] = out
        except BaseException as exc:  # re-raised in the caller's thread
            errors.append(exc)
            abort()

    start = time.perf_counter()
    threads = [threading.Thread(target=worker, args=(i,), name=f"party-{i}") for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if backend == "tcp":
        abort()
    if errors:
        root = [e for e in errors if not isinstance(e, TransportError)]
        raise (root or errors)[0]
    timing = {"total_s": time.perf_counter() - start}
    for key in ("setup_s", "offline_s", "online_s", "reveal_s"):
        timing[key] = max(t.get(key, 0.0) for t in timings)
    return MpcResult(outputs, comm_stats(parties), timing, parties)
