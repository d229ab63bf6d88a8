"""Boolean circuit representation, builder and plaintext evaluator.

Gates live in a flat, topologically ordered list: every operand index is
strictly smaller than the index of the gate that reads it.  The builder also
records, per gate, the AND-depth and a "local sub-level" (the length of the
chain of XOR/NOT gates since the last AND), which lets the MPC engine evaluate
whole layers with vectorised operations.
"""

from __future__ import annotations

import enum
import hashlib
from array import array
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import DimensionError, StructureError


class Owner(str, enum.Enum):
    MODEL = "model"
    TEST = "test"
    PUBLIC = "public"


OWNER_CODES = {Owner.MODEL: 0, Owner.TEST: 1, Owner.PUBLIC: 2}


class GateKind(enum.IntEnum):
    INPUT = 0
    CONST = 1
    XOR = 2
    AND = 3
    NOT = 4


@dataclass(frozen=True)
class CircuitStats:
    and_count: int
    xor_count: int
    not_count: int
    input_count: int
    const_count: int
    depth: int
    input_bits: dict
    total_gates: int

    def to_dict(self) -> dict:
        return {
            "and_count": self.and_count,
            "xor_count": self.xor_count,
            "not_count": self.not_count,
            "input_count": self.input_count,
            "const_count": self.const_count,
            "depth": self.depth,
            "input_bits": dict(self.input_bits),
            "total_gates": self.total_gates,
        }


@dataclass(frozen=True, eq=False)
class Circuit:
    """Immutable gate list with owner-tagged inputs.

    For INPUT gates `a` holds the owner code; for CONST gates `a` holds the bit.
    """

    kind: np.ndarray
    a: np.ndarray
    b: np.ndarray
    inputs: Mapping[Owner, np.ndarray]
    outputs: np.ndarray
    and_depth: np.ndarray
    sublevel: np.ndarray
    meta: Mapping[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.kind)

    def input_size(self, owner: Owner) -> int:
        return len(self.inputs.get(owner, ()))

    @cached_property
    def stats(self) -> CircuitStats:
        return stats(self)

    @cached_property
    def digest(self) -> bytes:
        """SHA-256 over the gate list, input layout and outputs."""
        h = hashlib.sha256()
        h.update(b"securetest-circuit-v1")
        h.update(len(self.kind).to_bytes(8, "big"))
        h.update(self.kind.astype(np.uint8).tobytes())
        h.update(self.a.astype("<i4").tobytes())
        h.update(self.b.astype("<i4").tobytes())
        for owner in Owner:
            wires = np.asarray(self.inputs.get(owner, ()), dtype="<i4")
            h.update(owner.value.encode())
            h.update(len(wires).to_bytes(8, "big"))
            h.update(wires.tobytes())
        h.update(np.asarray(self.outputs, dtype="<i4").tobytes())
        return h.digest()

    def validate(self) -> None:
        idx = np.arange(len(self.kind))
        binary = (self.kind == GateKind.XOR) | (self.kind == GateKind.AND)
        unary = binary | (self.kind == GateKind.NOT)
        if np.any(self.a[unary] >= idx[unary]) or np.any(self.b[binary] >= idx[binary]):
            raise StructureError("gate operand does not precede the gate")
        seen = np.zeros(len(self.kind), dtype=np.int64)
        for wires in self.inputs.values():
            np.add.at(seen, np.asarray(wires, dtype=np.int64), 1)
        is_input = self.kind == GateKind.INPUT
        if np.any(seen[is_input] != 1) or np.any(seen[~is_input] != 0):
            raise StructureError("every input wire must belong to exactly one owner")

    @cached_property
    def schedule(self) -> "Schedule":
        return Schedule.from_circuit(self)


@dataclass(frozen=True, eq=False)
class Schedule:
    """Gates grouped for layer-at-a-time evaluation.

    Evaluation runs d = 0..depth: first the AND gates at AND-depth d (their
    operands are all shallower), then the local XOR/NOT groups at depth d in
    sub-level order.
    """

    const_wires: np.ndarray
    const_bits: np.ndarray
    and_levels: list
    local_levels: list  # local_levels[d] is a list of (xor, not) groups at AND-depth d

    @classmethod
    def from_circuit(cls, circuit: Circuit) -> "Schedule":
        kind = circuit.kind
        const_wires = np.flatnonzero(kind == GateKind.CONST)
        const_bits = circuit.a[const_wires].astype(np.uint8)
        max_depth = int(circuit.and_depth.max(initial=0))

        and_idx = np.flatnonzero(kind == GateKind.AND)
        and_by_depth = _group(and_idx, circuit.and_depth[and_idx], max_depth + 1)
        and_levels = [(g, circuit.a[g], circuit.b[g]) for g in and_by_depth]

        local_idx = np.flatnonzero((kind == GateKind.XOR) | (kind == GateKind.NOT))
        local_levels: list = [[] for _ in range(max_depth + 1)]
        if len(local_idx):
            depth = circuit.and_depth[local_idx]
            sub = circuit.sublevel[local_idx]
            order = np.lexsort((sub, depth))
            local_idx, depth, sub = local_idx[order], depth[order], sub[order]
            keys = depth.astype(np.int64) * (int(sub.max()) + 1) + sub
            cuts = np.flatnonzero(np.diff(keys)) + 1
            for chunk in np.split(np.arange(len(local_idx)), cuts):
                gates = local_idx[chunk]
                d = int(depth[chunk[0]])
                xors = gates[kind[gates] == GateKind.XOR]
                nots = gates[kind[gates] == GateKind.NOT]
                local_levels[d].append(
                    ((xors, circuit.a[xors], circuit.b[xors]), (nots, circuit.a[nots]))
                )
        return cls(const_wires, const_bits, and_levels, local_levels)


def _group(indices: np.ndarray, keys: np.ndarray, n: int) -> list:
    order = np.argsort(keys, kind="stable")
    indices, keys = indices[order], keys[order]
    bounds = np.searchsorted(keys, np.arange(n + 1))
    return [indices[bounds[i]:bounds[i + 1]] for i in range(n)]


class CircuitBuilder:
    """Append-only circuit construction with folding of CONST operands."""

    def __init__(self):
        self._kind = array("B")
        self._a = array("i")
        self._b = array("i")
        self._depth = array("i")
        self._sub = array("i")
        self._inputs: dict[Owner, list[int]] = {o: [] for o in Owner}
        self._const_of: dict[int, int] = {}
        self._const_wire: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._kind)

    def _append(self, kind: int, a: int, b: int, depth: int, sub: int) -> int:
        self._kind.append(kind)
        self._a.append(a)
        self._b.append(b)
        self._depth.append(depth)
        self._sub.append(sub)
        return len(self._kind) - 1

    def _check(self, *wires: int) -> None:
        n = len(self._kind)
        for w in wires:
            if not 0 <= w < n:
                raise StructureError(f"wire {w} does not exist yet")

    def input(self, owner: Owner, count: int = 1) -> list[int]:
        owner = Owner(owner)
        code = OWNER_CODES[owner]
        wires = [self._append(GateKind.INPUT, code, -1, 0, 0) for _ in range(count)]
        self._inputs[owner].extend(wires)
        return wires

    def const(self, bit: int) -> int:
        bit = int(bit)
        if bit not in (0, 1):
            raise ValueError("constant must be 0 or 1")
        if bit not in self._const_wire:
            w = self._append(GateKind.CONST, bit, -1, 0, 0)
            self._const_wire[bit] = w
            self._const_of[w] = bit
        return self._const_wire[bit]

    def const_value(self, wire: int):
        """The bit carried by `wire` if it is a CONST gate, else None."""
        return self._const_of.get(wire)

    def _local_sub(self, depth: int, *operands: int) -> int:
        sub = 0
        for w in operands:
            if self._depth[w] == depth and self._kind[w] in (GateKind.XOR, GateKind.NOT):
                sub = max(sub, self._sub[w])
        return sub + 1

    def xor(self, a: int, b: int) -> int:
        self._check(a, b)
        ca, cb = self._const_of.get(a), self._const_of.get(b)
        if ca is not None and cb is not None:
            return self.const(ca ^ cb)
        if ca is not None:
            a, b, ca, cb = b, a, cb, ca
        if cb == 0:
            return a
        if cb == 1:
            return self.not_(a)
        depth = max(self._depth[a], self._depth[b])
        return self._append(GateKind.XOR, a, b, depth, self._local_sub(depth, a, b))

    def and_(self, a: int, b: int) -> int:
        self._check(a, b)
        ca, cb = self._const_of.get(a), self._const_of.get(b)
        if ca is not None and cb is not None:
            return self.const(ca & cb)
        if ca is not None:
            a, b, ca, cb = b, a, cb, ca
        if cb == 0:
            return self.const(0)
        if cb == 1:
            return a
        depth = max(self._depth[a], self._depth[b]) + 1
        return self._append(GateKind.AND, a, b, depth, 0)

    def not_(self, a: int) -> int:
        self._check(a)
        ca = self._const_of.get(a)
        if ca is not None:
            return self.const(1 - ca)
        depth = self._depth[a]
        return self._append(GateKind.NOT, a, -1, depth, self._local_sub(depth, a))

    def build(self, outputs: Iterable[int], **meta) -> Circuit:
        outputs = list(outputs)
        self._check(*outputs)

        def frozen(arr, dtype):
            out = np.frombuffer(arr, dtype=dtype).copy() if len(arr) else np.zeros(0, dtype)
            out.setflags(write=False)
            return out

        inputs = {}
        for owner, wires in self._inputs.items():
            w = np.asarray(wires, dtype=np.int32)
            w.setflags(write=False)
            inputs[owner] = w
        out = np.asarray(outputs, dtype=np.int32)
        out.setflags(write=False)
        return Circuit(
            kind=frozen(self._kind, np.uint8),
            a=frozen(self._a, np.int32),
            b=frozen(self._b, np.int32),
            inputs=inputs,
            outputs=out,
            and_depth=frozen(self._depth, np.int32),
            sublevel=frozen(self._sub, np.int32),
            meta=dict(meta),
        )


def stats(circuit: Circuit) -> CircuitStats:
    counts = np.bincount(circuit.kind, minlength=len(GateKind))
    return CircuitStats(
        and_count=int(counts[GateKind.AND]),
        xor_count=int(counts[GateKind.XOR]),
        not_count=int(counts[GateKind.NOT]),
        input_count=int(counts[GateKind.INPUT]),
        const_count=int(counts[GateKind.CONST]),
        depth=int(circuit.and_depth.max(initial=0)),
        input_bits={o.value: int(len(circuit.inputs.get(o, ()))) for o in Owner},
        total_gates=len(circuit.kind),
    )


def _check_assignment(circuit: Circuit, assignment: Mapping) -> dict:
    given = {Owner(k): list(v) for k, v in assignment.items()}
    for owner in Owner:
        need = circuit.input_size(owner)
        got = len(given.get(owner, ()))
        if got != need:
            raise DimensionError(f"{owner.value} must supply {need} input bits, got {got}")
    return given


def _eval_sliced(circuit: Circuit, assignment: Mapping[Owner, Sequence[int]], mask: int) -> list[int]:
    # Each wire value is an int whose bit j is the wire's value in instance j.
    values = [0] * len(circuit.kind)
    for owner, wires in circuit.inputs.items():
        for w, v in zip(wires.tolist(), assignment.get(owner, ())):
            values[w] = v & mask
    kinds = circuit.kind.tolist()
    avals = circuit.a.tolist()
    bvals = circuit.b.tolist()
    for g, k in enumerate(kinds):
        if k == GateKind.XOR:
            values[g] = values[avals[g]] ^ values[bvals[g]]
        elif k == GateKind.AND:
            values[g] = values[avals[g]] & values[bvals[g]]
        elif k == GateKind.NOT:
            values[g] = values[avals[g]] ^ mask
        elif k == GateKind.CONST:
            values[g] = mask if avals[g] else 0
    return [values[w] for w in circuit.outputs.tolist()]


def eval_plain(circuit: Circuit, assignment: Mapping) -> list[int]:
    """Evaluate the circuit in the clear, one gate at a time, in list order."""
    given = _check_assignment(circuit, assignment)
    for bits in given.values():
        if any(b not in (0, 1) for b in bits):
            raise ValueError("input bits must be 0 or 1")
    return _eval_sliced(circuit, given, 1)


def eval_plain_batch(circuit: Circuit, assignments: Sequence[Mapping]) -> list[list[int]]:
    """Evaluate many assignments in one pass by packing instances into int bit-slices."""
    if not assignments:
        return []
    checked = [_check_assignment(circuit, a) for a in assignments]
    packed = {}
    for owner in Owner:
        n = circuit.input_size(owner)
        cols = [0] * n
        for j, given in enumerate(checked):
            for i, bit in enumerate(given.get(owner, ())):
                if bit:
                    cols[i] |= 1 << j
        packed[owner] = cols
    mask = (1 << len(assignments)) - 1
    outs = _eval_sliced(circuit, packed, mask)
    return [[(v >> j) & 1 for v in outs] for j in range(len(assignments))]
