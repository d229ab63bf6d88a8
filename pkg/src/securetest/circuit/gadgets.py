"""Gadgets over LSB-first wire vectors.

AND cost of each gadget on w-bit operands (used by the gate census):

    comparator_lt   w
    adder           w - 1
    mux             w
    onehot_select   d * w
"""

from __future__ import annotations

from typing import Sequence

from ..errors import DimensionError
from .ir import CircuitBuilder


def _same_width(a: Sequence[int], b: Sequence[int], what: str) -> None:
    if len(a) != len(b):
        raise DimensionError(f"{what}: width mismatch {len(a)} != {len(b)}")
    if not a:
        raise DimensionError(f"{what}: zero-width operands")


def build_comparator_lt(bld: CircuitBuilder, a: Sequence[int], b: Sequence[int]) -> int:
    """Wire that is 1 iff signed(a) < signed(b).

    Runs the borrow chain of a - b with the sign bits flipped, which turns the
    signed comparison into an unsigned one.  Each step is a multiplexer
    borrow' = (a_i != b_i) ? b_i : borrow, costing one AND.
    """
    _same_width(a, b, "comparator")
    a = list(a)
    b = list(b)
    a[-1] = bld.not_(a[-1])
    b[-1] = bld.not_(b[-1])
    borrow = bld.const(0)
    for ai, bi in zip(a, b):
        diff = bld.xor(ai, bi)
        borrow = bld.xor(borrow, bld.and_(diff, bld.xor(bi, borrow)))
    return borrow


def build_adder(bld: CircuitBuilder, a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Ripple-carry (a + b) mod 2**w."""
    _same_width(a, b, "adder")
    carry = bld.const(0)
    out = []
    last = len(a) - 1
    for i, (ai, bi) in enumerate(zip(a, b)):
        axc = bld.xor(ai, carry)
        out.append(bld.xor(axc, bi))
        if i < last:
            carry = bld.xor(carry, bld.and_(axc, bld.xor(bi, carry)))
    return out


def build_mux(bld: CircuitBuilder, sel: int, a: Sequence[int], b: Sequence[int]) -> list[int]:
    """a if sel else b, as b ^ (sel & (a ^ b)) per bit."""
    _same_width(a, b, "mux")
    return [bld.xor(bi, bld.and_(sel, bld.xor(ai, bi))) for ai, bi in zip(a, b)]


def xor_fold(bld: CircuitBuilder, vectors: Sequence[Sequence[int]]) -> list[int]:
    """Bitwise XOR of equally wide vectors, folded as a balanced tree."""
    vectors = [list(v) for v in vectors]
    if not vectors:
        raise DimensionError("xor_fold of nothing has no width")
    while len(vectors) > 1:
        nxt = [[bld.xor(x, y) for x, y in zip(vectors[i], vectors[i + 1])]
               for i in range(0, len(vectors) - 1, 2)]
        if len(vectors) % 2:
            nxt.append(vectors[-1])
        vectors = nxt
    return vectors[0]


def build_onehot_select(
    bld: CircuitBuilder, sel: Sequence[int], values: Sequence[Sequence[int]]
) -> list[int]:
    """XOR over i of (sel_i AND values[i]).

    With a one-hot selector this is values[i*]; an all-zero selector yields 0.
    """
    if len(sel) != len(values) or not sel:
        raise DimensionError(f"selector has {len(sel)} bits for {len(values)} values")
    width = len(values[0])
    if any(len(v) != width for v in values) or width == 0:
        raise DimensionError("all selectable values must share one non-zero width")
    masked = [[bld.and_(s, bit) for bit in v] for s, v in zip(sel, values)]
    return xor_fold(bld, masked)


def build_sum(bld: CircuitBuilder, vectors: Sequence[Sequence[int]]) -> list[int]:
    """Modular sum of vectors, folded as a balanced tree of adders."""
    vectors = [list(v) for v in vectors]
    while len(vectors) > 1:
        nxt = [build_adder(bld, vectors[i], vectors[i + 1]) for i in range(0, len(vectors) - 1, 2)]
        if len(vectors) % 2:
            nxt.append(vectors[-1])
        vectors = nxt
    return vectors[0]
