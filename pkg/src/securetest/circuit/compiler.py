"""Lowering of a GBT ensemble to an oblivious boolean circuit.

Only the ensemble shape (tree count, depth, feature count) and the encoding are
baked into the circuit.  Feature choices, thresholds and leaf values are model
owner inputs, so one circuit serves every model of the same shape.

Model owner input layout, tree by tree in order:
    for each internal node in heap order: n_features one-hot selector bits,
        then `width` threshold bits (LSB first)
    for each leaf in order: `width` value bits
Test owner input layout: `width` bits per feature, feature 0 first.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

from ..errors import RangeError
from ..gbt import GbtModel
from .fixedpoint import DEFAULT_ENCODING, FixedPointEncoding, decode, encode, int_to_bits, to_signed
from .gadgets import build_comparator_lt, build_onehot_select, build_sum, xor_fold
from .ir import Circuit, CircuitBuilder, Owner


def _build_tree(bld: CircuitBuilder, features: list, depth: int, n_features: int, width: int) -> list[int]:
    n_internal = 2**depth - 1
    go_left = []
    for _ in range(n_internal):
        sel = bld.input(Owner.MODEL, n_features)
        threshold = bld.input(Owner.MODEL, width)
        feature = build_onehot_select(bld, sel, features)
        go_left.append(build_comparator_lt(bld, feature, threshold))

    # Path indicators top-down; right child = parent ^ left child since the
    # two children partition the parent.
    indicator = {0: bld.const(1)}
    for pos in range(n_internal):
        parent = indicator.pop(pos)
        left = bld.and_(parent, go_left[pos])
        indicator[2 * pos + 1] = left
        indicator[2 * pos + 2] = bld.xor(parent, left)

    masked = []
    for leaf in range(2**depth):
        value = bld.input(Owner.MODEL, width)
        ind = indicator[n_internal + leaf]
        masked.append([bld.and_(ind, bit) for bit in value])
    return xor_fold(bld, masked)


@lru_cache(maxsize=16)
def gbt_circuit(n_trees: int, depth: int, n_features: int, enc: FixedPointEncoding = DEFAULT_ENCODING) -> Circuit:
    """The evaluation circuit for every ensemble of this shape."""
    if depth < 1 or n_features < 1 or n_trees < 0:
        raise ValueError("need n_trees >= 0, depth >= 1, n_features >= 1")
    bld = CircuitBuilder()
    features = [bld.input(Owner.TEST, enc.width) for _ in range(n_features)]
    tree_outputs = [_build_tree(bld, features, depth, n_features, enc.width) for _ in range(n_trees)]
    if tree_outputs:
        out = build_sum(bld, tree_outputs)
    else:
        out = [bld.const(0)] * enc.width
    return bld.build(out, n_trees=n_trees, depth=depth, n_features=n_features,
                     width=enc.width, frac=enc.frac)


def gbt_and_census(n_trees: int, depth: int, n_features: int, width: int) -> int:
    """Closed-form AND count of gbt_circuit."""
    internal = 2**depth - 1
    per_tree = internal * (n_features * width + width) + (2**depth - 2) + 2**depth * width
    return n_trees * per_tree + max(n_trees - 1, 0) * (width - 1)


def check_encodable(model: GbtModel, enc: FixedPointEncoding = DEFAULT_ENCODING) -> None:
    """Raise RangeError if a constant is unencodable or the ensemble sum could overflow."""
    worst = 0
    for t, tree in enumerate(model.trees):
        for v in tree.thresholds:
            encode(v, enc)
        worst += max(abs(to_signed(encode(v, enc), enc)) for v in tree.leaves)
        if worst > enc.max_int:
            raise RangeError(
                f"sum of largest leaf magnitudes through tree {t} exceeds the "
                f"{enc.width}-bit range; the circuit would wrap around"
            )


def compile_gbt(model: GbtModel, enc: FixedPointEncoding = DEFAULT_ENCODING) -> Circuit:
    check_encodable(model, enc)
    return gbt_circuit(model.n_trees, model.depth, model.n_features, enc)


def model_input_bits(model: GbtModel, enc: FixedPointEncoding = DEFAULT_ENCODING) -> list[int]:
    check_encodable(model, enc)
    bits: list[int] = []
    for tree in model.trees:
        for feature, threshold in zip(tree.features, tree.thresholds):
            onehot = [0] * model.n_features
            onehot[feature] = 1
            bits.extend(onehot)
            bits.extend(int_to_bits(encode(threshold, enc), enc.width))
        for value in tree.leaves:
            bits.extend(int_to_bits(encode(value, enc), enc.width))
    return bits


def feature_input_bits(features: Sequence[float], enc: FixedPointEncoding = DEFAULT_ENCODING) -> list[int]:
    bits: list[int] = []
    for x in features:
        bits.extend(int_to_bits(encode(x, enc), enc.width))
    return bits


def gbt_assignment(model: GbtModel, features: Sequence[float], enc: FixedPointEncoding = DEFAULT_ENCODING) -> dict:
    return {Owner.MODEL: model_input_bits(model, enc), Owner.TEST: feature_input_bits(features, enc)}


def decode_output(bits: Sequence[int], enc: FixedPointEncoding = DEFAULT_ENCODING) -> float:
    value = 0
    for i, b in enumerate(bits):
        value |= (int(b) & 1) << i
    return decode(value, enc)


def quantize_model(model: GbtModel, enc: FixedPointEncoding = DEFAULT_ENCODING) -> GbtModel:
    """Snap thresholds and leaves to the fixed-point grid.

    Plaintext predict on a quantized model with quantized features then agrees
    exactly with the compiled circuit, ties included.
    """
    return model.map_values(enc.quantize)


def quantize_features(features: Sequence[float], enc: FixedPointEncoding = DEFAULT_ENCODING) -> list[float]:
    return [enc.quantize(x) for x in features]
