"""Boolean circuit IR, gadgets, fixed-point encoding and the GBT compiler."""

from .compiler import (
    check_encodable,
    compile_gbt,
    decode_output,
    feature_input_bits,
    gbt_and_census,
    gbt_assignment,
    gbt_circuit,
    model_input_bits,
    quantize_features,
    quantize_model,
)
from .fixedpoint import (
    DEFAULT_ENCODING,
    FixedPointEncoding,
    bits_to_int,
    decode,
    encode,
    int_to_bits,
    to_signed,
)
from .gadgets import (
    build_adder,
    build_comparator_lt,
    build_mux,
    build_onehot_select,
    build_sum,
    xor_fold,
)
from .ir import (
    Circuit,
    CircuitBuilder,
    CircuitStats,
    GateKind,
    Owner,
    eval_plain,
    eval_plain_batch,
    stats,
)
