"""Semi-honest three-party replicated boolean secret sharing."""

from .framing import HEADER_SIZE, MsgType, decode_frame, encode_frame, frame_size
from .party import (
    PROVIDER,
    Party,
    RandomSource,
    and_cross_term,
    and_gate,
    reconstruct_shares,
    share_input,
)
from .prf import SeedPair, prf_bits
from .session import CommStats, MpcResult, comm_stats, eval_circuit_mpc, run_party, session_id_for
from .transport import (
    InProcessNetwork,
    TcpTransport,
    Transport,
    make_inprocess_transports,
    parse_address,
)
