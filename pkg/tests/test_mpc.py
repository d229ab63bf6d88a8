import math
import threading
from collections import Counter

import numpy as np
import pytest
from scipy import stats as sps

from securetest.circuit import CircuitBuilder, Owner, compile_gbt, eval_plain, eval_plain_batch, gbt_assignment, gbt_circuit
from securetest.errors import DesyncError, HandshakeError, ProtocolError, ReconstructionError, TransportError
from securetest.mpc import (
    HEADER_SIZE,
    MsgType,
    Party,
    RandomSource,
    SeedPair,
    and_cross_term,
    decode_frame,
    encode_frame,
    eval_circuit_mpc,
    make_inprocess_transports,
    prf_bits,
    reconstruct_shares,
    session_id_for,
    share_input,
)

from conftest import random_features, random_model

SID = bytes(range(16))


def run_threads(fns):
    errors = [None, None, None]
    results = [None, None, None]

    def wrap(i):
        try:
            results[i] = fns[i]()
        except Exception as exc:  # collected for the assertions
            errors[i] = exc

    threads = [threading.Thread(target=wrap, args=(i,)) for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(30)
    return results, errors


def and_circuit(m, levels=1):
    """m AND gates spread over `levels` sequential rounds."""
    bld = CircuitBuilder()
    xs = bld.input(Owner.MODEL, m)
    ys = bld.input(Owner.TEST, m)
    per = m // levels
    outs = []
    carry = None
    for lvl in range(levels):
        for j in range(lvl * per, (lvl + 1) * per if lvl < levels - 1 else m):
            a = xs[j] if carry is None else bld.xor(xs[j], carry)
            outs.append(bld.and_(a, ys[j]))
        carry = outs[-1]
    return bld.build(outs)


def xor_circuit(m):
    bld = CircuitBuilder()
    xs = bld.input(Owner.MODEL, m)
    ys = bld.input(Owner.TEST, m)
    return bld.build([bld.not_(bld.xor(x, y)) for x, y in zip(xs, ys)])


# -- framing -----------------------------------------------------------------


def test_frame_round_trip():
    frame = encode_frame(2, MsgType.GATE_BATCH, 7, b"abc")
    assert len(frame) == HEADER_SIZE + 3 == 13
    assert frame[:4] == (3).to_bytes(4, "big")
    assert decode_frame(frame) == (2, MsgType.GATE_BATCH, 7, b"abc")
    with pytest.raises(ProtocolError):
        decode_frame(frame[:-1])
    with pytest.raises(ProtocolError):
        decode_frame(frame[:5])


def test_desync_detected():
    _, (t0, t1, _t2) = make_inprocess_transports(timeout=1)
    t0.send(1, MsgType.INPUT_SHARE, b"x")
    with pytest.raises(DesyncError):
        t1.recv(0, MsgType.GATE_BATCH)


def test_timeout_raises_transport_error():
    _, (t0, _t1, _t2) = make_inprocess_transports(timeout=0.05)
    with pytest.raises(TransportError):
        t0.recv(1, MsgType.HANDSHAKE)


# -- correlated randomness ---------------------------------------------------


def seed_pairs(keys, sid=SID):
    return [SeedPair(keys[i], keys[(i + 1) % 3], sid) for i in range(3)]


def test_zero_shares_cancel():
    rng = np.random.default_rng(0)
    pairs = seed_pairs([rng.bytes(16) for _ in range(3)])
    alphas = [p.zero_share(0, 1000) for p in pairs]
    assert not np.any(alphas[0] ^ alphas[1] ^ alphas[2])
    assert 400 < alphas[0].sum() < 600


def test_prf_streams():
    key = b"k" * 16
    a = prf_bits(key, SID, 0, 128)
    assert np.array_equal(a, prf_bits(key, SID, 0, 128))
    assert not np.array_equal(a, prf_bits(key, bytes(16), 0, 128))
    # arbitrary windows agree with the long stream, across block boundaries
    long = prf_bits(key, SID, 0, 2000)
    assert np.array_equal(prf_bits(key, SID, 500, 700), long[500:1200])


# -- sharing -----------------------------------------------------------------


@pytest.mark.parametrize("bit", [0, 1])
def test_share_round_trip(bit):
    rs = RandomSource(3)
    for _ in range(20):
        assert reconstruct_shares(share_input(np.array([bit]), rs))[0] == bit


def test_single_party_view_is_uniform():
    rs = RandomSource(11)
    pairs = share_input(np.ones(10_000, dtype=np.uint8), rs)
    for i in range(3):
        a, b = pairs[i]
        counts = Counter(zip(a.tolist(), b.tolist()))
        for v in [(0, 0), (0, 1), (1, 0), (1, 1)]:
            assert abs(counts[v] / 10_000 - 0.25) <= 0.02
        chi = sps.chisquare([counts[v] for v in [(0, 0), (0, 1), (1, 0), (1, 1)]])
        assert chi.pvalue > 1e-4


def test_tampered_component_detected():
    pairs = share_input(np.array([1, 0, 1], dtype=np.uint8), RandomSource(1))
    a, b = pairs[2]
    bad = a.copy()
    bad[1] ^= 1
    pairs[2] = (bad, b)
    with pytest.raises(ReconstructionError):
        reconstruct_shares(pairs)


def test_and_brute_force():
    rs = RandomSource(5)
    rng = np.random.default_rng(5)
    for x in (0, 1):
        for y in (0, 1):
            for trial in range(100):
                sp = seed_pairs([rng.bytes(16) for _ in range(3)])
                xa = share_input(np.array([x]), rs)
                yb = share_input(np.array([y]), rs)
                c = [and_cross_term(xa[i], yb[i], sp[i].zero_share(trial, 1)) for i in range(3)]
                # party i ends with (c_i, c_{i+1}) after receiving from its next neighbour
                new = [(c[i], c[(i + 1) % 3]) for i in range(3)]
                assert reconstruct_shares(new)[0] == (x & y)


# -- full sessions -----------------------------------------------------------


def test_xor_only_has_no_gate_traffic():
    c = xor_circuit(64)
    rng = np.random.default_rng(0)
    x, y = rng.integers(0, 2, 64), rng.integers(0, 2, 64)
    res = eval_circuit_mpc(c, {Owner.MODEL: x, Owner.TEST: y}, seed=1)
    assert res.output().ravel().tolist() == eval_plain(c, {Owner.MODEL: x.tolist(), Owner.TEST: y.tolist()})
    assert res.stats.payload_bits == [0, 0, 0]
    assert res.stats.bytes_by_type.get("gate_batch", 0) == 0


@pytest.mark.parametrize("levels", [1, 10])
def test_thousand_and_gates(levels):
    c = and_circuit(1000, levels)
    assert c.stats.and_count == 1000
    rng = np.random.default_rng(levels)
    x, y = rng.integers(0, 2, 1000), rng.integers(0, 2, 1000)
    res = eval_circuit_mpc(c, {Owner.MODEL: x, Owner.TEST: y}, seed=2)
    assert res.output().ravel().tolist() == eval_plain(c, {Owner.MODEL: x.tolist(), Owner.TEST: y.tolist()})
    assert res.stats.payload_bits == [1000, 1000, 1000]
    # oracle: one frame per AND level, header plus the packed bits
    expected = sum(HEADER_SIZE + math.ceil(len(out) / 8) for out, _, _ in c.schedule.and_levels if len(out))
    for i in range(3):
        sent = res.parties[i].transport.sent_bytes[((i + 2) % 3, MsgType.GATE_BATCH)]
        assert sent == expected
    assert res.stats.round_count == levels


def test_gate_bytes_scale_with_batch():
    c = and_circuit(100, 4)
    rng = np.random.default_rng(1)
    B = 13
    x, y = rng.integers(0, 2, (100, B)), rng.integers(0, 2, (100, B))
    res = eval_circuit_mpc(c, {Owner.MODEL: x, Owner.TEST: y}, seed=3)
    assert res.stats.payload_bits == [100 * B] * 3
    expected = sum(HEADER_SIZE + math.ceil(len(out) * B / 8) for out, _, _ in c.schedule.and_levels if len(out))
    assert res.stats.bytes_by_type["gate_batch"] == 3 * expected
    for j in range(B):
        assert res.output()[:, j].tolist() == eval_plain(c, {Owner.MODEL: x[:, j].tolist(), Owner.TEST: y[:, j].tolist()})


def test_stump_matches_plaintext_100_trials():
    rng = np.random.default_rng(8)
    circuit = gbt_circuit(1, 1, 1)
    for trial in range(100):
        model = random_model(rng, 1, 1, 1)
        x = random_features(rng, 1).tolist()
        assign = gbt_assignment(model, x)
        res = eval_circuit_mpc(circuit, assign, seed=trial)
        assert res.output().ravel().tolist() == eval_plain(circuit, assign)


def test_batched_gbt_matches_plaintext():
    rng = np.random.default_rng(9)
    model = random_model(rng, 4, 3, 6)
    X = random_features(rng, 6, rows=12)
    c = compile_gbt(model)
    assigns = [gbt_assignment(model, x) for x in X.tolist()]
    feats = np.array([a[Owner.TEST] for a in assigns]).T
    res = eval_circuit_mpc(c, {Owner.MODEL: assigns[0][Owner.MODEL], Owner.TEST: feats}, seed=4)
    plain = eval_plain_batch(c, assigns)
    assert res.output().T.tolist() == plain
    assert res.stats.payload_bits == [c.stats.and_count * 12] * 3


def test_full_size_circuit_matches_plaintext():
    rng = np.random.default_rng(10)
    model = random_model(rng, 32, 4, 48)
    x = random_features(rng, 48).tolist()
    c = compile_gbt(model)
    assign = gbt_assignment(model, x)
    res = eval_circuit_mpc(c, assign, seed=5)
    assert res.output().ravel().tolist() == eval_plain(c, assign)
    assert res.stats.payload_bits == [770_433] * 3


def test_recipient_only_traffic():
    c = and_circuit(50, 2)
    rng = np.random.default_rng(2)
    x, y = rng.integers(0, 2, 50), rng.integers(0, 2, 50)
    res = eval_circuit_mpc(c, {Owner.MODEL: x, Owner.TEST: y}, seed=6, recipients=(1,))
    assert set(res.outputs) == {1}
    for i in (0, 2):
        got = sum(v for (_, t), v in res.parties[i].transport.recv_bytes.items() if t == MsgType.RECONSTRUCT)
        assert got == 0
    sent_by_1 = sum(v for (_, t), v in res.parties[1].transport.sent_bytes.items() if t == MsgType.RECONSTRUCT)
    assert sent_by_1 == 0
    assert res.stats.reconstruct_bits == [100, 0, 100]


def test_seeded_runs_are_reproducible():
    c = and_circuit(200, 5)
    rng = np.random.default_rng(3)
    inputs = {Owner.MODEL: rng.integers(0, 2, 200), Owner.TEST: rng.integers(0, 2, 200)}
    a = eval_circuit_mpc(c, inputs, seed=7)
    b = eval_circuit_mpc(c, inputs, seed=7)
    assert np.array_equal(a.parties[0].s0, b.parties[0].s0)
    assert a.stats.to_dict() == b.stats.to_dict()
    other = eval_circuit_mpc(c, inputs, seed=8)
    assert not np.array_equal(a.parties[0].s0, other.parties[0].s0)
    assert np.array_equal(a.output(), other.output())


def test_tcp_matches_inprocess():
    rng = np.random.default_rng(4)
    model = random_model(rng, 3, 2, 5)
    assign = gbt_assignment(model, random_features(rng, 5).tolist())
    c = compile_gbt(model)
    local = eval_circuit_mpc(c, assign, seed=9)
    tcp = eval_circuit_mpc(c, assign, seed=9, backend="tcp")
    assert np.array_equal(local.output(), tcp.output())
    assert local.stats.to_dict() == tcp.stats.to_dict()


def _parties(circuits, sids):
    _, transports = make_inprocess_transports(timeout=2)
    return [Party(i, transports[i], circuits[i], sids[i], seed=1) for i in range(3)]


def test_handshake_rejects_circuit_mismatch():
    ps = _parties([gbt_circuit(1, 1, 2), gbt_circuit(1, 1, 2), gbt_circuit(1, 1, 3)], [SID] * 3)
    _, errors = run_threads([p.handshake for p in ps])
    assert all(isinstance(e, HandshakeError) for e in errors)


def test_handshake_rejects_session_mismatch():
    c = gbt_circuit(1, 1, 2)
    ps = _parties([c, c, c], [SID, SID, session_id_for("other")])
    _, errors = run_threads([p.handshake for p in ps])
    assert all(isinstance(e, HandshakeError) for e in errors)


def test_tampered_reconstruction_share_detected():
    c = and_circuit(8, 2)
    ps = _parties([c, c, c], [SID] * 3)
    rng = np.random.default_rng(0)
    inputs = [{Owner.MODEL: rng.integers(0, 2, 8)}, {Owner.TEST: rng.integers(0, 2, 8)}, {}]

    def run(i):
        def go():
            p = ps[i]
            p.handshake()
            p.setup_seeds()
            p.input_sharing(inputs[i])
            p.evaluate()
            s0, s1 = p.output_shares()
            if i == 2:
                s0 = s0.copy()
                s0[3] ^= 1
            return p.reconstruct("all", (s0, s1))
        return go

    _, errors = run_threads([run(0), run(1), run(2)])
    assert isinstance(errors[0], ReconstructionError)
    assert isinstance(errors[1], ReconstructionError)


def test_missing_inputs_rejected():
    with pytest.raises(ValueError):
        eval_circuit_mpc(and_circuit(4), {Owner.MODEL: [0, 1, 0, 1]})
