"""Command-line entry point: `securetest <subcommand> ...`.

Machine-readable output is a single JSON document on stdout; narrative and
diagnostics go to stderr.  Wall-clock measurements live under a top-level
"timing" key so the rest of the document is byte-reproducible under --seed.

Exit codes:
    0  success
    1  bad input: malformed model/CSV/JSON, invalid or conflicting flags
    2  fixed-point encoding range violation
    3  MPC handshake mismatch (session id, party id or circuit hash)
    4  MPC transport or protocol failure
    5  threshold query budget exhausted
    6  parameter derivation has no solution
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adversary import (
    ExactScoreOracle,
    HillClimbAttacker,
    ThresholdOracle,
    empirical_measure,
    error_mass,
    lemma1_attack,
    run_experiment,
    run_rounds,
    standard_setup,
)
from .circuit import (
    DEFAULT_ENCODING,
    FixedPointEncoding,
    Owner,
    check_encodable,
    compile_gbt,
    decode_output,
    eval_plain_batch,
    feature_input_bits,
    gbt_and_census,
    gbt_assignment,
    gbt_circuit,
    model_input_bits,
    quantize_features,
    quantize_model,
)
from .errors import (
    BudgetExhausted,
    DimensionError,
    HandshakeError,
    NoSolution,
    ProtocolError,
    RangeError,
    SecureTestError,
    TransportError,
)
from .gbt import (
    TestSet,
    gen_synthetic,
    load_dataset,
    load_model,
    predict,
    predict_batch,
    save_dataset,
    save_model,
    train_toy_gbt,
)
from .mpc import PROVIDER, Party, TcpTransport, eval_circuit_mpc, parse_address, run_party, session_id_for
from .params import AccuracyTarget, derive, generalization_bound
from .threshold import LaplaceNoise, ThresholdMechanism, ThresholdParams, ZeroNoise, aggregate_score

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RANGE = 2
EXIT_HANDSHAKE = 3
EXIT_TRANSPORT = 4
EXIT_BUDGET = 5
EXIT_NO_SOLUTION = 6


class UsageError(SecureTestError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which we reserve for range errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def say(*args) -> None:
    print(*args, file=sys.stderr)


def emit(doc: dict, out: str | None = None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def _encoding(args) -> FixedPointEncoding:
    return FixedPointEncoding(args.width, args.frac)


def _parse_shape(text: str) -> tuple[int, int, int]:
    try:
        t, d, f = (int(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--shape expects TREES:DEPTH:FEATURES, got {text!r}") from None
    if t < 0 or d < 1 or f < 1:
        raise UsageError(f"invalid shape {text!r}")
    return t, d, f


def load_features(path, n_features: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Feature rows from a CSV with a header.  A trailing extra column is taken as the label."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file")
    body = [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), -1)
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric cell ({exc})") from None
    if data.shape[1] == n_features:
        return data, None
    if data.shape[1] == n_features + 1:
        return data[:, :-1], data[:, -1]
    raise DimensionError(f"{path}: {data.shape[1]} columns, model expects {n_features} features")


def _model_info(model) -> dict:
    t, d, f = model.shape
    return {"n_trees": t, "depth": d, "n_features": f}


# -- subcommands -------------------------------------------------------------


def cmd_compile(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    enc = _encoding(args)
    circuit = compile_gbt(model, enc)
    stats = circuit.stats
    doc = {
        "model": _model_info(model),
        "encoding": {"width": enc.width, "frac": enc.frac},
        "stats": stats.to_dict(),
        "and_census": gbt_and_census(*model.shape, enc.width),
        "circuit_sha256": circuit.digest.hex(),
        "timing": {"compile_s": time.perf_counter() - t0},
    }
    say(f"compiled {model.n_trees} trees: {stats.and_count} AND gates, AND-depth {stats.depth}")
    emit(doc, args.out)
    return EXIT_OK


def cmd_eval_plain(args) -> int:
    t0 = time.perf_counter()
    model = load_model(args.model)
    enc = _encoding(args)
    X, _ = load_features(args.features, model.n_features)
    if args.row is not None:
        X = X[[args.row]]
    circuit = compile_gbt(model, enc)
    rows = []
    if len(X):
        assignments = [gbt_assignment(model, x, enc) for x in X.tolist()]
        bits = eval_plain_batch(circuit, assignments)
        for i, x in enumerate(X.tolist()):
            rows.append({"row": i if args.row is None else args.row,
                         "circuit": decode_output(bits[i], enc), "predict": predict(model, x)})
    emit({"model": _model_info(model), "scores": rows,
          "timing": {"total_s": time.perf_counter() - t0}}, args.out)
    return EXIT_OK


def _session(args) -> bytes:
    if args.session:
        try:
            raw = bytes.fromhex(args.session)
        except ValueError:
            raw = b""
        return raw if len(raw) == 16 else session_id_for(args.session)
    if args.seed is not None:
        return session_id_for(args.seed)
    raise UsageError("role mode needs --session (or --seed) so all parties agree on a session id")


def _eval_mpc_local(args, enc) -> int:
    if not (args.model and args.features):
        raise UsageError("local mode needs --model and --features")
    model = load_model(args.model)
    X, _ = load_features(args.features, model.n_features)
    if args.row is not None:
        X = X[[args.row]]
    if not len(X):
        raise UsageError("no feature rows to score")
    circuit = compile_gbt(model, enc)
    feats = np.array([feature_input_bits(x, enc) for x in X.tolist()], dtype=np.uint8).T
    inputs = {Owner.MODEL: model_input_bits(model, enc), Owner.TEST: feats}
    result = eval_circuit_mpc(circuit, inputs, seed=args.seed, backend=args.backend)
    bits = result.output()
    plain = eval_plain_batch(circuit, [gbt_assignment(model, x, enc) for x in X.tolist()])
    rows = []
    for j, x in enumerate(X.tolist()):
        rows.append({"row": j if args.row is None else args.row,
                     "mpc": decode_output(bits[:, j], enc),
                     "plaintext": decode_output(plain[j], enc),
                     "predict": predict(model, x),
                     "match": bool(np.array_equal(bits[:, j], plain[j]))})
    stats = result.stats.to_dict()
    doc = {"mode": "local", "backend": args.backend, "model": _model_info(model), "scores": rows,
           "and_count": circuit.stats.and_count, "comm": stats, "timing": result.timing}
    say(f"scored {len(rows)} rows under MPC; payload bits per party {stats['payload_bits']}")
    if args.figure:
        from .plotting import plot_comm

        say(f"figure: {plot_comm(stats, args.figure)}")
    emit(doc, args.out)
    return EXIT_OK


def _eval_mpc_role(args, enc) -> int:
    role = int(args.role)
    if not args.listen or not args.peers:
        raise UsageError("role mode needs --listen and --peers")
    peers = {}
    for item in args.peers.split(","):
        pid, _, addr = item.partition("=")
        peers[int(pid)] = parse_address(addr)
    if set(peers) != {0, 1, 2} - {role}:
        raise UsageError(f"--peers must list the other two parties as ID=HOST:PORT, got {args.peers!r}")
    own = {}
    model = None
    if role == PROVIDER[Owner.MODEL]:
        if not args.model:
            raise UsageError("party 0 provides the model: pass --model")
        model = load_model(args.model)
        shape = model.shape
        if args.shape and _parse_shape(args.shape) != shape:
            raise UsageError(f"--shape {args.shape} disagrees with the model's shape {shape}")
        check_encodable(model, enc)
        own[Owner.MODEL] = model_input_bits(model, enc)
    else:
        if not args.shape:
            raise UsageError("parties 1 and 2 need --shape TREES:DEPTH:FEATURES")
        shape = _parse_shape(args.shape)
    if role == PROVIDER[Owner.TEST]:
        if not args.features:
            raise UsageError("party 1 provides the features: pass --features")
        X, _ = load_features(args.features, shape[2])
        row = args.row or 0
        if not 0 <= row < len(X):
            raise UsageError(f"--row {row} out of range for {len(X)} rows")
        own[Owner.TEST] = feature_input_bits(X[row].tolist(), enc)
    circuit = gbt_circuit(*shape, enc)
    session = _session(args)
    t0 = time.perf_counter()
    listener = TcpTransport.listen(parse_address(args.listen))
    transport = TcpTransport(role, listener, peers, args.timeout)
    timing = {}
    try:
        party = Party(role, transport, circuit, session, batch=1, seed=args.seed)
        recipients = "all" if args.reveal == "all" else tuple(int(v) for v in args.reveal.split(","))
        out = run_party(party, own, {}, recipients, timing)
    finally:
        transport.close()
    timing["total_s"] = time.perf_counter() - t0
    doc = {"mode": "role", "role": role, "shape": list(shape), "session": session.hex(),
           "circuit_sha256": circuit.digest.hex(), "and_count": circuit.stats.and_count,
           "payload_bits": party.counters.gate_bits,
           "bytes_sent": {f"{role}->{peer}": transport.bytes_sent_to(peer) for peer in sorted(peers)},
           "timing": timing}
    if out is not None:
        doc["score"] = decode_output(out[:, 0], enc)
        doc["output_bits"] = "".join(str(int(b)) for b in out[:, 0])
        say(f"party {role}: score {doc['score']}")
    emit(doc, args.out)
    return EXIT_OK


def cmd_eval_mpc(args) -> int:
    enc = _encoding(args)
    if args.role == "local":
        return _eval_mpc_local(args, enc)
    return _eval_mpc_role(args, enc)


def _threshold_params(args, n: int) -> tuple[ThresholdParams, dict]:
    explicit = [args.epsilon, args.delta, args.k]
    if args.alpha is not None or args.beta is not None:
        if any(v is not None for v in explicit):
            raise UsageError("give either --alpha/--beta or explicit --epsilon/--delta/--k, not both")
        if args.alpha is None or args.beta is None:
            raise UsageError("--alpha and --beta go together")
        derived = derive(AccuracyTarget(args.alpha, args.beta))
        if n < derived.n:
            say(f"warning: {n} tests is below the derived sample size {derived.n}")
        if derived.k_max < 1:
            raise UsageError("derived parameters admit no query at all")
        params = ThresholdParams(derived.epsilon, derived.delta, derived.k_max, args.rho, n)
        return params, {"derived": derived.to_dict()}
    if any(v is None for v in explicit):
        raise UsageError("need --epsilon, --delta and --k (or --alpha and --beta)")
    return ThresholdParams(args.epsilon, args.delta, args.k, args.rho, n), {}


def _load_state(path, params: ThresholdParams, noise) -> ThresholdMechanism:
    if path and Path(path).exists():
        mech = ThresholdMechanism.from_state(json.loads(Path(path).read_text()))
        if mech.params != params:
            raise UsageError(f"{path} holds state for different parameters: {mech.params}")
        return mech
    return ThresholdMechanism(params, noise)


def _save_state(path, mech: ThresholdMechanism) -> None:
    if path:
        Path(path).write_text(json.dumps(mech.to_state(), sort_keys=True))


def cmd_threshold_run(args) -> int:
    t0 = time.perf_counter()
    data = load_dataset(args.tests)
    tests = TestSet.from_dataset(data, args.tolerance)
    params, extra = _threshold_params(args, len(tests))
    noise = ZeroNoise() if args.zero_noise else LaplaceNoise(args.seed)
    doc = {"tests": {"path": str(args.tests), "n": len(tests), "tolerance": args.tolerance},
           "params": {"epsilon": params.epsilon, "delta": params.delta, "k": params.k,
                      "rho": params.rho, "n": params.n, "sigma": params.sigma}, **extra,
           "noise": "zero" if args.zero_noise else {"laplace_seed": args.seed}}

    if args.models:
        mech = _load_state(args.state, params, noise)
        doc["queries_before"] = mech.queries_used
        paths = sorted(Path(args.models).glob("*.json")) if Path(args.models).is_dir() else [Path(args.models)]
        verdicts = []
        code = EXIT_OK
        for p in paths:
            model = load_model(p)
            score = aggregate_score(model, tests, secure=args.secure, seed=args.seed)
            try:
                verdict = mech.run_query(score)
            except BudgetExhausted as exc:
                say(f"refused {p.name}: {exc}")
                doc["refused"] = {"error": "budget_exhausted", "model": p.name, "reason": str(exc)}
                code = EXIT_BUDGET
                break
            say(f"{p.name}: {verdict}")
            verdicts.append({"query": mech.queries_used, "model": p.name, "verdict": str(verdict)})
        _save_state(args.state, mech)
        doc.update(verdicts=verdicts, queries_used=mech.queries_used, remaining=mech.remaining)
        doc["timing"] = {"total_s": time.perf_counter() - t0}
        emit(doc, args.out)
        return code

    # attacker mode: a hill-climber adapts to the verdicts
    if not (args.base and args.holdout):
        raise UsageError("give --models, or --base and --holdout for an adaptive hill-climb run")
    base = load_model(args.base)
    holdout = TestSet.from_dataset(load_dataset(args.holdout), args.tolerance)
    rounds = args.rounds if args.rounds is not None else params.k
    oracle = ThresholdOracle(params, noise)
    attacker = HillClimbAttacker(base, args.scale, args.seed)
    stream = (lambda r: say(f"query {r['query']}: {r['verdict']}")) if args.verbose else None
    code = EXIT_OK
    try:
        report = run_rounds(oracle, attacker, tests, holdout, rounds, on_round=stream)
    except BudgetExhausted as exc:
        say(f"refused: {exc}")
        doc["refused"] = {"error": "budget_exhausted", "query": params.k + 1, "reason": str(exc)}
        doc["timing"] = {"total_s": time.perf_counter() - t0}
        emit(doc, args.out)
        return EXIT_BUDGET
    doc["report"] = report.to_dict(include_timing=False)
    doc["timing"] = {"total_s": time.perf_counter() - t0}
    if args.figure:
        from .plotting import plot_experiment

        say(f"figure: {plot_experiment(doc['report'], args.figure)}")
    emit(doc, args.out)
    return code


def cmd_params(args) -> int:
    t0 = time.perf_counter()
    if args.alpha > 1:
        say(f"warning: alpha = {args.alpha} > 1 makes epsilon > 1/13; the guarantee is vacuous for scores in [0, 1]")
    derived = derive(AccuracyTarget(args.alpha, args.beta))
    doc = derived.to_dict()
    if derived.k_max >= 1:
        gap, fail = generalization_bound(derived.epsilon, derived.delta, derived.k_max, derived.n)
        doc["guarantee"] = {"gap_bound": gap, "failure_probability": fail}
    doc["timing"] = {"total_s": time.perf_counter() - t0}
    say(f"epsilon {derived.epsilon:.6g}, delta {derived.delta:.6g}, n {derived.n}, k_max {derived.k_max}")
    emit(doc, args.out)
    return EXIT_OK


def _attack_lemma1(args) -> dict:
    rng = np.random.default_rng(args.seed)
    domain = list(range(args.domain))
    labels = list(range(args.labels))
    table = rng.integers(0, args.labels, args.domain)
    task = lambda x: int(table[x])  # noqa: E731
    S = sorted(int(x) for x in rng.choice(args.domain, min(args.test_size, args.domain), replace=False))
    model = lemma1_attack(task, labels, S)
    sample = rng.integers(0, args.domain, args.sample).tolist()
    mu = empirical_measure(sample)
    err = error_mass(model, task, mu)
    mass_S = sum((mu.get(x, 0) for x in S), 0)
    on_s = sum(model(x) == task(x) for x in S) / len(S) if S else 1.0
    say(f"lookup model: accuracy {on_s} on S, error mass {float(err):.4f} on the sample")
    return {"kind": "lemma1", "domain_size": len(domain), "labels": len(labels), "test_size": len(S),
            "sample_size": args.sample, "on_s_accuracy": on_s,
            "error_mass": str(err), "error_mass_float": float(err),
            "one_minus_sample_mass_of_s": str(1 - mass_S), "exact_match": err == 1 - mass_S}


def cmd_attack(args) -> int:
    t0 = time.perf_counter()
    if args.kind == "lemma1":
        doc = _attack_lemma1(args)
        doc["timing"] = {"total_s": time.perf_counter() - t0}
        emit(doc, args.out)
        return EXIT_OK
    setup = standard_setup(args.seed, n_features=args.features, n_trees=args.trees, depth=args.depth,
                           tolerance=args.tolerance)
    oracles = ["exact", "threshold"] if args.oracle == "both" else [args.oracle]
    n = args.n
    if args.alpha is not None and args.beta is not None:
        n = derive(AccuracyTarget(args.alpha, args.beta)).n
        say(f"using the derived sample size n = {n}")
    elif args.k is None:
        args.k = args.k_rounds
    if args.epsilon is None and args.alpha is None:
        args.epsilon, args.delta = 1.0, args.delta or 1e-6
    reports = {}
    for kind in oracles:
        rounds = args.k_rounds
        if kind == "exact":
            oracle = ExactScoreOracle()
        else:
            params, _ = _threshold_params(args, n)
            oracle = ThresholdOracle(params, LaplaceNoise([args.seed, 3]))
            rounds = min(rounds, params.k)
        attacker = HillClimbAttacker(setup.base_model, args.scale, [args.seed, 1])
        rep = run_experiment(oracle, attacker, setup.distribution, n, rounds, [args.seed, 2])
        reports[kind] = rep.to_dict(include_timing=False)
        s = rep.summary
        say(f"{kind}: final empirical {s['final_empirical_mean']:.3f}, true {s['final_true_mean']:.3f}, "
            f"gap {s['final_gap']:+.3f}, sup gap {s['sup_gap']:.3f}")
    doc = {"kind": "hill-climb", "seed": args.seed, "reports": reports,
           "timing": {"total_s": time.perf_counter() - t0}}
    if args.figure:
        from .plotting import plot_experiment

        for kind, rep in reports.items():
            path = Path(args.figure)
            if len(reports) > 1:
                path = path.with_name(f"{path.stem}-{kind}{path.suffix}")
            say(f"figure: {plot_experiment(rep, path)}")
    emit(doc, args.out)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    data = gen_synthetic(args.rows, args.features, args.seed)
    save_dataset(data, args.out)
    say(f"wrote {len(data)} rows x {data.n_features} features to {args.out}")
    emit({"path": str(args.out), "rows": len(data), "n_features": data.n_features, "seed": args.seed,
          "label_mean": float(data.y.mean()) if len(data) else None})
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    data = load_dataset(args.data)
    history: list = []
    model = train_toy_gbt(data, args.trees, args.depth, args.learning_rate, history=history)
    if args.quantize:
        model = quantize_model(model, _encoding(args))
    save_model(model, args.out)
    say(f"trained {args.trees} trees of depth {args.depth}; final training MSE {history[-1]:.5f}")
    emit({"path": str(args.out), "model": _model_info(model), "train_mse": history,
          "quantized": bool(args.quantize), "timing": {"train_s": time.perf_counter() - t0}})
    return EXIT_OK


DEMO_SHAPE = (32, 4, 48)


def cmd_demo_lending(args) -> int:
    """Lender scores loan applicants with a private model on private applicant data."""
    t0 = time.perf_counter()
    enc = DEFAULT_ENCODING
    n_trees, depth, n_features = DEMO_SHAPE
    say(f"lender trains a {n_trees}-tree, depth-{depth} model on {args.train_rows} past loans "
        f"({n_features} features, label = log of the repaid ratio)")
    data = gen_synthetic(args.train_rows + args.applicants, n_features, args.seed)
    train = type(data)(data.X[: args.train_rows], data.y[: args.train_rows])
    model = quantize_model(train_toy_gbt(train, n_trees, depth), enc)
    check_encodable(model, enc)
    t_train = time.perf_counter()

    applicants = np.array([quantize_features(x, enc) for x in data.X[args.train_rows:].tolist()])
    circuit = compile_gbt(model, enc)
    t_compile = time.perf_counter()
    feats = np.array([feature_input_bits(x, enc) for x in applicants.tolist()], dtype=np.uint8).T
    inputs = {Owner.MODEL: model_input_bits(model, enc), Owner.TEST: feats}
    say(f"three servers evaluate the {circuit.stats.and_count:,}-AND circuit on {len(applicants)} applicants")
    result = eval_circuit_mpc(circuit, inputs, seed=args.seed, backend=args.backend)
    bits = result.output()
    plain = predict_batch(model, applicants)
    rows = []
    for j in range(len(applicants)):
        mpc = decode_output(bits[:, j], enc)
        rows.append({"applicant": j + 1, "mpc": mpc, "plaintext": float(plain[j]),
                     "match": mpc == enc.quantize(float(plain[j]))})
        say(f"  applicant {j + 1}: predicted log repayment ratio {mpc:+.4f}")
    stats = result.stats.to_dict()
    doc = {
        "seed": args.seed,
        "model": _model_info(model),
        "leaves_per_tree": 2**depth,
        "circuit": {**circuit.stats.to_dict(), "and_census": gbt_and_census(*DEMO_SHAPE, enc.width),
                    "sha256": circuit.digest.hex()},
        "applicants": rows,
        "all_match": all(r["match"] for r in rows),
        "comm": stats,
        "payload_bits_per_evaluation": [b // len(rows) for b in stats["payload_bits"]],
        "timing": {"train_s": t_train - t0, "compile_s": t_compile - t_train,
                   "mpc": result.timing, "total_s": time.perf_counter() - t0},
    }
    mb = max(stats["total_bytes_per_party"]) / 1e6
    say(f"all scores match plaintext: {doc['all_match']}; at most {mb:.2f} MB sent per party")
    if args.figure:
        from .plotting import plot_comm, plot_scores

        path = Path(args.figure)
        say(f"figure: {plot_scores(rows, path)}")
        say(f"figure: {plot_comm(stats, path.with_name(path.stem + '-comm' + path.suffix))}")
    emit(doc, args.out)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def _add_encoding(p) -> None:
    p.add_argument("--width", type=int, default=DEFAULT_ENCODING.width, help="fixed-point word size w")
    p.add_argument("--frac", type=int, default=DEFAULT_ENCODING.frac, help="fractional bits f")


def _add_mechanism(p) -> None:
    g = p.add_argument_group("mechanism parameters (either --alpha/--beta or --epsilon/--delta/--k)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--k", type=int, help="query budget")
    g.add_argument("--rho", type=float, default=0.5, help="pass threshold on the mean test score")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="securetest", description=__doc__.split("\n\n")[0],
                     epilog="exit codes: 1 input, 2 range, 3 handshake, 4 transport, 5 budget, 6 no solution")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compile", help="compile a model and print circuit statistics")
    p.add_argument("model")
    _add_encoding(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("eval-plain", help="evaluate the compiled circuit in the clear")
    p.add_argument("model")
    p.add_argument("features", help="CSV of feature rows (an extra trailing label column is ignored)")
    p.add_argument("--row", type=int)
    _add_encoding(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_plain)

    p = sub.add_parser("eval-mpc", help="evaluate under three-party MPC")
    p.add_argument("--role", choices=["0", "1", "2", "local"], default="local")
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--row", type=int)
    p.add_argument("--shape", help="TREES:DEPTH:FEATURES (needed by parties without the model)")
    p.add_argument("--listen", help="HOST:PORT this party accepts connections on")
    p.add_argument("--peers", help="other parties as ID=HOST:PORT,ID=HOST:PORT")
    p.add_argument("--session", help="session id shared by all three parties")
    p.add_argument("--reveal", default="all", help="'all' or comma-separated recipient party ids")
    p.add_argument("--backend", choices=["inprocess", "tcp"], default="inprocess", help="local mode only")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--figure", help="write a communication plot (local mode)")
    _add_encoding(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_mpc)

    p = sub.add_parser("threshold-run", help="answer pass/fail queries against a secret test set")
    p.add_argument("tests", help="CSV of test features with the label in the last column")
    p.add_argument("--tolerance", type=float, default=0.1)
    p.add_argument("--models", help="model file or directory of *.json models, queried in name order")
    p.add_argument("--base", help="base model for an adaptive hill-climb run")
    p.add_argument("--holdout", help="CSV used to estimate true means in hill-climb mode")
    p.add_argument("--rounds", type=int, help="hill-climb rounds (default: the budget k)")
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("--state", help="JSON file persisting the budget and noise state between runs")
    p.add_argument("--zero-noise", action="store_true", help="test mode: no Laplace noise")
    p.add_argument("--secure", action="store_true", help="compute scores under in-process MPC")
    p.add_argument("--seed", type=int, help="seed the noise (reproducible runs only; default: OS entropy)")
    p.add_argument("--verbose", action="store_true", help="stream verdicts to stderr")
    p.add_argument("--figure")
    _add_mechanism(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_threshold_run)

    p = sub.add_parser("params", help="derive epsilon, delta, n and k_max from (alpha, beta)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("attack", help="overfitting experiments")
    p.add_argument("--kind", choices=["hill-climb", "lemma1"], default="hill-climb")
    p.add_argument("--oracle", choices=["exact", "threshold", "both"], default="both")
    p.add_argument("--n", type=int, default=50, help="number of reused tests")
    p.add_argument("--rounds", dest="k_rounds", type=int, default=2500)
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("--trees", type=int, default=8)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--features", type=int, default=8)
    p.add_argument("--tolerance", type=float, default=0.15)
    p.add_argument("--domain", type=int, default=100, help="lemma1: size of the finite domain")
    p.add_argument("--labels", type=int, default=2, help="lemma1: number of labels")
    p.add_argument("--test-size", type=int, default=5, help="lemma1: size of the known test set")
    p.add_argument("--sample", type=int, default=10_000, help="lemma1: sample size for the error mass")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figure")
    _add_mechanism(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("gen-data", help="write a synthetic lending dataset")
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--features", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a toy boosted-tree model")
    p.add_argument("data")
    p.add_argument("--trees", type=int, default=32)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.3)
    p.add_argument("--quantize", action="store_true", help="round thresholds and leaves to the fixed-point grid")
    _add_encoding(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("demo-lending", help="end-to-end private loan scoring demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--applicants", type=int, default=5)
    p.add_argument("--train-rows", type=int, default=2000)
    p.add_argument("--backend", choices=["inprocess", "tcp"], default="inprocess")
    p.add_argument("--figure")
    p.add_argument("--out")
    p.set_defaults(func=cmd_demo_lending)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RangeError as exc:
        say(f"error: {exc}")
        return EXIT_RANGE
    except HandshakeError as exc:
        say(f"error: handshake failed: {exc}")
        return EXIT_HANDSHAKE
    except (TransportError, ProtocolError, ConnectionError, TimeoutError) as exc:
        say(f"error: transport failure: {exc}")
        return EXIT_TRANSPORT
    except BudgetExhausted as exc:
        say(f"error: {exc}")
        return EXIT_BUDGET
    except NoSolution as exc:
        say(f"error: {exc}")
        print(json.dumps({"error": "no_solution", "message": str(exc),
                          "diagnostics": exc.diagnostics}, indent=1, sort_keys=True, default=str))
        return EXIT_NO_SOLUTION
    except (SecureTestError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        say(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
