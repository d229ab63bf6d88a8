"""Differentially private pass/fail gate over a reusable secret test set.

Each query compares the noisy test-score sum against n * rho, where the noise
is Lap(sigma) + Lap(2 sigma) with sigma = sqrt(32 k ln(1/delta)) / epsilon.
The mechanism answers at most k queries.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import asdict, dataclass
from typing import Protocol

import numpy as np

from .circuit import DEFAULT_ENCODING, compile_gbt, decode_output, feature_input_bits, model_input_bits
from .circuit.ir import Owner
from .errors import BudgetExhausted, ConcurrentUseError, DimensionError, InvalidParameter, RangeError
from .gbt import score_tests
from .mpc import PROVIDER, eval_circuit_mpc


class Verdict(enum.IntEnum):
    FAIL = 0
    PASS = 1

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class ThresholdParams:
    epsilon: float
    delta: float
    k: int
    rho: float
    n: int

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParameter(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise InvalidParameter(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameter(f"k must be a positive integer, got {self.k}")
        if not 0 <= self.rho <= 1:
            raise InvalidParameter(f"rho must lie in [0, 1], got {self.rho}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameter(f"n must be a positive integer, got {self.n}")

    @property
    def sigma(self) -> float:
        return sigma(self)

    @property
    def cutoff(self) -> float:
        """The score sum a noiseless query has to exceed."""
        return self.n * self.rho


def sigma(params: ThresholdParams) -> float:
    return math.sqrt(32 * params.k * math.log(1 / params.delta)) / params.epsilon


class NoiseSource(Protocol):
    def sample_laplace(self, scale: float) -> float: ...


class LaplaceNoise:
    """Seedable Laplace sampler using the inverse CDF of a uniform stream."""

    def __init__(self, seed=None):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def sample_laplace(self, scale: float) -> float:
        u = self.rng.random() - 0.5  # in [-0.5, 0.5)
        while u == -0.5:
            u = self.rng.random() - 0.5
        return -scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))

    def sample_many(self, scale: float, size: int) -> np.ndarray:
        u = self.rng.random(size) - 0.5
        u[u == -0.5] = 0.0
        return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))

    def get_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state


class ZeroNoise:
    """Test-mode source: every draw is exactly 0."""

    def sample_laplace(self, scale: float) -> float:
        return 0.0


def sample_noise(source: NoiseSource, sigma_: float) -> float:
    """One draw of Lap(sigma) + Lap(2 sigma)."""
    return source.sample_laplace(sigma_) + source.sample_laplace(2 * sigma_)


class ThresholdMechanism:
    """Budgeted pass/fail oracle.

    Queries are strictly sequential: a call that overlaps another one raises
    ConcurrentUseError instead of silently interleaving budget updates.
    """

    def __init__(self, params: ThresholdParams, noise: NoiseSource | None = None, queries_used: int = 0):
        self.params = params
        self.noise = noise if noise is not None else LaplaceNoise()
        self.queries_used = queries_used
        self._sigma = sigma(params)
        self._lock = threading.Lock()
        if not 0 <= queries_used <= params.k:
            raise InvalidParameter("queries_used must lie in [0, k]")

    @property
    def sigma(self) -> float:
        return self._sigma

    @property
    def remaining(self) -> int:
        return self.params.k - self.queries_used

    def run_query(self, score_sum: float) -> Verdict:
        if not self._lock.acquire(blocking=False):
            raise ConcurrentUseError("threshold queries must not run concurrently")
        try:
            if self.queries_used >= self.params.k:
                raise BudgetExhausted(f"all {self.params.k} queries have been answered")
            if not 0 <= score_sum <= self.params.n:
                raise RangeError(f"score sum {score_sum} outside [0, {self.params.n}]")
            r = sample_noise(self.noise, self._sigma)
            self.queries_used += 1
            return Verdict.PASS if score_sum + r > self.params.cutoff else Verdict.FAIL
        finally:
            self._lock.release()

    def to_state(self) -> dict:
        state = {"params": asdict(self.params), "queries_used": self.queries_used}
        if isinstance(self.noise, LaplaceNoise):
            state["noise"] = {"kind": "laplace", "rng": self.noise.get_state()}
        elif isinstance(self.noise, ZeroNoise):
            state["noise"] = {"kind": "zero"}
        return state

    @classmethod
    def from_state(cls, state: dict) -> "ThresholdMechanism":
        params = ThresholdParams(**state["params"])
        noise_state = state.get("noise", {"kind": "laplace"})
        if noise_state["kind"] == "zero":
            noise = ZeroNoise()
        else:
            noise = LaplaceNoise()
            if "rng" in noise_state:
                noise.set_state(noise_state["rng"])
        return cls(params, noise, int(state["queries_used"]))


def aggregate_score(model, tests, *, secure: bool = False, enc=None, seed=None, backend: str = "inprocess") -> float:
    """Sum of tolerance-test scores of `model` over `tests` (a TestSet).

    In secure mode every prediction is computed under MPC, revealed only to the
    test owner's party, decoded and compared with its label there.
    """
    if not secure:
        return float(score_tests(model, tests).sum())
    return float(secure_scores(model, tests, enc=enc, seed=seed, backend=backend).sum())


def secure_scores(model, tests, *, enc=None, seed=None, backend: str = "inprocess") -> np.ndarray:
    enc = enc or DEFAULT_ENCODING
    if tests.X.shape[1] != model.n_features:
        raise DimensionError(f"tests have {tests.X.shape[1]} features, model expects {model.n_features}")
    if len(tests) == 0:
        return np.zeros(0)
    circuit = compile_gbt(model, enc)
    features = np.array([feature_input_bits(row, enc) for row in tests.X.tolist()], dtype=np.uint8).T
    inputs = {Owner.MODEL: model_input_bits(model, enc), Owner.TEST: features}
    operator = PROVIDER[Owner.TEST]
    result = eval_circuit_mpc(circuit, inputs, seed=seed, recipients=(operator,), backend=backend)
    bits = result.output(operator)
    preds = np.array([decode_output(bits[:, j], enc) for j in range(bits.shape[1])])
    return (np.abs(preds - tests.y) <= tests.tolerance).astype(float)
