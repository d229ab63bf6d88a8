"""Attacks on a reused test set and the harness that measures overfitting.

Two kinds of attacker live here: the lookup-table model that memorises a
known test set, and adaptive hill-climbers that only see the feedback an
oracle gives them (an exact score, or a thresholded pass/fail verdict).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import InvalidParameter
from .gbt import Dataset, GbtModel, SyntheticTask, TestSet, Tree, predict_batch, train_toy_gbt
from .threshold import NoiseSource, ThresholdMechanism, ThresholdParams, Verdict

# -- memorising a known test set ---------------------------------------------


@dataclass(frozen=True)
class LookupModel:
    """Answers correctly on the memorised points and wrongly everywhere else."""

    table: Mapping
    task: Callable
    labels: tuple

    def __call__(self, x):
        if x in self.table:
            return self.table[x]
        truth = self.task(x)
        return next(y for y in self.labels if y != truth)


def lemma1_attack(task: Callable, labels: Sequence, test_set: Iterable[Hashable]) -> LookupModel:
    """Build a model that agrees with `task` on `test_set` and disagrees off it."""
    labels = tuple(dict.fromkeys(labels))
    if len(labels) < 2:
        raise InvalidParameter("need at least two labels so that a wrong answer exists")
    table = {x: task(x) for x in test_set}
    return LookupModel(table, task, labels)


def empirical_measure(sample: Iterable[Hashable]) -> dict:
    """Exact empirical distribution of a sample, as Fractions."""
    counts: dict = {}
    total = 0
    for x in sample:
        counts[x] = counts.get(x, 0) + 1
        total += 1
    return {x: Fraction(c, total) for x, c in counts.items()}


def error_mass(model: Callable, task: Callable, measure: Mapping) -> Fraction | float:
    """measure({x : model(x) != task(x)}) for a discrete measure given as point weights."""
    return sum((w for x, w in measure.items() if model(x) != task(x)), Fraction(0))


def accuracy_on(model: Callable, task: Callable, points: Iterable) -> float:
    points = list(points)
    if not points:
        return 1.0
    return sum(model(x) == task(x) for x in points) / len(points)


# -- test distributions ------------------------------------------------------


class TestDistribution(Protocol):
    def sample(self, n: int, rng: np.random.Generator) -> TestSet: ...


@dataclass
class SyntheticTestDistribution:
    """Tolerance tests drawn from a hidden synthetic regression task."""

    __test__ = False

    task: SyntheticTask
    tolerance: float

    def sample(self, n: int, rng: np.random.Generator) -> TestSet:
        return TestSet.from_dataset(self.task.sample(n, rng), self.tolerance)

    def describe(self) -> dict:
        return {"kind": "synthetic", "n_features": self.task.n_features, "tolerance": self.tolerance}


@dataclass
class EmpiricalTestDistribution:
    """Resamples (with replacement) from a fixed pool of tests."""

    __test__ = False

    pool: TestSet

    def sample(self, n: int, rng: np.random.Generator) -> TestSet:
        idx = rng.integers(0, len(self.pool), n)
        return TestSet(self.pool.X[idx], self.pool.y[idx], self.pool.tolerance[idx])

    def describe(self) -> dict:
        return {"kind": "empirical", "pool_size": len(self.pool)}


# -- oracles -----------------------------------------------------------------


class ExactScoreOracle:
    """Reveals the raw test-score sum."""

    kind = "exact"

    def query(self, score_sum: float) -> float:
        return float(score_sum)

    def describe(self) -> dict:
        return {"kind": self.kind}


class ThresholdOracle:
    kind = "threshold"

    def __init__(self, params: ThresholdParams, noise: NoiseSource | None = None):
        self.mechanism = ThresholdMechanism(params, noise)

    @property
    def params(self) -> ThresholdParams:
        return self.mechanism.params

    def query(self, score_sum: float) -> Verdict:
        return self.mechanism.run_query(score_sum)

    def describe(self) -> dict:
        p = self.params
        out = {"kind": self.kind, "epsilon": p.epsilon, "delta": p.delta, "k": p.k,
               "rho": p.rho, "n": p.n, "sigma": self.mechanism.sigma}
        seed = getattr(self.mechanism.noise, "seed", None)
        if seed is not None:
            out["noise_seed"] = _jsonable(seed)
        return out


# -- attackers ---------------------------------------------------------------


@dataclass(frozen=True)
class Round:
    model: GbtModel
    feedback: object  # Verdict or float score sum


class AttackerStrategy(Protocol):
    def propose(self, history: Sequence[Round]) -> GbtModel: ...

    def final_model(self) -> GbtModel: ...


class FixedAttacker:
    """Ignores all feedback and always submits the same model."""

    def __init__(self, model: GbtModel):
        self.model = model

    def propose(self, history):
        return self.model

    def final_model(self):
        return self.model

    def describe(self) -> dict:
        return {"kind": "fixed"}


class HillClimbAttacker:
    """Random local search driven by oracle feedback.

    Each round perturbs the best-so-far model: one leaf value (or, with
    probability `threshold_prob`, one split threshold) gets Gaussian noise of
    standard deviation `scale`.  A proposal becomes the new best when it
    passes (threshold oracle) or scores at least as high as the best so far
    (exact oracle).  The very first proposal is the base model itself.
    """

    def __init__(self, base: GbtModel, scale: float, seed, threshold_prob: float = 0.2):
        if scale < 0:
            raise InvalidParameter("perturbation scale must be non-negative")
        self.base = base
        self.scale = scale
        self.seed = seed
        self.threshold_prob = threshold_prob
        self.rng = np.random.default_rng(seed)
        self.best = base
        self.best_score = -math.inf
        self._seen = 0

    def _absorb(self, history: Sequence[Round]) -> None:
        for rnd in history[self._seen:]:
            fb = rnd.feedback
            if isinstance(fb, Verdict):
                if fb is Verdict.PASS:
                    self.best = rnd.model
            elif fb >= self.best_score:
                self.best, self.best_score = rnd.model, fb
        self._seen = len(history)

    def propose(self, history: Sequence[Round]) -> GbtModel:
        self._absorb(history)
        if not history:
            return self.best
        return self.perturb(self.best)

    def perturb(self, model: GbtModel) -> GbtModel:
        if self.scale == 0 or not model.trees:
            return model
        t = int(self.rng.integers(model.n_trees))
        tree = model.trees[t]
        step = float(self.rng.normal(0.0, self.scale))
        if self.rng.random() < self.threshold_prob:
            i = int(self.rng.integers(len(tree.thresholds)))
            thresholds = list(tree.thresholds)
            thresholds[i] += step
            tree = Tree(tree.features, tuple(thresholds), tree.leaves)
        else:
            j = int(self.rng.integers(len(tree.leaves)))
            leaves = list(tree.leaves)
            leaves[j] += step
            tree = Tree(tree.features, tree.thresholds, tuple(leaves))
        trees = list(model.trees)
        trees[t] = tree
        return replace(model, trees=tuple(trees))

    def final_model(self) -> GbtModel:
        return self.best

    def describe(self) -> dict:
        return {"kind": "hill-climb", "scale": self.scale, "seed": _jsonable(self.seed),
                "threshold_prob": self.threshold_prob}


def hill_climb_attacker(base: GbtModel, scale: float, seed) -> HillClimbAttacker:
    return HillClimbAttacker(base, scale, seed)


# -- experiment --------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


@dataclass
class ExperimentReport:
    parameters: dict
    seeds: dict
    rounds: list
    summary: dict
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {"parameters": self.parameters, "seeds": self.seeds,
               "rounds": self.rounds, "summary": self.summary}
        if include_timing:
            out["timing"] = self.timing
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=1, sort_keys=True)

    @property
    def sup_gap(self) -> float:
        return self.summary["sup_gap"]

    @property
    def final_gap(self) -> float:
        return self.summary["final_gap"]


def _means(model: GbtModel, tests: TestSet, holdout: TestSet) -> tuple[float, float]:
    X = np.concatenate([tests.X, holdout.X])
    pred = predict_batch(model, X)
    y = np.concatenate([tests.y, holdout.y])
    tol = np.concatenate([tests.tolerance, holdout.tolerance])
    hits = np.abs(pred - y) <= tol
    n = len(tests)
    return float(hits[:n].mean()) if n else 0.0, float(hits[n:].mean())


def run_experiment(oracle, attacker, distribution, n: int, k: int, seed,
                   holdout_factor: int = 10) -> ExperimentReport:
    """Run k adaptive rounds of `attacker` against `oracle` on n tests from `distribution`.

    True means E_t[t(M)] are Monte Carlo estimates on a fresh holdout of
    holdout_factor * n tests; their standard errors are reported alongside.
    """
    if n < 1:
        raise InvalidParameter("need n >= 1")
    rng = np.random.default_rng(seed)
    tests = distribution.sample(n, rng)
    holdout = distribution.sample(holdout_factor * n, rng)
    report = run_rounds(oracle, attacker, tests, holdout, k)
    if hasattr(distribution, "describe"):
        report.parameters["distribution"] = distribution.describe()
    report.seeds["experiment"] = _jsonable(seed)
    return report


def run_rounds(oracle, attacker, tests: TestSet, holdout: TestSet, k: int,
               on_round: Callable | None = None) -> ExperimentReport:
    """The adaptive loop on a fixed test set, with `holdout` standing in for the true distribution.

    If the oracle refuses a query (budget exhausted) the exception propagates
    after `on_round` has seen every answered round.
    """
    n, m = len(tests), len(holdout)
    if n < 1 or m < 1 or k < 0:
        raise InvalidParameter("need at least one test, one holdout test and k >= 0")
    if isinstance(oracle, ThresholdOracle) and oracle.params.n != n:
        raise InvalidParameter(f"threshold oracle was built for n = {oracle.params.n}, not {n}")

    history: list[Round] = []
    rounds = []
    confusion = {"pass_above": 0, "pass_below": 0, "fail_above": 0, "fail_below": 0}
    rho = oracle.params.rho if isinstance(oracle, ThresholdOracle) else None
    for i in range(k):
        model = attacker.propose(history)
        emp, true = _means(model, tests, holdout)
        feedback = oracle.query(emp * n)
        history.append(Round(model, feedback))
        row = {"query": i + 1, "empirical_mean": emp, "true_mean": true,
               "true_mean_stderr": math.sqrt(true * (1 - true) / m), "gap": emp - true}
        if isinstance(feedback, Verdict):
            row["verdict"] = str(feedback)
            side = "above" if true >= rho else "below"
            confusion[f"{feedback}_{side}"] += 1
        else:
            row["score"] = feedback
        rounds.append(row)
        if on_round is not None:
            on_round(row)

    # Let the attacker absorb the last feedback before asking for its pick.
    if hasattr(attacker, "_absorb"):
        attacker._absorb(history)
    final = attacker.final_model()
    f_emp, f_true = _means(final, tests, holdout) if k else (0.0, 0.0)
    summary = {
        "rounds": k,
        "sup_gap": max((abs(r["gap"]) for r in rounds), default=0.0),
        "final_empirical_mean": f_emp,
        "final_true_mean": f_true,
        "final_gap": f_emp - f_true,
        "final_true_mean_stderr": math.sqrt(f_true * (1 - f_true) / m) if k else 0.0,
    }
    if rho is not None:
        summary["confusion"] = confusion
    params = {
        "n": n, "k": k, "holdout_size": m,
        "oracle": oracle.describe(),
        "attacker": attacker.describe() if hasattr(attacker, "describe") else {},
    }
    seeds = {}
    if getattr(attacker, "seed", None) is not None:
        seeds["attacker"] = _jsonable(attacker.seed)
    return ExperimentReport(params, seeds, rounds, summary)


# -- canned setups -----------------------------------------------------------


@dataclass(frozen=True)
class AttackSetup:
    distribution: SyntheticTestDistribution
    base_model: GbtModel
    train: Dataset


def standard_setup(seed: int, n_features: int = 8, n_trees: int = 8, depth: int = 3,
                   tolerance: float = 0.15, train_rows: int = 400) -> AttackSetup:
    """A synthetic task plus a toy base model trained on data disjoint from any test draw."""
    task = SyntheticTask(n_features, seed, noise=0.15)
    train = task.sample(train_rows, np.random.default_rng([seed, 99]))
    base = train_toy_gbt(train, n_trees, depth, learning_rate=0.3)
    return AttackSetup(SyntheticTestDistribution(task, tolerance), base, train)
