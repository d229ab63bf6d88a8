"""Gradient-boosted regression trees: model types, prediction, I/O and a toy trainer.

Trees are complete binary trees of uniform depth stored in heap order: internal
node i has children 2i+1 and 2i+2, and leaf j of a depth-D tree sits at heap
position 2**D - 1 + j.  Descent goes left iff ``x[feature] < threshold``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DimensionError, ModelFormatError, StructureError


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class Tree:
    features: tuple
    thresholds: tuple
    leaves: tuple

    def __post_init__(self):
        n_leaves = len(self.leaves)
        if n_leaves < 1 or n_leaves & (n_leaves - 1):
            raise StructureError(f"a complete tree needs 2**D leaves, got {n_leaves}")
        if len(self.features) != n_leaves - 1 or len(self.thresholds) != n_leaves - 1:
            raise StructureError("internal node arrays must have 2**D - 1 entries")

    @property
    def depth(self) -> int:
        return len(self.leaves).bit_length() - 1

    @classmethod
    def from_node(cls, root: TreeNode) -> "Tree":
        depth = _node_depth(root)
        features, thresholds = [0] * (2**depth - 1), [0.0] * (2**depth - 1)
        leaves = [0.0] * 2**depth
        frontier = [(root, 0)]
        while frontier:
            node, pos = frontier.pop()
            if isinstance(node, Leaf):
                leaves[pos - (2**depth - 1)] = node.value
            else:
                features[pos] = node.feature
                thresholds[pos] = node.threshold
                frontier.append((node.left, 2 * pos + 1))
                frontier.append((node.right, 2 * pos + 2))
        return cls(tuple(features), tuple(thresholds), tuple(leaves))

    def to_node(self, pos: int = 0) -> TreeNode:
        n_internal = len(self.features)
        if pos >= n_internal:
            return Leaf(self.leaves[pos - n_internal])
        return Split(self.features[pos], self.thresholds[pos],
                     self.to_node(2 * pos + 1), self.to_node(2 * pos + 2))

    def leaf_index(self, x: Sequence[float]) -> int:
        pos = 0
        n_internal = len(self.features)
        while pos < n_internal:
            pos = 2 * pos + (1 if x[self.features[pos]] < self.thresholds[pos] else 2)
        return pos - n_internal


def _node_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    dl, dr = _node_depth(node.left), _node_depth(node.right)
    if dl != dr:
        raise StructureError("tree is not complete: leaves at different depths")
    return dl + 1


@dataclass(frozen=True)
class GbtModel:
    n_features: int
    depth: int
    trees: tuple
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_features < 1:
            raise StructureError("a model needs at least one feature")
        if self.depth < 1:
            raise StructureError("tree depth must be at least 1")
        for t, tree in enumerate(self.trees):
            if tree.depth != self.depth:
                raise StructureError(f"tree {t} has depth {tree.depth}, expected {self.depth}")
            for f in tree.features:
                if not 0 <= f < self.n_features:
                    raise StructureError(f"tree {t} uses feature {f} outside 0..{self.n_features - 1}")
            if not all(math.isfinite(v) for v in tree.thresholds + tree.leaves):
                raise StructureError(f"tree {t} has a non-finite threshold or leaf")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_trees, self.depth, self.n_features)

    def map_values(self, fn) -> "GbtModel":
        """Apply fn to every threshold and leaf value."""
        trees = tuple(
            Tree(t.features, tuple(fn(v) for v in t.thresholds), tuple(fn(v) for v in t.leaves))
            for t in self.trees
        )
        return replace(self, trees=trees)


def predict(model: GbtModel, features: Sequence[float]) -> float:
    if len(features) != model.n_features:
        raise DimensionError(f"model expects {model.n_features} features, got {len(features)}")
    return float(sum(tree.leaves[tree.leaf_index(features)] for tree in model.trees))


def predict_batch(model: GbtModel, X) -> np.ndarray:
    """Vectorised predict over the rows of X."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionError(f"expected an (m, {model.n_features}) array, got {X.shape}")
    out = np.zeros(X.shape[0])
    rows = np.arange(X.shape[0])
    for tree in model.trees:
        feats = np.asarray(tree.features, dtype=np.int64)
        thr = np.asarray(tree.thresholds)
        pos = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(model.depth):
            go_left = X[rows, feats[pos]] < thr[pos]
            pos = 2 * pos + np.where(go_left, 1, 2)
        out += np.asarray(tree.leaves)[pos - len(feats)]
    return out


# -- tests -------------------------------------------------------------------


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    features: tuple
    label: float
    tolerance: float

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class TestSet:
    """A batch of tolerance tests stored column-wise."""

    __test__ = False

    X: np.ndarray
    y: np.ndarray
    tolerance: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_dataset(cls, data: "Dataset", tolerance: float) -> "TestSet":
        if not tolerance > 0:
            raise ValueError("tolerance must be positive")
        return cls(data.X, data.y, np.full(len(data.y), float(tolerance)))

    def case(self, i: int) -> TestCase:
        return TestCase(tuple(self.X[i].tolist()), float(self.y[i]), float(self.tolerance[i]))


def test_score(test: TestCase, model: GbtModel) -> float:
    """1 if the prediction lands within the (inclusive) tolerance of the label, else 0."""
    return 1.0 if abs(predict(model, test.features) - test.label) <= test.tolerance else 0.0


test_score.__test__ = False


def score_tests(model: GbtModel, tests: TestSet) -> np.ndarray:
    pred = predict_batch(model, tests.X)
    return (np.abs(pred - tests.y) <= tests.tolerance).astype(float)


# -- datasets ----------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionError("dataset must be an (m, d) matrix with m labels")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset values must be finite")
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"f{i}" for i in range(self.X.shape[1])))

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.y)

    @property
    def rows(self):
        return list(zip(self.X.tolist(), self.y.tolist()))


class SyntheticTask:
    """Hidden linear-plus-step regression target over standard normal features.

    The label mimics a log repayment ratio: mostly small positive values with a
    tail of defaults pulled negative by the step term.
    """

    def __init__(self, n_features: int, seed: int, noise: float = 0.1):
        rng = np.random.default_rng([seed, 0])
        self.n_features = n_features
        self.weights = rng.normal(0.0, 1.0 / math.sqrt(max(n_features, 1)), n_features)
        self.step_feature = int(rng.integers(n_features)) if n_features else 0
        self.step_at = float(rng.normal(0.5, 0.25))
        self.step_size = -0.6
        self.bias = 0.1
        self.noise = noise

    def target(self, X: np.ndarray) -> np.ndarray:
        y = self.bias + 0.3 * X @ self.weights
        if self.n_features:
            y = y + self.step_size * (X[:, self.step_feature] > self.step_at)
        return y

    def sample(self, n_rows: int, rng: np.random.Generator) -> Dataset:
        X = np.round(rng.normal(0.0, 1.0, (n_rows, self.n_features)), 4)
        y = np.round(self.target(X) + rng.normal(0.0, self.noise, n_rows), 4)
        return Dataset(X, y)


def gen_synthetic(n_rows: int, n_features: int, seed: int) -> Dataset:
    if n_rows < 0 or n_features < 1:
        raise ValueError("need n_rows >= 0 and n_features >= 1")
    task = SyntheticTask(n_features, seed)
    return task.sample(n_rows, np.random.default_rng([seed, 1]))


def load_dataset(path) -> Dataset:
    """Read a CSV with a header row; the last column is the label."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ModelFormatError(f"{path}: empty CSV, expected a header row") from None
        if len(header) < 2:
            raise ModelFormatError(f"{path}: need at least one feature column and a label")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ModelFormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ModelFormatError(f"{path}:{lineno}: {exc}") from None
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    try:
        return Dataset(data[:, :-1], data[:, -1], tuple(header[:-1]))
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None


def save_dataset(data: Dataset, path, label_name: str = "label") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + [label_name])
        for x, y in zip(data.X.tolist(), data.y.tolist()):
            writer.writerow([repr(v) for v in x] + [repr(y)])


# -- model files -------------------------------------------------------------

_MODEL_KEYS = {"n_features", "depth", "trees"}
_OPTIONAL_KEYS = {"metadata"}


def _node_from_json(obj, where: str) -> TreeNode:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{where}: node must be an object")
    keys = set(obj)
    if keys == {"value"}:
        return Leaf(_number(obj["value"], where + ".value"))
    if keys == {"feature", "threshold", "left", "right"}:
        feature = obj["feature"]
        if not isinstance(feature, int) or isinstance(feature, bool):
            raise ModelFormatError(f"{where}.feature: expected an integer")
        return Split(
            feature,
            _number(obj["threshold"], where + ".threshold"),
            _node_from_json(obj["left"], where + ".left"),
            _node_from_json(obj["right"], where + ".right"),
        )
    raise ModelFormatError(f"{where}: unexpected node keys {sorted(keys)}")


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ModelFormatError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def _node_to_json(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"value": node.value}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": _node_to_json(node.left), "right": _node_to_json(node.right)}


def model_from_json(obj) -> GbtModel:
    if not isinstance(obj, dict):
        raise ModelFormatError("model: top level must be an object")
    unknown = set(obj) - _MODEL_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ModelFormatError(f"model: unknown keys {sorted(unknown)}")
    missing = _MODEL_KEYS - set(obj)
    if missing:
        raise ModelFormatError(f"model: missing keys {sorted(missing)}")
    for key in ("n_features", "depth"):
        if not isinstance(obj[key], int) or isinstance(obj[key], bool):
            raise ModelFormatError(f"model.{key}: expected an integer")
    if not isinstance(obj["trees"], list):
        raise ModelFormatError("model.trees: expected a list")
    metadata = obj.get("metadata", {})
    if not isinstance(metadata, dict) or not all(isinstance(v, str) for v in metadata.values()):
        raise ModelFormatError("model.metadata: expected a map of strings")
    try:
        trees = tuple(Tree.from_node(_node_from_json(t, f"trees[{i}]")) for i, t in enumerate(obj["trees"]))
        return GbtModel(obj["n_features"], obj["depth"], trees, dict(metadata))
    except StructureError as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(str(exc)) from None


def model_to_json(model: GbtModel) -> dict:
    out = {
        "n_features": model.n_features,
        "depth": model.depth,
        "trees": [_node_to_json(t.to_node()) for t in model.trees],
    }
    if model.metadata:
        out["metadata"] = dict(model.metadata)
    return out


def load_model(path) -> GbtModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON: {exc}") from None
    return model_from_json(obj)


def save_model(model: GbtModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), indent=1) + "\n")


# -- training ----------------------------------------------------------------

MAX_CANDIDATES = 64


def _best_split(X: np.ndarray, r: np.ndarray):
    """Greedy variance-reduction split over at most MAX_CANDIDATES thresholds per feature."""
    m = len(r)
    if m < 2:
        return None
    total = r.sum()
    base = total * total / m
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, rs = X[order, j], r[order]
        change = np.flatnonzero(xs[1:] != xs[:-1]) + 1  # candidate left sizes
        if not len(change):
            continue
        if len(change) > MAX_CANDIDATES:
            change = change[np.linspace(0, len(change) - 1, MAX_CANDIDATES).round().astype(int)]
        csum = np.cumsum(rs)
        left_sum = csum[change - 1]
        gain = left_sum**2 / change + (total - left_sum) ** 2 / (m - change) - base
        k = int(np.argmax(gain))
        if best is None or gain[k] > best[0] + 1e-12:
            p = change[k]
            best = (gain[k], j, 0.5 * (xs[p - 1] + xs[p]))
    if best is None or best[0] <= 0:
        return None
    return best[1], float(best[2])


def _fit_tree(X: np.ndarray, r: np.ndarray, depth: int, lr: float, offset: float) -> Tree:
    n_internal = 2**depth - 1
    features = [0] * n_internal
    thresholds = [0.0] * n_internal
    leaves = [0.0] * 2**depth
    # (heap position, sample indices, fallback mean for empty nodes)
    frontier = [(0, np.arange(len(r)), float(r.mean()) if len(r) else 0.0)]
    while frontier:
        pos, idx, fallback = frontier.pop()
        mean = float(r[idx].mean()) if len(idx) else fallback
        if pos >= n_internal:
            leaves[pos - n_internal] = offset + lr * mean
            continue
        split = _best_split(X[idx], r[idx])
        if split is None:
            j, thr = 0, 0.0  # no useful split; any fixed partition keeps the fit valid
        else:
            j, thr = split
        features[pos], thresholds[pos] = j, thr
        go_left = X[idx, j] < thr
        frontier.append((2 * pos + 1, idx[go_left], mean))
        frontier.append((2 * pos + 2, idx[~go_left], mean))
    return Tree(tuple(features), tuple(thresholds), tuple(leaves))


def train_toy_gbt(
    data: Dataset, n_trees: int, depth: int, learning_rate: float = 0.3, *, history: list | None = None
) -> GbtModel:
    """Least-squares gradient boosting on complete trees of fixed depth.

    The label mean is folded into the first tree's leaves so the ensemble has no
    separate bias term.  If `history` is given, the training MSE after each
    round is appended to it.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if depth < 1 or n_trees < 1:
        raise ValueError("need depth >= 1 and n_trees >= 1")
    if not 0 < learning_rate <= 1:
        raise ValueError("learning_rate must lie in (0, 1]")
    X, y = data.X, data.y
    pred = np.zeros(len(y))
    trees = []
    for t in range(n_trees):
        offset = float(y.mean()) if t == 0 else 0.0
        tree = _fit_tree(X, y - pred - offset, depth, learning_rate, offset)
        trees.append(tree)
        model = GbtModel(data.n_features, depth, tuple(trees))
        pred = predict_batch(model, X)
        if history is not None:
            history.append(float(np.mean((pred - y) ** 2)))
    return GbtModel(data.n_features, depth, tuple(trees),
                    {"trainer": "least-squares boosting", "learning_rate": repr(learning_rate)})
