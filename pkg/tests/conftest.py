from __future__ import annotations

import numpy as np
import pytest

from securetest.circuit import DEFAULT_ENCODING
from securetest.gbt import GbtModel, Tree


def random_model(rng, n_trees, depth, n_features, enc=DEFAULT_ENCODING, leaf_scale=1.0):
    """Random ensemble on the fixed-point grid (so plaintext and circuit agree on ties)."""
    q = enc.resolution
    trees = []
    for _ in range(n_trees):
        internal = 2**depth - 1
        feats = tuple(int(v) for v in rng.integers(0, n_features, internal))
        thr = tuple(float(v) for v in np.round(rng.normal(0, 1, internal) / q) * q)
        leaves = tuple(float(v) for v in np.round(rng.uniform(-leaf_scale, leaf_scale, 2**depth) / q) * q)
        trees.append(Tree(feats, thr, leaves))
    return GbtModel(n_features, depth, tuple(trees))


def random_features(rng, n_features, enc=DEFAULT_ENCODING, rows=None):
    q = enc.resolution
    shape = (n_features,) if rows is None else (rows, n_features)
    return np.round(rng.normal(0, 1.2, shape) / q) * q


def reference_predict(model, x):
    """Straight-line tree walk written independently of the package's predict."""
    total = 0.0
    for tree in model.trees:
        node = 0
        for _ in range(model.depth):
            go_left = x[tree.features[node]] < tree.thresholds[node]
            node = 2 * node + (1 if go_left else 2)
        total += tree.leaves[node - (2**model.depth - 1)]
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def stump():
    return GbtModel(1, 1, (Tree((0,), (0.5,), (-1.0, 1.0)),))


# -- per-criterion summary for the acceptance suite --------------------------

_CRITERIA: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if not marker:
        return
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA.setdefault(marker, []).append(report.outcome)


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcomes = _CRITERIA[n]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({len(outcomes)} checks)")
