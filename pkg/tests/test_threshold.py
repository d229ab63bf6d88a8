import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy import stats as sps

from securetest.errors import BudgetExhausted, ConcurrentUseError, InvalidParameter, RangeError
from securetest.gbt import GbtModel, TestSet, Tree, predict_batch
from securetest.threshold import (
    LaplaceNoise,
    ThresholdMechanism,
    ThresholdParams,
    Verdict,
    ZeroNoise,
    aggregate_score,
    sample_noise,
    secure_scores,
    sigma,
)

from conftest import random_features, random_model


def conv_cdf(x, s):
    """Pr[Lap(s) + Lap(2s) <= x] by numeric convolution of the two laws."""
    f = lambda u: sps.laplace.pdf(u, scale=s) * sps.laplace.cdf(x - u, scale=2 * s)  # noqa: E731
    val, _ = integrate.quad(f, -60 * s, 60 * s, points=[0.0, x], limit=200)
    return val


def test_sigma_examples():
    assert sigma(ThresholdParams(1.0, math.exp(-2), 2, 0.5, 10)) == pytest.approx(math.sqrt(128))
    assert sigma(ThresholdParams(1.0, math.exp(-1), 1, 0.5, 10)) == pytest.approx(5.6569, abs=1e-4)
    a = ThresholdParams(0.5, 1e-6, 7, 0.5, 10).sigma
    b = ThresholdParams(1.0, 1e-6, 7, 0.5, 10).sigma
    assert a == 2 * b


@pytest.mark.parametrize("kw", [
    dict(epsilon=0, delta=0.1, k=1, rho=0.5, n=10),
    dict(epsilon=1, delta=1.0, k=1, rho=0.5, n=10),
    dict(epsilon=1, delta=0.1, k=0, rho=0.5, n=10),
    dict(epsilon=1, delta=0.1, k=1, rho=1.5, n=10),
    dict(epsilon=1, delta=0.1, k=1, rho=0.5, n=0),
])
def test_invalid_params(kw):
    with pytest.raises(InvalidParameter):
        ThresholdParams(**kw)


def test_zero_noise():
    assert sample_noise(ZeroNoise(), 10.0) == 0.0


def test_laplace_mean_and_spread():
    src = LaplaceNoise(1)
    b = 3.0
    x = src.sample_many(b, 100_000)
    assert abs(x.mean()) <= 3 * math.sqrt(2) * b / math.sqrt(1e5)
    assert x.var() == pytest.approx(2 * b * b, rel=0.03)
    single = np.array([LaplaceNoise(2).sample_laplace(b) for _ in range(10)])
    assert np.all(np.isfinite(single))


def test_noise_cdf_matches_convolution():
    s = 2.0
    src = LaplaceNoise(7)
    draws = np.sort(src.sample_many(s, 100_000) + src.sample_many(2 * s, 100_000))
    grid = np.linspace(-12 * s, 12 * s, 61)
    emp = np.searchsorted(draws, grid, side="right") / len(draws)
    ref = np.array([conv_cdf(x, s) for x in grid])
    assert np.max(np.abs(emp - ref)) <= 0.01


def test_closed_form_pass_probability_matches_convolution():
    from securetest.plotting import pass_probability

    for s in (1.0, 5.6569):
        for off in (-2, -1, -0.3, 0, 0.5, 1, 2):
            x = off * s
            # pass iff x + noise > 0 iff noise > -x
            assert pass_probability(x, s) == pytest.approx(1 - conv_cdf(-x, s), abs=1e-7)


def test_verdicts_without_noise():
    p = ThresholdParams(1.0, 0.1, 2, 0.7, 10)
    m = ThresholdMechanism(p, ZeroNoise())
    assert m.run_query(8) is Verdict.PASS
    assert m.run_query(7) is Verdict.FAIL  # strict inequality at the cutoff
    assert str(Verdict.PASS) == "pass"


def test_tie_passes_half_the_time():
    p = ThresholdParams(1.0, math.exp(-1), 1, 0.5, 100)
    noise = LaplaceNoise(123)
    hits = sum(sample_noise(noise, p.sigma) + 50 > 50 for _ in range(100_000))
    assert abs(hits / 100_000 - 0.5) <= 0.01


def test_budget_enforced():
    p = ThresholdParams(1.0, 0.1, 3, 0.5, 10)
    m = ThresholdMechanism(p, LaplaceNoise(0))
    for _ in range(3):
        m.run_query(5)
    assert m.remaining == 0
    for _ in range(2):
        with pytest.raises(BudgetExhausted):
            m.run_query(5)
    assert m.queries_used == 3


def test_score_range_checked():
    m = ThresholdMechanism(ThresholdParams(1.0, 0.1, 3, 0.5, 10), ZeroNoise())
    with pytest.raises(RangeError):
        m.run_query(11)
    assert m.queries_used == 0


def test_state_round_trip_continues_stream():
    p = ThresholdParams(0.5, 1e-3, 10, 0.5, 40)
    a = ThresholdMechanism(p, LaplaceNoise(5))
    for _ in range(4):
        a.run_query(20)
    b = ThresholdMechanism.from_state(a.to_state())
    assert b.queries_used == 4 and b.params == p
    # the restored noise stream continues where the original left off
    assert a.noise.sample_laplace(1.0) == b.noise.sample_laplace(1.0)


def test_concurrent_use_rejected():
    started, release = threading.Event(), threading.Event()

    class SlowNoise:
        def sample_laplace(self, scale):
            started.set()
            release.wait(5)
            return 0.0

    m = ThresholdMechanism(ThresholdParams(1.0, 0.1, 5, 0.5, 10), SlowNoise())
    t = threading.Thread(target=m.run_query, args=(6,))
    t.start()
    started.wait(5)
    with pytest.raises(ConcurrentUseError):
        m.run_query(6)
    release.set()
    t.join()
    assert m.queries_used == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.integers(0, 2**32 - 1))
def test_verdict_monotone_in_score(s1, s2, seed):
    lo, hi = sorted((s1, s2))
    p = ThresholdParams(1.0, 0.01, 1, 0.5, 100)
    v_lo = ThresholdMechanism(p, LaplaceNoise(seed)).run_query(lo)
    v_hi = ThresholdMechanism(p, LaplaceNoise(seed)).run_query(hi)
    assert v_lo <= v_hi


def _const_model(v, n_features=2):
    return GbtModel(n_features, 1, (Tree((0,), (0.0,), (v, v)),))


def test_aggregate_extremes():
    X = np.zeros((7, 2))
    tests = TestSet(X, np.full(7, 1.0), np.full(7, 0.1))
    assert aggregate_score(_const_model(1.0), tests) == 7
    assert aggregate_score(_const_model(5.0), tests) == 0
    assert aggregate_score(_const_model(1.0), tests, secure=True, seed=1) == 7
    assert aggregate_score(_const_model(5.0), tests, secure=True, seed=1) == 0


def test_plaintext_and_secure_scores_agree():
    rng = np.random.default_rng(3)
    for i in range(20):
        model = random_model(rng, 2, 2, 3)
        X = random_features(rng, 3, rows=8)
        y = predict_batch(model, X) + rng.normal(0, 0.3, 8)
        tests = TestSet(X, y, np.full(8, 0.25))
        plain = (np.abs(predict_batch(model, X) - y) <= 0.25).astype(float)
        assert secure_scores(model, tests, seed=i).tolist() == plain.tolist()
        assert aggregate_score(model, tests, secure=True, seed=i) == aggregate_score(model, tests)
