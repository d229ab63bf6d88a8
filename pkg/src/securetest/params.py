"""Deriving mechanism parameters (epsilon, delta, n, k_max) from accuracy targets.

    epsilon = alpha / 13
    beta    = (8 delta / epsilon^5) ln(8/delta)^2 ln(2/epsilon)     solved for delta
    n       = ceil((2 / epsilon^2) ln(8/delta))
    k_max   = largest k with
              alpha n >= (ln k + ln(2k/beta)) sqrt(512 k ln(1/delta)) / epsilon

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .errors import InvalidParameter, NoSolution, PreconditionError

DELTA_FLOOR = 1e-300
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class AccuracyTarget:
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha <= 13:
            raise InvalidParameter(f"alpha must lie in (0, 13], got {self.alpha}")
        if not 0 < self.beta < 1:
            raise InvalidParameter(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class DerivedParams:
    alpha: float
    beta: float
    epsilon: float
    delta: float
    n: int
    k_max: int
    residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def beta_expression(epsilon: float, delta: float) -> float:
    """(8 delta / epsilon^5) ln(8/delta)^2 ln(2/epsilon)."""
    return math.exp(_log_beta_expression(epsilon, math.log(delta)))


def _log_beta_expression(epsilon: float, log_delta: float) -> float:
    # Log space keeps epsilon^-5 and delta near 1e-300 from over/underflowing.
    return (
        math.log(8) + log_delta - 5 * math.log(epsilon)
        + 2 * math.log(math.log(8) - log_delta)
        + math.log(math.log(2 / epsilon))
    )


def solve_delta(epsilon: float, beta: float, max_iter: int = 400) -> tuple[float, dict]:
    """Bisection on log(delta) over (1e-300, 1).

    delta * ln(8/delta)^2 is increasing for delta < 8/e^2, which covers the
    whole bracket, so the root is unique when it exists.
    """
    if not 0 < epsilon < 2:
        raise NoSolution("ln(2/epsilon) must be positive, so epsilon must lie in (0, 2)",
                         {"epsilon": epsilon})
    lo, hi = math.log(DELTA_FLOOR), math.log(1.0)
    target = math.log(beta)
    f_lo = _log_beta_expression(epsilon, lo) - target
    f_hi = _log_beta_expression(epsilon, hi) - target
    if f_lo > 0 or f_hi < 0:
        raise NoSolution(
            "beta equation has no root for delta in (1e-300, 1)",
            {"epsilon": epsilon, "beta": beta,
             "beta_at_delta_floor": math.exp(f_lo + target) if f_lo + target < 700 else math.inf,
             "beta_at_delta_one": beta_expression(epsilon, 1.0)},
        )
    iterations = 0
    while iterations < max_iter:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _log_beta_expression(epsilon, mid) - target < 0:
            lo = mid
        else:
            hi = mid
        iterations += 1
    candidates = [math.exp(lo), math.exp(hi)]
    delta = min(candidates, key=lambda d: abs(beta_expression(epsilon, d) - beta))
    residual = abs(beta_expression(epsilon, delta) - beta) / beta
    return delta, {"beta_residual_rel": residual, "bisection_iterations": iterations,
                   "bracket": [DELTA_FLOOR, 1.0]}


def sample_size(epsilon: float, delta: float) -> int:
    raw = (2 / epsilon**2) * math.log(8 / delta)
    # Guard ceil() against round-off when the exact value is an integer.
    return math.ceil(raw * (1 - 1e-12))


def check_k(n: float, alpha: float, beta: float, epsilon: float, delta: float, k: int) -> bool:
    """Whether k queries fit the explicit pass/fail accuracy condition."""
    if k < 1:
        raise InvalidParameter("k must be at least 1")
    rhs = (math.log(k) + math.log(2 * k / beta)) * math.sqrt(512 * k * math.log(1 / delta)) / epsilon
    return alpha * n >= rhs


def max_k(n: float, alpha: float, beta: float, epsilon: float, delta: float) -> int:
    """Largest k passing check_k (0 if even k = 1 fails).

    The right-hand side of the condition is increasing in k for k >= 1 and
    beta < 2, so exponential search followed by bisection finds the boundary.
    """
    if not check_k(n, alpha, beta, epsilon, delta, 1):
        return 0
    lo, hi = 1, 2
    while check_k(n, alpha, beta, epsilon, delta, hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if check_k(n, alpha, beta, epsilon, delta, mid):
            lo = mid
        else:
            hi = mid
    return lo


def derive(target: AccuracyTarget) -> DerivedParams:
    epsilon = target.alpha / 13
    delta, residuals = solve_delta(epsilon, target.beta)
    if residuals["beta_residual_rel"] > RESIDUAL_TOL:
        raise NoSolution("bisection did not reach the residual tolerance", residuals)
    n = sample_size(epsilon, delta)
    k = max_k(n, target.alpha, target.beta, epsilon, delta)
    residuals["k_boundary"] = {
        "check_k_max": k == 0 or check_k(n, target.alpha, target.beta, epsilon, delta, k),
        "check_k_max_plus_1": check_k(n, target.alpha, target.beta, epsilon, delta, k + 1),
    }
    return DerivedParams(target.alpha, target.beta, epsilon, delta, n, k, residuals)


def generalization_bound(epsilon: float, delta: float, k: int, n: float) -> tuple[float, float]:
    """(gap bound 13 epsilon, failure probability (2 k delta / epsilon) ln(2/epsilon))."""
    if k > n * n:
        raise PreconditionError(f"k = {k} exceeds n^2 = {n * n}")
    return 13 * epsilon, (2 * k * delta / epsilon) * math.log(2 / epsilon)
