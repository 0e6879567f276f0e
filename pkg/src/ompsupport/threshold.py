"""Measurement scaling laws and the threshold plan for threshold-stopped OMP.

All logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

FORCED_EPSILON = 0.01


class BelowScaling(ValueError):
    """``m`` does not exceed ``2 k_max ln(n - k_min)``."""


class NoFixedPoint(RuntimeError):
    pass


def m_theory(k: int, n: int) -> float:
    """Sufficient measurement count ``2 k ln(n - k)`` at the boundary delta = 0."""
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    return 2.0 * k * math.log(n - k)


def m_tropp_gilbert(k: int, n: int) -> float:
    """The older, conservative level ``4 k ln n``."""
    if k < 1 or n < 2:
        raise ValueError(f"need k >= 1 and n >= 2, got k={k}, n={n}")
    return 4.0 * k * math.log(n)


def m_donoho_tanner(k: int, m_current: float, n: int) -> float:
    """Right-hand side ``2 k ln(n / m)`` of the l1 scaling, for plot overlays."""
    if not 1 <= m_current <= n:
        raise ValueError(f"need 1 <= m_current <= n, got {m_current}")
    return 2.0 * k * math.log(n / m_current)


def donoho_tanner_fixed_point(k: int, n: int, tol: float = 1e-9,
                              max_steps: int = 200) -> float:
    """Solve ``m = 2 k ln(n / m)`` by fixed-point iteration from ``2 k ln n``.

    Non-normative reference curve only.
    """
    m = 2.0 * k * math.log(n)
    for _ in range(max_steps):
        if not 0 < m < n:
            break
        m_next = m_donoho_tanner(k, m, n)
        if abs(m_next - m) <= tol * max(1.0, m):
            return m_next
        m = m_next
    raise NoFixedPoint(f"no fixed point of m = 2k ln(n/m) found for k={k}, n={n}")


@dataclass(frozen=True)
class ThresholdPlan:
    m: int
    n: int
    k_min: int
    k_max: int
    delta: float
    epsilon: float
    mu: float
    reliable: bool = True

    def mu_lower_bound(self, k: int) -> float:
        """``2(1+eps) ln(n-k) / m``; the plan satisfies ``mu >=`` this for k >= k_min."""
        return 2.0 * (1.0 + self.epsilon) * math.log(self.n - k) / self.m

    def mu_upper_bound(self, k: int) -> float:
        """``1 / ((1+eps) k)``; the plan satisfies ``mu <=`` this for k <= k_max."""
        return 1.0 / ((1.0 + self.epsilon) * k)


def make_plan(m: int, n: int, k_min: int, k_max: int, force: bool = False) -> ThresholdPlan:
    """Threshold ``mu = 2(1+eps) ln(n - k_min) / m`` with the largest admissible eps.

    ``delta`` is the slack of ``m`` over ``2 k_max ln(n - k_min)`` and eps solves
    ``(1+delta)/(1+eps) = 1+eps``. When ``delta <= 0`` a :class:`BelowScaling`
    is raised unless ``force`` is set, in which case eps is clamped to
    ``FORCED_EPSILON`` and the plan is marked unreliable.
    """
    if not 1 <= k_min <= k_max or not k_max < n / 2:
        raise ValueError(f"need 1 <= k_min <= k_max < n/2, got {k_min}, {k_max}, n={n}")
    if m < 1:
        raise ValueError("m must be >= 1")
    log_term = math.log(n - k_min)
    delta = m / (2.0 * k_max * log_term) - 1.0
    reliable = delta > 0
    if reliable:
        epsilon = math.sqrt(1.0 + delta) - 1.0
    elif force:
        epsilon = FORCED_EPSILON
    else:
        raise BelowScaling(
            f"m={m} <= 2 k_max ln(n - k_min) = {2 * k_max * log_term:.6g}"
        )
    mu = 2.0 * (1.0 + epsilon) * log_term / m
    return ThresholdPlan(m, n, k_min, k_max, delta, epsilon, mu, reliable)


def mu_grid(m: int, n: int, points: int = 25) -> list[float]:
    """Geometric grid of thresholds on ``[0.1/m, 20 ln(n)/m]`` used for oracle tuning."""
    lo, hi = 0.1 / m, 20.0 * math.log(n) / m
    if points == 1:
        return [lo]
    ratio = (hi / lo) ** (1.0 / (points - 1))
    return [lo * ratio**i for i in range(points)]
