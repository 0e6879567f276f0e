"""Normalized Brownian motion ``S(t) = B(t)/sqrt(t)`` and its tail bounds.

``S`` has unit variance at every time and ``E[S(s) S(t)] = sqrt(s/t)`` for
``s < t``. The same covariance appears for the normalized correlations of a
Gaussian vector with a nested sequence of projections of a fixed vector, which
is what lets the Brownian tail bounds control false alarms in OMP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .linalg import ProjectionState, project_append

CHUNK = 8192


@dataclass(frozen=True)
class NormalizedBmPath:
    times: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class TailBoundReport:
    a: float
    b: float
    mu: float
    empirical_prob: float
    bound_value: float
    paths: int
    exceedances: int

    def binomial_pvalue(self) -> float:
        """One-sided p-value of seeing this many exceedances if the true rate were the bound."""
        if self.bound_value >= 1.0:
            return 1.0
        return float(stats.binom.sf(self.exceedances - 1, self.paths, self.bound_value))


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d sequence")
    if times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and strictly increasing")
    return times


def sample_paths(times, paths: int, rng) -> np.ndarray:
    """``(paths, len(times))`` array of ``S(t_i)`` sampled exactly from independent increments."""
    times = _check_times(times)
    rng = np.random.default_rng(rng)
    steps = np.sqrt(np.diff(times, prepend=0.0))
    b = np.cumsum(rng.standard_normal((paths, times.size)) * steps, axis=1)
    return b / np.sqrt(times)


def sample_path(times, rng_seed) -> NormalizedBmPath:
    times = _check_times(times)
    return NormalizedBmPath(times, sample_paths(times, 1, rng_seed)[0])


def autocorrelation(s: float, t: float, paths: int, rng_seed) -> tuple[float, float]:
    """Sample mean of ``S(s) S(t)`` and its standard error."""
    vals = sample_paths([s, t], paths, rng_seed)
    prod = vals[:, 0] * vals[:, 1]
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(paths))


def gaussian_sq_tail(mu: float) -> float:
    """Exact ``Pr(X^2 > mu)`` for standard normal ``X``."""
    return float(special.erfc(math.sqrt(mu / 2.0)))


def gaussian_sq_tail_bound(mu: float) -> float:
    """Upper bound ``sqrt(2/(pi mu)) exp(-mu/2)`` on ``Pr(X^2 > mu)``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    return math.sqrt(2.0 / (math.pi * mu)) * math.exp(-mu / 2.0)


def smax_bound(a: float, b: float, mu: float) -> float:
    """``(2b / (a mu sqrt(pi))) exp(-a mu / (2b))`` bound on ``Pr(sup_[a,b] S^2 > mu)``."""
    if not 0 < a < b or not mu > 0:
        raise ValueError("need 0 < a < b and mu > 0")
    return 2.0 * b / (a * mu * math.sqrt(math.pi)) * math.exp(-a * mu / (2.0 * b))


def smax_refined_constants(delta: float = 1.0) -> tuple[float, float, float]:
    """Constants ``(C1, C2, C3)`` of the ``(C1 + C2 ln(b/a)) e^{-mu/2}`` bound for ``mu > C3``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    c1 = math.exp(delta / 2.0) / (math.sqrt(math.pi) * delta)
    return c1, 2.0 * c1, 2.0 * delta


def smax_refined_bound(a: float, b: float, mu: float, delta: float = 1.0) -> float:
    c1, c2, c3 = smax_refined_constants(delta)
    if not mu > c3:
        raise ValueError(f"bound requires mu > C3 = {c3}")
    return (c1 + c2 * math.log(b / a)) * math.exp(-mu / 2.0)


def smax_exceedance(a: float, b: float, mu: float, paths: int = 100_000,
                    grid_points: int = 512, rng_seed=0) -> TailBoundReport:
    """Monte Carlo ``Pr(max_i S(t_i)^2 > mu)`` on a geometric grid over ``[a, b]``.

    The grid maximum never exceeds the supremum, so the estimate is biased low,
    which is the safe direction for checking upper bounds.
    """
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    if grid_points < 2 or paths < 1:
        raise ValueError("need grid_points >= 2 and paths >= 1")
    times = np.geomspace(a, b, grid_points)
    rng = np.random.default_rng(rng_seed)
    hits = 0
    done = 0
    while done < paths:
        batch = min(CHUNK, paths - done)
        vals = sample_paths(times, batch, rng)
        hits += int(np.count_nonzero(np.max(vals * vals, axis=1) > mu))
        done += batch
    return TailBoundReport(a, b, mu, hits / paths, smax_bound(a, b, mu), paths, hits)


def nested_projection_rows(y, columns) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors ``P(i) y / ||P(i) y||`` and energies ``t_i = ||P(i) y||^2``.

    ``P(i)`` projects onto the orthogonal complement of the first ``i`` of
    ``columns`` (``i = 0..c``), so the energies are non-increasing in ``i``.
    """
    columns = np.asarray(columns, dtype=float)
    state = ProjectionState.initial(y)
    rows, energies = [], []
    for i in range(columns.shape[1] + 1):
        r = state.residual
        e = float(r @ r)
        rows.append(r / math.sqrt(e))
        energies.append(e)
        if i < columns.shape[1]:
            state = project_append(state, columns[:, i], i)
    return np.array(rows), np.array(energies)


def expected_projection_covariance(energies) -> np.ndarray:
    """``sqrt(min(t_i, t_j) / max(t_i, t_j))``, the normalized Brownian covariance."""
    t = np.asarray(energies, dtype=float)
    lo = np.minimum.outer(t, t)
    hi = np.maximum.outer(t, t)
    return np.sqrt(lo / hi)


def projection_sequence_covariance(y, columns, samples: int = 100_000,
                                   rng_seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance of ``z_i = y' P(i) a / ||P(i) y||`` over Gaussian ``a``.

    The nested projections are the complements of the growing spans of
    ``columns``. Returns ``(sample_cov, energies)``.
    """
    rows, energies = nested_projection_rows(y, columns)
    rng = np.random.default_rng(rng_seed)
    m = rows.shape[1]
    acc = np.zeros((rows.shape[0], rows.shape[0]))
    done = 0
    while done < samples:
        batch = min(CHUNK, samples - done)
        z = rng.standard_normal((batch, m)) @ rows.T
        acc += z.T @ z
        done += batch
    return acc / samples, energies
