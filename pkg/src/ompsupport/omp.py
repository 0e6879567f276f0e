"""Threshold-stopped orthogonal matching pursuit and its genie counterpart.

The selection statistic is ``rho(t, j) = |a_j' P(t) y|^2 / ||P(t) y||^2``: the
squared correlation of column ``j`` with the projected measurement, normalized
by the projected energy (not by the column norm). OMP keeps adding the argmax
column while the maximum exceeds ``mu``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import ProjectionState, lstsq_on_support, project_append, selection_ratios
from .model import ProblemInstance


class GenieFailure(AssertionError):
    pass


@dataclass(frozen=True)
class IterationRecord:
    """Evaluation at step ``t``.

    ``index`` is the argmax ``i*(t)`` (``None`` when the residual vanished) and
    ``accepted`` says whether it was added to the support.
    """

    t: int
    index: int | None
    rho_star: float
    residual_norm_sq: float
    accepted: bool


@dataclass
class OmpTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = "threshold"

    @property
    def selected(self) -> list[int]:
        return [rec.index for rec in self.iterations if rec.accepted]

    @property
    def rho_star(self) -> np.ndarray:
        return np.array([rec.rho_star for rec in self.iterations])


@dataclass
class RecoveryResult:
    support_estimate: frozenset[int]
    trace: OmpTrace
    x_hat: np.ndarray | None = None


def _argmax(ratios: np.ndarray) -> int:
    # np.argmax returns the first maximizer, i.e. the lowest index on ties
    return int(np.argmax(ratios))


def run_omp(instance: ProblemInstance, mu: float, max_iter: int | None = None,
            debiased: bool = False) -> RecoveryResult:
    """Run OMP on ``instance`` with threshold ``mu``.

    Stops when ``rho*(t) <= mu``, when the projected measurement vanishes
    (``||P y||^2 <= 1e-14 ||y||^2``), or after ``max_iter`` selections
    (default ``m``).
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    a, y = instance.a, instance.y
    max_iter = instance.m if max_iter is None else max_iter
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    state = ProjectionState.initial(y)
    trace = OmpTrace()
    t = 0
    while True:
        if state.is_zero_residual():
            trace.iterations.append(
                IterationRecord(t, None, 0.0, state.residual_norm_sq, False))
            trace.stop_reason = "zero_residual"
            break
        if t >= max_iter:
            trace.stop_reason = "max_iterations"
            break
        ratios = selection_ratios(state, a)
        i = _argmax(ratios)
        rho = float(ratios[i])
        accept = rho > mu
        trace.iterations.append(
            IterationRecord(t, i, rho, state.residual_norm_sq, accept))
        if not accept:
            trace.stop_reason = "threshold"
            break
        state = project_append(state, a[:, i], i)
        t += 1
    support = frozenset(trace.selected)
    x_hat = debias(instance, support) if debiased else None
    return RecoveryResult(support, trace, x_hat)


@dataclass
class GreedyPath:
    """Unthresholded OMP path.

    ``selected[t]`` is the index chosen at step ``t`` and ``rho_star[t]`` the
    maximum ratio evaluated before that choice; ``rho_star`` carries one extra
    trailing entry for the state after the last selection (0 if the residual
    vanished). ``ratios`` optionally holds the full ``rho(t, j)`` table.
    """

    selected: np.ndarray
    rho_star: np.ndarray
    ratios: np.ndarray | None = None

    def stop_time(self, mu: float) -> int | None:
        """Number of selections OMP with threshold ``mu`` makes, if determined by the path."""
        below = np.nonzero(self.rho_star <= mu)[0]
        return int(below[0]) if below.size else None

    def support_for(self, mu: float) -> frozenset[int] | None:
        t = self.stop_time(mu)
        return None if t is None else frozenset(int(i) for i in self.selected[:t])


def _greedy(a: np.ndarray, y: np.ndarray, steps: int, candidates=None,
            keep_ratios: bool = False):
    """Greedy selection for ``steps`` steps, optionally restricted to ``candidates``.

    Ratios are always evaluated over all columns so that restricted (genie) and
    unrestricted runs share identical arithmetic.
    """
    n = a.shape[1]
    state = ProjectionState.initial(y)
    selected: list[int] = []
    rho_star: list[float] = []
    table = np.zeros((steps + 1, n)) if keep_ratios else None
    if candidates is not None:
        candidates = np.asarray(candidates, dtype=int)
        free = np.ones(candidates.size, dtype=bool)
    for t in range(steps + 1):
        if state.is_zero_residual():
            rho_star.append(0.0)
            break
        ratios = selection_ratios(state, a)
        if table is not None:
            table[t] = ratios
        if candidates is None:
            i = _argmax(ratios)
            rho_star.append(float(ratios[i]))
        else:
            sub = np.where(free, ratios[candidates], -np.inf)
            pos = _argmax(sub)
            i = int(candidates[pos])
            rho_star.append(float(ratios[i]))
            free[pos] = False
        if t == steps:
            break
        state = project_append(state, a[:, i], i)
        selected.append(i)
    return GreedyPath(np.array(selected, dtype=int), np.array(rho_star), table)


def omp_path(instance: ProblemInstance, steps: int, keep_ratios: bool = False) -> GreedyPath:
    """Greedy path of up to ``steps`` selections with no threshold.

    OMP with threshold ``mu`` selects exactly the prefix of this path that
    precedes the first ``rho_star <= mu``, so one path serves a whole grid of
    thresholds.
    """
    steps = min(steps, instance.m)
    return _greedy(instance.a, instance.y, steps, keep_ratios=keep_ratios)


def run_genie(instance: ProblemInstance) -> tuple[OmpTrace, np.ndarray]:
    """Genie OMP restricted to the true support, run for exactly ``k`` steps.

    Returns the trace and the ``(k+1) x n`` table of ``rho_true(t, j)`` for
    ``t = 0..k``. A row after a vanished residual is left at zero.
    """
    support = instance.signal.support
    k = support.size
    path = _greedy(instance.a, instance.y, k, candidates=support, keep_ratios=True)
    truth = instance.signal.support_set()
    if path.selected.size != k or not set(path.selected.tolist()) <= truth:
        raise GenieFailure(f"genie selected {path.selected.tolist()}, truth {sorted(truth)}")
    trace = OmpTrace(stop_reason="max_iterations")
    for t, i in enumerate(path.selected):
        trace.iterations.append(IterationRecord(t, int(i), float(path.rho_star[t]),
                                                float("nan"), True))
    return trace, path.ratios


def event_statistics(rho_table: np.ndarray, support) -> tuple[float, float]:
    """``(min_t<k max_{j in I} rho, max_t<=k max_{j not in I} rho)``.

    A missed detection at threshold ``mu`` is ``md_stat <= mu`` and a false
    alarm is ``fa_stat >= mu``.
    """
    support = np.asarray(sorted(support), dtype=int)
    k = support.size
    mask = np.zeros(rho_table.shape[1], dtype=bool)
    mask[support] = True
    md_stat = float(np.min(np.max(rho_table[:k][:, mask], axis=1)))
    off = rho_table[: k + 1][:, ~mask]
    fa_stat = float(np.max(off)) if off.size else 0.0
    return md_stat, fa_stat


def check_events(rho_table: np.ndarray, mu: float, support) -> tuple[bool, bool]:
    """Missed-detection and false-alarm events of the genie run at threshold ``mu``."""
    md_stat, fa_stat = event_statistics(rho_table, support)
    return md_stat <= mu, fa_stat >= mu


def debias(instance: ProblemInstance, support_estimate) -> np.ndarray:
    """Least-squares estimate of ``x`` restricted to ``support_estimate``."""
    return lstsq_on_support(instance.a, instance.y, support_estimate)
