"""Monte Carlo sweeps over (k, m): OMP error rates and genie event rates.

Every trial is a pure function of its derived seed, so a sweep gives the same
report for any worker count. One unthresholded greedy path per trial is enough
to score OMP at every threshold on the oracle grid (see ``omp_path``), and the
genie table is taken from that same path whenever the path's first ``k``
selections are the true support.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .model import SignalSpec, derive_seed, generate_instance
from .omp import event_statistics, omp_path, run_genie
from .threshold import m_theory, m_tropp_gilbert, make_plan, mu_grid

CSV_FIELDS = ("k", "m", "mu", "error_prob", "stderr", "md_rate", "fa_rate", "trials", "seed")
THREADS_ENV = "OMPSUPPORT_THREADS"
TRIAL_CHUNK = 250


class ConfigInvalid(ValueError):
    pass


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SweepConfig:
    n: int
    k_values: tuple[int, ...]
    m_values: tuple[int, ...]
    snr_db: float = math.inf
    dynamic_range_db: float = 0.0
    trials: int = 1000
    master_seed: int = 0
    threshold_mode: str = "oracle"
    k_min: int | None = None
    k_max: int | None = None
    mu_points: int = 25
    workers: int = 1
    random_signs: bool = True

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigInvalid("trials must be >= 1")
        if self.threshold_mode not in ("oracle", "plan"):
            raise ConfigInvalid(f"unknown threshold mode {self.threshold_mode!r}")
        if self.dynamic_range_db < 0:
            raise ConfigInvalid("dynamic range must be >= 0 dB")
        if self.mu_points < 1 or self.workers < 1:
            raise ConfigInvalid("mu_points and workers must be >= 1")
        for k in self.k_values:
            if not 1 <= k < self.n:
                raise ConfigInvalid(f"k={k} outside [1, n)")
            if self.threshold_mode == "plan" and not k < self.n / 2:
                raise ConfigInvalid(f"plan mode needs k < n/2, got k={k}")
        for m in self.m_values:
            if m < 1:
                raise ConfigInvalid(f"m={m} must be >= 1")

    def signal_spec(self, k: int) -> SignalSpec:
        dr = self.dynamic_range_db or None
        return SignalSpec.from_snr(self.n, k, self.snr_db, dynamic_range_db=dr,
                                   random_signs=self.random_signs)

    def plan_mu(self, k: int, m: int) -> float:
        kmin = self.k_min if self.k_min is not None else k
        kmax = self.k_max if self.k_max is not None else k
        return make_plan(m, self.n, kmin, kmax, force=True).mu


@dataclass
class CellRecord:
    k: int
    m: int
    mu: float
    error_prob: float
    stderr: float
    md_rate: float
    fa_rate: float
    trials: int
    seed: int
    wall_time: float = 0.0
    genie_violations: int = 0

    def csv_row(self) -> list[str]:
        return [str(self.k), str(self.m), _fmt(self.mu), _fmt(self.error_prob),
                _fmt(self.stderr), _fmt(self.md_rate), _fmt(self.fa_rate),
                str(self.trials), str(self.seed)]


@dataclass
class SweepReport:
    config: SweepConfig
    cells: list[CellRecord] = field(default_factory=list)
    overlays: dict[int, tuple[float, float]] = field(default_factory=dict)

    def cell(self, k: int, m: int) -> CellRecord:
        for c in self.cells:
            if c.k == k and c.m == m:
                return c
        raise KeyError((k, m))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class TrialOutcome:
    """Per-trial sufficient statistics.

    OMP recovers the support at threshold ``mu`` iff ``prefix_ok`` and
    ``hi <= mu < lo`` where ``lo`` is the smallest of the first ``k`` maxima
    and ``hi`` the maximum after ``k`` selections.
    """

    prefix_ok: bool
    lo: float
    hi: float
    md_stat: float
    fa_stat: float

    def success(self, mu: float) -> bool:
        return self.prefix_ok and self.hi <= mu < self.lo


def run_trial(spec: SignalSpec, m: int, seed: int) -> TrialOutcome:
    inst = generate_instance(spec, m, seed)
    k = spec.k
    path = omp_path(inst, k, keep_ratios=True)
    truth = inst.signal.support_set()
    prefix_ok = (path.selected.size == k and path.rho_star.size == k + 1
                 and set(path.selected.tolist()) == truth)
    if prefix_ok:
        table = path.ratios
        lo = float(np.min(path.rho_star[:k]))
        hi = float(path.rho_star[k])
    else:
        table = run_genie(inst)[1]
        lo = hi = math.nan
    md_stat, fa_stat = event_statistics(table, inst.signal.support)
    return TrialOutcome(prefix_ok, lo, hi, md_stat, fa_stat)


def _run_chunk(args) -> np.ndarray:
    spec, m, cell_seed, start, stop = args
    out = np.empty((stop - start, 5))
    for row, trial in enumerate(range(start, stop)):
        o = run_trial(spec, m, derive_seed(cell_seed, trial))
        out[row] = (o.prefix_ok, o.lo, o.hi, o.md_stat, o.fa_stat)
    return out


def _cell_outcomes(config: SweepConfig, k: int, m: int, pool=None) -> np.ndarray:
    spec = config.signal_spec(k)
    cell_seed = derive_seed(config.master_seed, k, m)
    jobs = [(spec, m, cell_seed, s, min(s + TRIAL_CHUNK, config.trials))
            for s in range(0, config.trials, TRIAL_CHUNK)]
    chunks = list(pool.map(_run_chunk, jobs)) if pool else [_run_chunk(j) for j in jobs]
    return np.vstack(chunks)


def success_matrix(outcomes: np.ndarray, mus) -> np.ndarray:
    """Boolean ``(trials, len(mus))`` matrix of OMP successes."""
    mus = np.asarray(mus, dtype=float)[None, :]
    ok = outcomes[:, 0:1].astype(bool)
    lo, hi = outcomes[:, 1:2], outcomes[:, 2:3]
    with np.errstate(invalid="ignore"):
        return ok & (hi <= mus) & (mus < lo)


def pick_oracle_mu(errors: np.ndarray) -> int:
    """Index of the lowest-error threshold; ties resolve to the middle of the tied set."""
    best = np.flatnonzero(errors == errors.min())
    return int(best[(best.size - 1) // 2])


def _summarize(config: SweepConfig, k: int, m: int, outcomes: np.ndarray,
               wall: float) -> CellRecord:
    trials = outcomes.shape[0]
    if config.threshold_mode == "plan":
        mus = [config.plan_mu(k, m)]
        idx = 0
    else:
        mus = mu_grid(m, config.n, config.mu_points)
        errors = trials - success_matrix(outcomes, mus).sum(axis=0)
        idx = pick_oracle_mu(errors)
    mu = mus[idx]
    success = success_matrix(outcomes, [mu])[:, 0]
    md = outcomes[:, 3] <= mu
    fa = outcomes[:, 4] >= mu
    p = int(np.count_nonzero(~success)) / trials
    return CellRecord(
        k=k, m=m, mu=mu, error_prob=p, stderr=math.sqrt(p * (1.0 - p) / trials),
        md_rate=float(md.mean()), fa_rate=float(fa.mean()), trials=trials,
        seed=derive_seed(config.master_seed, k, m), wall_time=wall,
        genie_violations=int(np.sum(~success & ~md & ~fa)),
    )


def run_sweep(config: SweepConfig) -> SweepReport:
    config.validate()
    report = SweepReport(config)
    for k in config.k_values:
        report.overlays[k] = (m_theory(k, config.n), m_tropp_gilbert(k, config.n))
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for k in config.k_values:
            for m in config.m_values:
                t0 = time.perf_counter()
                outcomes = _cell_outcomes(config, k, m, pool)
                report.cells.append(
                    _summarize(config, k, m, outcomes, time.perf_counter() - t0))
    finally:
        if pool:
            pool.shutdown()
    return report


def run_dynamic_range(config: SweepConfig, ranges_db=(0.0, 10.0, 20.0)) -> dict[float, SweepReport]:
    """One noiseless sweep per dynamic range; ``config.dynamic_range_db`` is overridden."""
    if not math.isinf(config.snr_db):
        raise ConfigInvalid("dynamic-range experiment is noiseless (snr_db = inf)")
    return {float(d): run_sweep(_replace(config, dynamic_range_db=float(d)))
            for d in ranges_db}


def min_m_for_error(config: SweepConfig, k: int, max_error: float) -> int | None:
    """Smallest ``m`` in ``config.m_values`` (scanned upward) with error <= ``max_error``."""
    for m in sorted(config.m_values):
        cell = run_sweep(_replace(config, k_values=(k,), m_values=(m,))).cells[0]
        if cell.error_prob <= max_error:
            return m
    return None


@dataclass(frozen=True)
class CellConfig:
    n: int
    k: int
    m: int
    trials: int
    seed: int
    snr_db: float = math.inf
    dynamic_range_db: float = 0.0
    mu: float | None = None


def estimate_event_probs(cell: CellConfig) -> tuple[float, float]:
    """Empirical missed-detection and false-alarm rates of the genie run.

    ``cell.mu`` defaults to the plan threshold with ``k_min = k_max = k``.
    """
    config = SweepConfig(cell.n, (cell.k,), (cell.m,), cell.snr_db, cell.dynamic_range_db,
                         cell.trials, cell.seed, threshold_mode="plan")
    mu = cell.mu if cell.mu is not None else config.plan_mu(cell.k, cell.m)
    spec = config.signal_spec(cell.k)
    cell_seed = derive_seed(cell.seed, cell.k, cell.m)
    md = fa = 0
    for trial in range(cell.trials):
        inst = generate_instance(spec, cell.m, derive_seed(cell_seed, trial))
        md_stat, fa_stat = event_statistics(run_genie(inst)[1], inst.signal.support)
        md += md_stat <= mu
        fa += fa_stat >= mu
    return md / cell.trials, fa / cell.trials


def _replace(config: SweepConfig, **changes) -> SweepConfig:
    return replace(config, **changes)


def meta_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def emit_report(report: SweepReport, path) -> None:
    """Write the CSV and its ``.meta`` sidecar of ``key = value`` lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for cell in report.cells:
            writer.writerow(cell.csv_row())
    cfg = report.config
    meta = {
        "n": cfg.n,
        "snr_db": cfg.snr_db,
        "dynamic_range_db": cfg.dynamic_range_db,
        "threshold_mode": cfg.threshold_mode,
        "master_seed": cfg.master_seed,
        "tool_version": __version__,
        "k_values": ",".join(map(str, cfg.k_values)),
        "m_values": ",".join(map(str, cfg.m_values)),
        "trials": cfg.trials,
        "mu_points": cfg.mu_points,
        "overlay_m_theory": ",".join(f"{k}:{_fmt(v[0])}" for k, v in report.overlays.items()),
        "overlay_m_tropp_gilbert": ",".join(f"{k}:{_fmt(v[1])}" for k, v in report.overlays.items()),
    }
    if cfg.k_min is not None:
        meta["k_min"] = cfg.k_min
    if cfg.k_max is not None:
        meta["k_max"] = cfg.k_max
    meta_path(path).write_text("".join(f"{key} = {val}\n" for key, val in meta.items()))


def read_report_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    ints = ("k", "m", "trials", "seed")
    return [{key: (int(v) if key in ints else float(v)) for key, v in row.items()} for row in rows]
