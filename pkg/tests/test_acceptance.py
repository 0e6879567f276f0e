"""Acceptance suite. Each test prints one PASS/FAIL line at its pinned tolerance
and the lines are collected in the terminal summary."""
import io
import math

import numpy as np
import pytest

from ompsupport import brownian, cli
from ompsupport.harness import SweepConfig, min_m_for_error, run_sweep
from ompsupport.lasso import lasso_support_recovery_rate
from ompsupport.model import SignalSpec, derive_seed, generate_instance
from ompsupport.omp import check_events, event_statistics, run_genie, run_omp
from ompsupport.threshold import make_plan

from oracles import brute_omp

pytestmark = pytest.mark.slow

K_VALUES = (5, 10, 15, 20, 25)


def _report(record, number, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    print(line)
    record(number, passed, detail)


def _scaling_m(k, n=100):
    return math.ceil(2 * k * math.log(n - k))


def _error_at_scaling(snr_db):
    out = {}
    for k in K_VALUES:
        m = _scaling_m(k)
        cfg = SweepConfig(100, (k,), (m,), snr_db=snr_db, trials=1000, master_seed=1)
        out[k] = (m, run_sweep(cfg).cells[0].error_prob)
    return out


def test_noiseless_error_at_scaling_law(record_criterion):
    res = _error_at_scaling(math.inf)
    passed = all(p <= 0.10 for _, p in res.values())
    detail = ", ".join(f"k={k} m={m} err={p:.3f}" for k, (m, p) in res.items())
    # the quoted m~136 for k=20 is informational only
    low = run_sweep(SweepConfig(100, (20,), (136,), trials=1000, master_seed=1)).cells[0]
    _report(record_criterion, 1, passed,
            f"max error {max(p for _, p in res.values()):.3f} <= 0.10 ({detail}); "
            f"k=20 at m=136 err={low.error_prob:.3f}")
    assert passed


def test_snr20_error_at_scaling_law(record_criterion):
    res = _error_at_scaling(20.0)
    passed = all(0.05 <= p <= 0.35 for _, p in res.values())
    detail = ", ".join(f"k={k} err={p:.3f}" for k, (m, p) in res.items())
    _report(record_criterion, 2, passed, f"all errors in [0.05, 0.35] ({detail})")
    assert passed


def test_dynamic_range_lowers_required_m(record_criterion):
    found = {}
    for d in (0.0, 10.0, 20.0):
        cfg = SweepConfig(100, (20,), tuple(range(40, 201, 5)), dynamic_range_db=d,
                          trials=1000, master_seed=2)
        found[d] = min_m_for_error(cfg, 20, 0.05)
    ms = [found[d] for d in (0.0, 10.0, 20.0)]
    passed = (None not in ms and ms[0] >= ms[1] >= ms[2]
              and ms[2] <= 0.75 * ms[0])
    _report(record_criterion, 3, passed,
            f"min m at <=5% error for D=0/10/20 dB: {ms[0]}/{ms[1]}/{ms[2]} "
            "(non-increasing, 20 dB at least 25% below 0 dB)")
    assert passed


GENIE_CONFIGS = [
    # n, k, m, snr_db
    (32, 2, 12, math.inf), (32, 4, 20, 20.0), (64, 3, 24, 10.0), (64, 6, 40, math.inf),
    (100, 5, 46, 20.0), (100, 10, 60, 30.0), (100, 20, 176, math.inf), (40, 8, 30, 5.0),
]


def test_genie_soundness(record_criterion):
    rng = np.random.default_rng(4)
    per = 10_000 // len(GENIE_CONFIGS)
    trials = violations = clean = 0
    for ci, (n, k, m, snr) in enumerate(GENIE_CONFIGS):
        spec = SignalSpec.from_snr(n, k, snr)
        plan_mu = make_plan(m, n, k, k, force=True).mu
        for trial in range(per):
            inst = generate_instance(spec, m, derive_seed(4, ci, trial))
            _, table = run_genie(inst)
            md_stat, fa_stat = event_statistics(table, inst.signal.support)
            # half the trials use the plan threshold; the rest probe the event-free
            # window (fa_stat, md_stat] when it exists
            if trial % 2:
                mu = plan_mu
            elif fa_stat < md_stat:
                mu = float(rng.uniform(fa_stat, md_stat))
            else:
                mu = float(np.exp(rng.uniform(np.log(0.01), np.log(2.0))))
            md, fa = check_events(table, mu, inst.signal.support)
            if not md and not fa:
                clean += 1
                if run_omp(inst, mu).support_estimate != inst.signal.support_set():
                    violations += 1
            trials += 1
    passed = violations == 0
    _report(record_criterion, 4, passed,
            f"{violations} violations in {trials} trials ({clean} event-free)")
    assert passed


def test_brownian_laws(record_criterion):
    pairs = [(1.0, 2.0), (1.0, 4.0), (1.0, 10.0), (0.5, 1.0), (2.0, 3.0), (1.0, 100.0)]
    worst_z = 0.0
    for i, (s, t) in enumerate(pairs):
        mean, se = brownian.autocorrelation(s, t, 100_000, derive_seed(5, i))
        worst_z = max(worst_z, abs(mean - math.sqrt(s / t)) / se)
    tail_ok = all(brownian.gaussian_sq_tail(mu) <= brownian.gaussian_sq_tail_bound(mu)
                  for mu in range(1, 41))
    # every cell has mu / (b/a) >= 8
    grid = [(1.0, 1.5, 12.0), (1.0, 1.5, 16.0), (1.0, 2.0, 16.0), (1.0, 2.0, 20.0),
            (1.0, 3.0, 24.0), (2.0, 5.0, 20.0), (1.0, 4.0, 32.0)]
    worst_p = 1.0
    for i, (a, b, mu) in enumerate(grid):
        rep = brownian.smax_exceedance(a, b, mu, paths=100_000, rng_seed=derive_seed(6, i))
        worst_p = min(worst_p, rep.binomial_pvalue())
    passed = worst_z <= 4.0 and tail_ok and worst_p > 0.001
    _report(record_criterion, 5, passed,
            f"autocorrelation worst |z|={worst_z:.2f} <= 4; tail bound dominates on mu=1..40: "
            f"{tail_ok}; smax bound worst one-sided p={worst_p:.3g} > 0.001")
    assert passed


def test_projection_sequence_covariance(record_criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    for length in range(2, 9):
        m = 30
        y = rng.standard_normal(m)
        cols = rng.standard_normal((m, length - 1))
        cov, energies = brownian.projection_sequence_covariance(
            y, cols, samples=100_000, rng_seed=derive_seed(7, length))
        worst = max(worst, float(np.max(np.abs(
            cov - brownian.expected_projection_covariance(energies)))))
    passed = worst <= 0.03
    _report(record_criterion, 6, passed, f"chains of length 2..8, max deviation {worst:.4f} <= 0.03")
    assert passed


def test_oracle_equivalence(record_criterion):
    rng = np.random.default_rng(8)
    mismatches = 0
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(10, 41))
        k = int(rng.integers(1, 6))
        m = int(rng.integers(2 * k, 61))
        snr = float(rng.choice([math.inf, 20.0, 10.0, 0.0]))
        mu = float(np.exp(rng.uniform(np.log(0.005), np.log(0.5))))
        inst = generate_instance(SignalSpec.from_snr(n, k, snr), m, derive_seed(8, i))
        res = run_omp(inst, mu)
        sel, rho = brute_omp(inst.a, inst.y, mu)
        got = np.array([r.rho_star for r in res.trace.iterations if r.index is not None])
        if res.trace.selected != sel or got.size != len(rho):
            mismatches += 1
            continue
        rel = np.abs(got - rho) / np.maximum(np.abs(rho), 1e-300)
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    passed = mismatches == 0 and worst <= 1e-8
    _report(record_criterion, 7, passed,
            f"{mismatches} sequence mismatches in 100 instances, worst rho* rel diff {worst:.2e} <= 1e-8")
    assert passed


def _first_m(rate_fn, grid, target=0.9):
    return next((m for m in grid if rate_fn(m) >= target), None)


def test_lasso_vs_omp_measurements(record_criterion):
    n, k, trials, seed = 100, 10, 200, 9
    grid = range(20, 201, 5)
    spec = SignalSpec.from_snr(n, k)
    m_omp = _first_m(lambda m: 1 - run_sweep(
        SweepConfig(n, (k,), (m,), trials=trials, master_seed=seed)).cells[0].error_prob, grid)
    m_lasso = _first_m(lambda m: lasso_support_recovery_rate(spec, m, "oracle", trials, seed), grid)
    gap = abs(m_lasso - m_omp) / m_omp if m_omp and m_lasso else math.inf
    passed = gap <= 0.20
    _report(record_criterion, 8, passed,
            f"m for 90% recovery: OMP {m_omp}, lasso {m_lasso}, relative gap {gap:.3f} <= 0.20")
    assert passed


def test_sweep_is_byte_identical_across_threads(record_criterion, tmp_path):
    outputs = []
    for threads in (1, 2, 1, 3):
        path = tmp_path / f"t{threads}_{len(outputs)}.csv"
        argv = ["sweep", "--n", "60", "--k", "3:9:3", "--m", "20:40:10", "--snr-db", "15",
                "--trials", "600", "--seed", "11", "--out", str(path), "--threads", str(threads)]
        assert cli.dispatch(cli.parse_args(argv), io.StringIO()) == 0
        outputs.append(path.read_bytes())
    passed = all(o == outputs[0] for o in outputs)
    _report(record_criterion, 9, passed,
            "sweep CSV byte-identical over thread counts 1, 2, 1, 3")
    assert passed
