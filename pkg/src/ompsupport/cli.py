"""Command-line front end: ``ompsupport <verb> [flags]``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import brownian, harness, lasso, threshold
from .model import SignalSpec, derive_seed, generate_instance, save_instance
from .omp import debias, omp_path, run_omp


class UsageError(Exception):
    def __init__(self, message: str, help_text: str = ""):
        super().__init__(message)
        self.help_text = help_text


@dataclass
class Command:
    verb: str
    options: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_help())


def parse_range(text: str) -> tuple[int, ...]:
    """``lo:hi:step`` (hi included when reachable), ``a,b,c`` or a single integer."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            lo, hi, step = parts
            if step <= 0 or hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1, step))
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; use lo:hi:step or a,b,c") from None


def parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from None


def _mu_arg(text: str):
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("mu must be 'auto' or a positive number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("mu must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="ompsupport", formatter_class=fmt,
                     description="Sparsity pattern recovery with threshold-stopped OMP.")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    sub.required = True

    def common(p, seed=0, trials=None):
        p.add_argument("--seed", type=int, default=seed, help="master seed")
        if trials is not None:
            p.add_argument("--trials", type=int, default=trials, help="Monte Carlo trials")

    def threads(p):
        p.add_argument("--threads", type=int, default=harness.default_workers(),
                       help=f"worker processes (env {harness.THREADS_ENV})")

    p = sub.add_parser("run", help="single OMP run", formatter_class=fmt)
    p.add_argument("--n", type=int, required=True, help="signal dimension")
    p.add_argument("--k", type=int, required=True, help="sparsity")
    p.add_argument("--m", type=int, required=True, help="measurements")
    p.add_argument("--mu", type=_mu_arg, default="auto",
                   help="threshold; 'auto' uses the plan if --kmin/--kmax are given, else the oracle grid")
    p.add_argument("--kmin", type=int, default=None, help="lower sparsity bound for the plan")
    p.add_argument("--kmax", type=int, default=None, help="upper sparsity bound for the plan")
    p.add_argument("--snr-db", type=float, default=math.inf, help="SNR in dB (inf = noiseless)")
    p.add_argument("--save-instance", type=Path, default=None, help="write the instance as text")
    common(p)

    p = sub.add_parser("sweep", help="error probability over a (k, m) grid", formatter_class=fmt)
    p.add_argument("--n", type=int, required=True, help="signal dimension")
    p.add_argument("--k", type=parse_range, required=True, help="k values, lo:hi:step")
    p.add_argument("--m", type=parse_range, required=True, help="m values, lo:hi:step")
    p.add_argument("--snr-db", type=float, default=math.inf, help="SNR in dB (inf = noiseless)")
    p.add_argument("--dynamic-range-db", type=float, default=0.0, help="entry power range in dB")
    p.add_argument("--mode", choices=("oracle", "plan"), default="oracle",
                   help="threshold selection")
    p.add_argument("--kmin", type=int, default=None, help="plan-mode k_min; unset means k")
    p.add_argument("--kmax", type=int, default=None, help="plan-mode k_max; unset means k")
    p.add_argument("--out", type=Path, required=True, help="CSV output path")
    common(p, trials=1000)
    threads(p)

    p = sub.add_parser("dynrange", help="recovery vs m for several dynamic ranges", formatter_class=fmt)
    p.add_argument("--n", type=int, default=100, help="signal dimension")
    p.add_argument("--k", type=int, default=20, help="sparsity")
    p.add_argument("--m", type=parse_range, default=parse_range("40:200:5"), help="m values")
    p.add_argument("--ranges", type=parse_floats, default=(0.0, 10.0, 20.0),
                   help="dynamic ranges in dB")
    p.add_argument("--out", type=Path, required=True,
                   help="CSV basename; one file per range with suffix _D<dB>")
    common(p, trials=1000)
    threads(p)

    p = sub.add_parser("genie", help="missed-detection / false-alarm rates", formatter_class=fmt)
    p.add_argument("--n", type=int, required=True, help="signal dimension")
    p.add_argument("--k", type=int, required=True, help="sparsity")
    p.add_argument("--m", type=int, required=True, help="measurements")
    p.add_argument("--snr-db", type=float, default=math.inf, help="SNR in dB (inf = noiseless)")
    p.add_argument("--mu", type=_mu_arg, default="auto", help="threshold; 'auto' uses the plan")
    common(p, trials=1000)

    p = sub.add_parser("brownian", help="normalized Brownian motion checks", formatter_class=fmt)
    p.add_argument("--check", choices=("autocorr", "tail", "smax", "projseq"), required=True,
                   help="which law to check")
    p.add_argument("--paths", type=int, default=100_000, help="sample paths")
    p.add_argument("--s", type=float, default=1.0, help="autocorr: earlier time")
    p.add_argument("--t", type=float, default=4.0, help="autocorr: later time")
    p.add_argument("--a", type=float, default=1.0, help="smax: interval start")
    p.add_argument("--b", type=float, default=10.0, help="smax: interval end")
    p.add_argument("--mu", type=float, default=16.0, help="smax/tail: level")
    p.add_argument("--grid", type=int, default=512, help="smax: grid points")
    common(p)

    p = sub.add_parser("lasso-compare", help="smallest m for 90%% recovery, lasso vs OMP",
                       formatter_class=fmt)
    p.add_argument("--n", type=int, default=100, help="signal dimension")
    p.add_argument("--k", type=int, default=10, help="sparsity")
    p.add_argument("--m", type=parse_range, default=parse_range("20:200:5"), help="m values")
    p.add_argument("--target", type=float, default=0.9, help="required recovery rate")
    common(p, trials=200)

    p = sub.add_parser("plan", help="threshold plan for (m, n, k_min, k_max)", formatter_class=fmt)
    p.add_argument("--n", type=int, required=True, help="signal dimension")
    p.add_argument("--m", type=int, required=True, help="measurements")
    p.add_argument("--kmin", type=int, required=True, help="smallest sparsity")
    p.add_argument("--kmax", type=int, required=True, help="largest sparsity")
    p.add_argument("--force", action="store_true", help="allow m below the scaling law")
    return parser


def parse_args(argv) -> Command:
    ns = build_parser().parse_args(list(argv))
    opts = vars(ns)
    verb = opts.pop("verb")
    return Command(verb, opts)


def _oracle_mu_single(inst) -> float:
    """Best threshold on the oracle grid for one instance (ties -> middle)."""
    k = inst.signal.k
    mus = threshold.mu_grid(inst.m, inst.n)
    path = omp_path(inst, min(k, inst.m))
    truth = inst.signal.support_set()
    errors = np.array([path.support_for(mu) != truth for mu in mus], dtype=int)
    return mus[harness.pick_oracle_mu(errors)]


def _cmd_run(o, out) -> int:
    spec = SignalSpec.from_snr(o["n"], o["k"], o["snr_db"])
    inst = generate_instance(spec, o["m"], derive_seed(o["seed"], 0))
    if o["save_instance"] is not None:
        save_instance(inst, o["save_instance"])
    mu = o["mu"]
    if mu == "auto":
        if o["kmin"] is not None or o["kmax"] is not None:
            kmin = o["kmin"] if o["kmin"] is not None else o["k"]
            kmax = o["kmax"] if o["kmax"] is not None else o["k"]
            mu = threshold.make_plan(o["m"], o["n"], kmin, kmax, force=True).mu
        else:
            mu = _oracle_mu_single(inst)
    res = run_omp(inst, mu)
    print(f"mu = {mu:.6g}", file=out)
    print("t  index  rho_star  residual_norm_sq  accepted", file=out)
    for rec in res.trace.iterations:
        print(f"{rec.t}  {rec.index}  {rec.rho_star:.6g}  {rec.residual_norm_sq:.6g}  "
              f"{rec.accepted}", file=out)
    print(f"stop_reason = {res.trace.stop_reason}", file=out)
    print(f"support = {sorted(res.support_estimate)}", file=out)
    print(f"true_support = {sorted(inst.signal.support_set())}", file=out)
    print(f"exact_recovery = {res.support_estimate == inst.signal.support_set()}", file=out)
    if res.support_estimate and len(res.support_estimate) <= inst.m:
        x_hat = debias(inst, res.support_estimate)
        err = np.linalg.norm(x_hat - inst.signal.dense())
        print(f"debiased_error = {err:.6g}", file=out)
    return 0


def _sweep_config(o, dynamic_range_db=None) -> harness.SweepConfig:
    k_values = o["k"] if isinstance(o["k"], tuple) else (o["k"],)
    return harness.SweepConfig(
        n=o["n"], k_values=k_values, m_values=o["m"],
        snr_db=o.get("snr_db", math.inf),
        dynamic_range_db=o.get("dynamic_range_db", 0.0) if dynamic_range_db is None
        else dynamic_range_db,
        trials=o["trials"], master_seed=o["seed"],
        threshold_mode=o.get("mode", "oracle"),
        k_min=o.get("kmin"), k_max=o.get("kmax"), workers=o["threads"],
    )


def _print_cells(report, out) -> None:
    print("k  m  mu  error_prob  stderr  md_rate  fa_rate", file=out)
    for c in report.cells:
        print(f"{c.k}  {c.m}  {c.mu:.4g}  {c.error_prob:.4f}  {c.stderr:.4f}  "
              f"{c.md_rate:.4f}  {c.fa_rate:.4f}", file=out)


def _cmd_sweep(o, out) -> int:
    report = harness.run_sweep(_sweep_config(o))
    harness.emit_report(report, o["out"])
    _print_cells(report, out)
    print(f"wrote {o['out']}", file=out)
    return 0


def _cmd_dynrange(o, out) -> int:
    base = _sweep_config(o)
    reports = harness.run_dynamic_range(base, o["ranges"])
    stem = o["out"]
    for d, report in reports.items():
        path = stem.with_name(f"{stem.stem}_D{d:g}{stem.suffix or '.csv'}")
        harness.emit_report(report, path)
        ok = [c.m for c in report.cells if c.error_prob <= 0.05]
        print(f"D = {d:g} dB: smallest m with error <= 5%: {min(ok) if ok else 'none'}"
              f" ({path})", file=out)
    return 0


def _cmd_genie(o, out) -> int:
    mu = None if o["mu"] == "auto" else o["mu"]
    cell = harness.CellConfig(o["n"], o["k"], o["m"], o["trials"], o["seed"],
                              snr_db=o["snr_db"], mu=mu)
    md, fa = harness.estimate_event_probs(cell)
    print(f"md_rate = {md:.6g}", file=out)
    print(f"fa_rate = {fa:.6g}", file=out)
    return 0


def _cmd_brownian(o, out) -> int:
    check = o["check"]
    if check == "autocorr":
        mean, se = brownian.autocorrelation(o["s"], o["t"], o["paths"], o["seed"])
        expected = math.sqrt(o["s"] / o["t"])
        print(f"E[S(s)S(t)] = {mean:.6g} +/- {se:.3g}; expected {expected:.6g}", file=out)
        print(f"abs_deviation = {abs(mean - expected):.6g}", file=out)
    elif check == "tail":
        exact = brownian.gaussian_sq_tail(o["mu"])
        bound = brownian.gaussian_sq_tail_bound(o["mu"])
        print(f"Pr(X^2 > {o['mu']:g}) = {exact:.6g} <= bound {bound:.6g}", file=out)
    elif check == "smax":
        rep = brownian.smax_exceedance(o["a"], o["b"], o["mu"], o["paths"], o["grid"], o["seed"])
        print(f"empirical = {rep.empirical_prob:.6g}  bound = {rep.bound_value:.6g}  "
              f"p_value = {rep.binomial_pvalue():.3g}", file=out)
    else:
        rng = np.random.default_rng(o["seed"])
        m, c = 50, 6
        y = rng.standard_normal(m)
        cols = rng.standard_normal((m, c))
        cov, energies = brownian.projection_sequence_covariance(y, cols, o["paths"], rng)
        dev = np.max(np.abs(cov - brownian.expected_projection_covariance(energies)))
        print(f"max_abs_deviation = {dev:.6g}", file=out)
    return 0


def _omp_rate(spec, m, trials, seed) -> float:
    cfg = harness.SweepConfig(spec.n, (spec.k,), (m,), trials=trials, master_seed=seed)
    return 1.0 - harness.run_sweep(cfg).cells[0].error_prob


def _cmd_lasso_compare(o, out) -> int:
    spec = SignalSpec.from_snr(o["n"], o["k"])
    found = {}
    for name, rate_fn in (
        ("omp", lambda m: _omp_rate(spec, m, o["trials"], o["seed"])),
        ("lasso", lambda m: lasso.lasso_support_recovery_rate(spec, m, "oracle", o["trials"], o["seed"])),
    ):
        found[name] = next((m for m in o["m"] if rate_fn(m) >= o["target"]), None)
        print(f"{name}: smallest m with recovery >= {o['target']:g}: {found[name]}", file=out)
    if found["omp"] and found["lasso"]:
        print(f"relative_gap = {abs(found['lasso'] - found['omp']) / found['omp']:.4f}", file=out)
    return 0


def _cmd_plan(o, out) -> int:
    plan = threshold.make_plan(o["m"], o["n"], o["kmin"], o["kmax"], force=o["force"])
    print(f"delta = {plan.delta:.10g}", file=out)
    print(f"epsilon = {plan.epsilon:.10g}", file=out)
    print(f"mu = {plan.mu:.10g}", file=out)
    if not plan.reliable:
        print("reliable = False", file=out)
    return 0


HANDLERS = {
    "run": _cmd_run, "sweep": _cmd_sweep, "dynrange": _cmd_dynrange, "genie": _cmd_genie,
    "brownian": _cmd_brownian, "lasso-compare": _cmd_lasso_compare, "plan": _cmd_plan,
}


def dispatch(command: Command, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        return HANDLERS[command.verb](command.options, out)
    except (ValueError, ArithmeticError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command = parse_args(argv)
    except UsageError as exc:
        print(exc.help_text, file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return dispatch(command)


if __name__ == "__main__":
    sys.exit(main())
