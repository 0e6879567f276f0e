"""Random problem instances ``y = A x + w`` with Gaussian ``A`` and ``w``.

Entries of ``A`` and ``w`` are i.i.d. N(0, 1/m), so columns of ``A`` have unit
expected energy and the signal-to-noise ratio equals ``||x||^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_HEADER = "ompsupport-instance v1"


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed for the stream keyed by ``keys``.

    Streams for different keys are statistically independent, so trials can be
    evaluated in any order or on any worker.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SparseSignal:
    n: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if support.ndim != 1 or support.shape != values.shape:
            raise ValueError("support and values must be 1-d and of equal length")
        k = support.size
        if not 1 <= k < self.n:
            raise ValueError(f"need 1 <= k < n, got k={k}, n={self.n}")
        if np.unique(support).size != k or support.min() < 0 or support.max() >= self.n:
            raise ValueError("support indices must be distinct and in [0, n)")
        if np.any(values == 0) or not np.all(np.isfinite(values)):
            raise ValueError("nonzero values must be finite and nonzero")
        order = np.argsort(support)
        object.__setattr__(self, "support", support[order])
        object.__setattr__(self, "values", values[order])

    @property
    def k(self) -> int:
        return int(self.support.size)

    @property
    def x_min(self) -> float:
        return float(np.min(np.abs(self.values)))

    @property
    def power(self) -> float:
        return float(self.values @ self.values)

    def dense(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.support] = self.values
        return x

    def support_set(self) -> frozenset[int]:
        return frozenset(int(i) for i in self.support)


@dataclass(frozen=True)
class SignalSpec:
    """Signal ensemble.

    With ``dynamic_range_db`` unset every nonzero entry has magnitude
    ``amplitude``. Otherwise entry powers are drawn uniformly across a
    ``dynamic_range_db`` range (uniform in dB by default, or uniform in linear
    power with ``power_scale="linear"``) and rescaled so the total power is
    ``total_power``. Either way the largest-to-smallest power ratio is at most
    ``10^(D/10)``.
    """

    n: int
    k: int
    amplitude: float = 1.0
    dynamic_range_db: float | None = None
    total_power: float = 1.0
    noise: str = "noiseless"
    random_signs: bool = True
    power_scale: str = "db"

    def __post_init__(self):
        if not 1 <= self.k < self.n:
            raise ValueError(f"need 1 <= k < n, got k={self.k}, n={self.n}")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.dynamic_range_db is not None and self.dynamic_range_db < 0:
            raise ValueError("dynamic range must be >= 0 dB")
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")
        if self.noise not in ("noiseless", "gaussian"):
            raise ValueError(f"unknown noise mode {self.noise!r}")
        if self.power_scale not in ("linear", "db"):
            raise ValueError(f"unknown power scale {self.power_scale!r}")

    @classmethod
    def from_snr(cls, n: int, k: int, snr_db: float = math.inf,
                 dynamic_range_db: float | None = None, **kw) -> SignalSpec:
        """Ensemble with ``||x||^2`` fixed by ``snr_db``; infinite SNR is noiseless.

        In the noiseless case the scale of ``x`` is irrelevant and ``||x||^2 = k``.
        """
        if math.isinf(snr_db):
            power, noise = float(k), "noiseless"
        else:
            power, noise = 10.0 ** (snr_db / 10.0), "gaussian"
        if dynamic_range_db is None:
            return cls(n, k, amplitude=math.sqrt(power / k), noise=noise, **kw)
        return cls(n, k, dynamic_range_db=dynamic_range_db, total_power=power,
                   noise=noise, **kw)


@dataclass(frozen=True)
class ProblemInstance:
    signal: SparseSignal
    a: np.ndarray
    w: np.ndarray
    y: np.ndarray
    seed: int = 0

    @property
    def m(self) -> int:
        return int(self.a.shape[0])

    @property
    def n(self) -> int:
        return int(self.a.shape[1])


def generate_signal(spec: SignalSpec, rng_seed) -> SparseSignal:
    rng = _rng(rng_seed)
    support = rng.choice(spec.n, size=spec.k, replace=False)
    if spec.dynamic_range_db is None:
        mags = np.full(spec.k, spec.amplitude)
    else:
        floor = 10.0 ** (-spec.dynamic_range_db / 10.0)
        if spec.power_scale == "linear":
            powers = rng.uniform(floor, 1.0, size=spec.k)
        else:
            powers = 10.0 ** (-rng.uniform(0.0, spec.dynamic_range_db, size=spec.k) / 10.0)
        powers *= spec.total_power / powers.sum()
        mags = np.sqrt(powers)
    if spec.random_signs:
        mags = mags * rng.choice([-1.0, 1.0], size=spec.k)
    return SparseSignal(spec.n, support, mags)


def generate_instance(spec: SignalSpec, m: int, rng_seed: int) -> ProblemInstance:
    """Draw ``x``, then ``A``, then ``w`` from one stream seeded by ``rng_seed``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(rng_seed)
    signal = generate_signal(spec, rng)
    scale = 1.0 / math.sqrt(m)
    a = rng.standard_normal((m, spec.n)) * scale
    if spec.noise == "gaussian":
        w = rng.standard_normal(m) * scale
    else:
        w = np.zeros(m)
    y = a[:, signal.support] @ signal.values + w
    return ProblemInstance(signal, a, w, y, int(rng_seed))


def snr(instance: ProblemInstance | SparseSignal) -> float:
    """Definitional SNR ``E||Ax||^2 / E||w||^2 = ||x||^2``."""
    signal = instance.signal if isinstance(instance, ProblemInstance) else instance
    return signal.power


def save_instance(instance: ProblemInstance, path) -> None:
    """Write a plain-text dump: header, dimensions, support, values, A rows, w, y."""
    sig = instance.signal
    fmt = lambda arr: " ".join(repr(float(v)) for v in arr)  # noqa: E731
    lines = [
        FORMAT_HEADER,
        f"{instance.m} {instance.n} {sig.k} {instance.seed}",
        " ".join(str(int(i)) for i in sig.support),
        fmt(sig.values),
    ]
    lines += [fmt(row) for row in instance.a]
    lines += [fmt(instance.w), fmt(instance.y)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_instance(path) -> ProblemInstance:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValueError(f"{path}: not an instance file")
    m, n, k, seed = (int(t) for t in lines[1].split())
    support = np.array(lines[2].split(), dtype=int)
    values = np.array(lines[3].split(), dtype=float)
    a = np.array([row.split() for row in lines[4:4 + m]], dtype=float).reshape(m, n)
    w = np.array(lines[4 + m].split(), dtype=float)
    y = np.array(lines[5 + m].split(), dtype=float)
    if support.size != k:
        raise ValueError(f"{path}: support size {support.size} != k={k}")
    return ProblemInstance(SparseSignal(n, support, values), a, w, y, seed)
