"""Event-level Monte Carlo of gated, non-photon-number-resolving SPAD pixels.

Two modes are available:

``per-gate``
    Every one of the ``k_max`` gate slots fires independently with the
    trigger probability ``1 - exp(-x)``.
``arrival``
    Detected photons (signal, background and dark) form a Poisson process of
    rate ``x / tau_g`` per pixel over the symbol.  Each pixel's time axis is
    tiled into periods of ``tau_g + tau_d``: the gate is the first ``tau_g``
    of a period and the rest is dead time, so a pixel fires at most once per
    period.  A gate cut by the symbol boundary still counts.  Photons landing
    in dead time can never register, so only arrivals inside gate windows are
    drawn (an exact thinning of the full process).

Randomness is drawn per fixed-size block of trials from a Philox stream
keyed by ``(seed, stream, symbol, block)``, so results do not depend on how
blocks are spread over worker threads.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import (
    ChannelEstimate,
    Constellation,
    CountModel,
    ReceiverConfig,
    attenuated_exponents,
)
from .exceptions import ConfigError
from .ser import DecisionRule

BLOCK_TRIALS = 4096
# cap on photons materialized per arrival-mode block
BLOCK_PHOTONS = 2_000_000
HISTOGRAM_CSV_HEADER = ("symbol", "k", "count")


class SimulationMode(str, enum.Enum):
    PER_GATE = "per-gate"
    ARRIVAL = "arrival"


_STREAMS = {
    (SimulationMode.PER_GATE, "counts"): 0,
    (SimulationMode.ARRIVAL, "counts"): 1,
    (SimulationMode.PER_GATE, "ser"): 2,
    (SimulationMode.ARRIVAL, "ser"): 3,
}


@dataclass(frozen=True)
class SimulationPlan:
    trials: int
    seed: int = 0
    mode: SimulationMode = SimulationMode.PER_GATE
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", SimulationMode(self.mode))
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers}")


@dataclass(frozen=True, eq=False)
class EmpiricalCounts:
    """Per-symbol count histograms, shape ``(M, k_max + 1)``."""

    histogram: np.ndarray
    trials: int

    @property
    def k_max(self) -> int:
        return self.histogram.shape[1] - 1

    def pmf(self) -> np.ndarray:
        return self.histogram / self.trials

    def means(self) -> np.ndarray:
        k = np.arange(self.k_max + 1)
        return self.histogram @ k / self.trials

    def variances(self) -> np.ndarray:
        k = np.arange(self.k_max + 1)
        mean = self.means()
        return self.histogram @ (k * k) / self.trials - mean * mean

    def tv_distances(self, reference) -> np.ndarray:
        """Per-symbol total variation distance to a model or another histogram."""
        if isinstance(reference, CountModel):
            other = reference.pmfs
        elif isinstance(reference, EmpiricalCounts):
            other = reference.pmf()
        else:
            other = np.asarray(reference, dtype=float)
        return tv_distance(self.pmf(), other)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTOGRAM_CSV_HEADER)
        for m, row in enumerate(self.histogram):
            for k, c in enumerate(row):
                writer.writerow((m, k, int(c)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class SerEstimate:
    ser: float
    errors: int
    trials: int

    @property
    def stderr(self) -> float:
        return math.sqrt(self.ser * (1.0 - self.ser) / self.trials)

    @property
    def half_width(self) -> float:
        """Half-width of the 95% normal-approximation interval."""
        return 1.959963984540054 * self.stderr

    def z_score(self, analytic: float) -> float:
        """Deviation from an analytic SER in units of its binomial standard error."""
        sigma = math.sqrt(analytic * (1.0 - analytic) / self.trials)
        diff = self.ser - analytic
        if sigma == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / sigma


def tv_distance(p, q) -> np.ndarray:
    """Row-wise total variation distance, half the L1 difference."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    return 0.5 * np.abs(p - q).sum(axis=1)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


class _Sampler:
    """Draws counts for a vector of per-trial exponents."""

    def __init__(self, cfg: ReceiverConfig, mode: SimulationMode):
        self.cfg = cfg
        self.mode = mode
        self.k_max = cfg.k_max
        gates = cfg.gates_per_pixel
        last = cfg.symbol_duration_ns - (gates - 1) * cfg.gate_period_ns
        # open time per pixel; only the final gate can be cut short
        self.gated_ns = (gates - 1) * cfg.gate_duration_ns + min(cfg.gate_duration_ns, last)

    def block_size(self, x_max: float) -> int:
        if self.mode is SimulationMode.PER_GATE:
            return BLOCK_TRIALS
        cfg = self.cfg
        photons = cfg.array_size * x_max / cfg.gate_duration_ns * self.gated_ns
        return int(max(1, min(BLOCK_TRIALS, BLOCK_PHOTONS // max(photons, 1.0))))

    def counts(self, rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
        if self.mode is SimulationMode.PER_GATE:
            p = -np.expm1(-x)
            fired = rng.random((x.shape[0], self.k_max)) < p[:, None]
            return fired.sum(axis=1)
        cfg = self.cfg
        rate = x / cfg.gate_duration_ns  # detections per ns per pixel
        n = rng.poisson(cfg.array_size * rate * self.gated_ns)
        total = int(n.sum())
        # position along the concatenated gate windows, mapped back to symbol time
        u = rng.random(total) * self.gated_ns
        slot = np.minimum(np.floor(u / cfg.gate_duration_ns), cfg.gates_per_pixel - 1)
        # keep clear of window edges so the kernel bins each photon into its own gate
        times = slot * cfg.gate_period_ns + np.clip(
            u - slot * cfg.gate_duration_ns,
            1e-9 * cfg.gate_duration_ns,
            (1.0 - 1e-9) * cfg.gate_duration_ns,
        )
        if cfg.array_size == 1:
            pixels = np.zeros(total, dtype=np.int64)
        else:
            pixels = rng.integers(0, cfg.array_size, size=total, dtype=np.int64)
        offsets = np.zeros(n.shape[0] + 1, dtype=np.int64)
        np.cumsum(n, out=offsets[1:])
        return kernels.arrival_counts(
            times, pixels, offsets,
            cfg.gate_period_ns, cfg.gate_duration_ns,
            cfg.array_size, cfg.gates_per_pixel,
        )


def _blocks(trials: int, size: int):
    return [(b, b * size, min(trials, (b + 1) * size)) for b in range(math.ceil(trials / size))]


def _run(tasks, fn, workers: int):
    if workers == 1 or len(tasks) == 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def simulate_counts(
    cfg: ReceiverConfig,
    est: ChannelEstimate,
    constellation: Constellation,
    alpha: float,
    plan: SimulationPlan,
) -> EmpiricalCounts:
    """Histogram of ``plan.trials`` simulated counts for every symbol."""
    x = attenuated_exponents(cfg, est, constellation, alpha)
    return simulate_counts_from_exponents(cfg, x, plan)


def simulate_counts_from_exponents(cfg: ReceiverConfig, x, plan: SimulationPlan) -> EmpiricalCounts:
    """Like :func:`simulate_counts` with the attenuated per-gate exponents given directly."""
    x = np.asarray(x, dtype=float)
    sampler = _Sampler(cfg, plan.mode)
    stream = _STREAMS[(plan.mode, "counts")]
    K = sampler.k_max + 1
    tasks = []
    for m, xm in enumerate(x):
        for b, start, stop in _blocks(plan.trials, sampler.block_size(xm)):
            tasks.append((m, b, stop - start))

    def work(task):
        m, b, n = task
        c = sampler.counts(_rng(plan.seed, stream, m, b), np.full(n, x[m]))
        return m, np.bincount(c, minlength=K)

    hist = np.zeros((x.shape[0], K), dtype=np.int64)
    for m, h in _run(tasks, work, plan.workers):
        hist[m] += h
    hist.setflags(write=False)
    return EmpiricalCounts(hist, plan.trials)


def simulate_ser(
    cfg: ReceiverConfig,
    est: ChannelEstimate,
    constellation: Constellation,
    alpha: float,
    rule: DecisionRule,
    plan: SimulationPlan,
) -> SerEstimate:
    """Empirical SER of ``rule`` over ``plan.trials`` uniformly drawn symbols."""
    x = attenuated_exponents(cfg, est, constellation, alpha)
    return simulate_ser_from_exponents(cfg, x, rule, plan)


def simulate_ser_from_exponents(
    cfg: ReceiverConfig, x, rule: DecisionRule, plan: SimulationPlan
) -> SerEstimate:
    x = np.asarray(x, dtype=float)
    if rule.order != x.shape[0] or rule.k_max != cfg.k_max:
        raise ValueError("decision rule does not match the constellation or receiver")
    sampler = _Sampler(cfg, plan.mode)
    stream = _STREAMS[(plan.mode, "ser")]
    tasks = _blocks(plan.trials, sampler.block_size(float(x.max())))
    thresholds = np.asarray(rule.thresholds)

    def work(task):
        b, start, stop = task
        rng = _rng(plan.seed, stream, b)
        sent = rng.integers(0, x.shape[0], size=stop - start)
        counts = sampler.counts(rng, x[sent])
        decided = np.searchsorted(thresholds, counts, side="right")
        return int(np.count_nonzero(decided != sent))

    errors = sum(_run(tasks, work, plan.workers))
    return SerEstimate(errors / plan.trials, errors, plan.trials)
