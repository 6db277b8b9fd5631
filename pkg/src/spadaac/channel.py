"""Time-gated SPAD-array photon-counting channel.

Rates are in counts/ns and durations in ns throughout.  A symbol with
signal rate ``lam_m`` sees, per gate, the pre-attenuation exponent

    lam_tot_m = [pde * (lam_m + lam_b) + dark] * gate

and an attenuator with coefficient ``alpha`` in (0, 1] scales it, so the
trigger probability of one gate is ``1 - exp(-alpha * lam_tot_m)`` and the
symbol's count over ``k_max`` gates is Binomial(k_max, p_tri).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .exceptions import (
    ConfigError,
    DegenerateConstellationError,
    DomainError,
    InvalidOrderError,
    NormalizationError,
)

NORMALIZATION_TOL = 1e-12

# Relative slack used to decide that T_s / (tau_d + tau_g) is an integer.
_CEIL_RTOL = 1e-12


@dataclass(frozen=True)
class ReceiverConfig:
    """Static SPAD-array and gating parameters.

    Defaults give k_max = 100 (one pixel, 100 gate periods of 2 ns) and a
    per-gate sensitivity pde * gate = 0.02 per c/ns.

    ``attenuate_dark_counts`` selects whether the attenuator scales the dark
    term as well (True, the closed-form model) or only optical photons.
    """

    pde: float = 0.2
    array_size: int = 1
    symbol_duration_ns: float = 200.0
    dead_time_ns: float = 1.9
    gate_duration_ns: float = 0.1
    dark_rate_cpns: float = 0.01
    attenuate_dark_counts: bool = True

    def __post_init__(self):
        if not 0.0 < self.pde <= 1.0:
            raise ConfigError(f"pde must lie in (0, 1], got {self.pde}")
        if int(self.array_size) != self.array_size or self.array_size < 1:
            raise ConfigError(f"array_size must be a positive integer, got {self.array_size}")
        for name in ("symbol_duration_ns", "dead_time_ns", "gate_duration_ns"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value}")
        if not (self.dark_rate_cpns >= 0.0 and math.isfinite(self.dark_rate_cpns)):
            raise ConfigError(f"dark_rate_cpns must be non-negative, got {self.dark_rate_cpns}")
        object.__setattr__(self, "array_size", int(self.array_size))

    @property
    def gate_period_ns(self) -> float:
        return self.dead_time_ns + self.gate_duration_ns

    @property
    def gates_per_pixel(self) -> int:
        ratio = self.symbol_duration_ns / self.gate_period_ns
        nearest = round(ratio)
        if nearest >= 1 and abs(ratio - nearest) <= _CEIL_RTOL * ratio:
            return int(nearest)
        return max(1, math.ceil(ratio))

    @property
    def k_max(self) -> int:
        return k_max(self)

    def with_gates(self, gates: int) -> "ReceiverConfig":
        """Copy whose symbol duration packs exactly ``gates`` gate periods per pixel."""
        if gates < 1:
            raise ConfigError(f"gates must be >= 1, got {gates}")
        return _replace(self, symbol_duration_ns=gates * self.gate_period_ns)


def _replace(cfg: ReceiverConfig, **changes) -> ReceiverConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimated incident peak-signal and background photon rates (c/ns)."""

    signal_rate_cpns: float
    background_rate_cpns: float

    def __post_init__(self):
        for name in ("signal_rate_cpns", "background_rate_cpns"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be non-negative and finite, got {value}")

    @property
    def sbr(self) -> float:
        if self.background_rate_cpns <= 0.0:
            raise ZeroDivisionError("SBR is undefined for zero background rate")
        return self.signal_rate_cpns / self.background_rate_cpns

    @property
    def incident_total(self) -> float:
        return self.signal_rate_cpns + self.background_rate_cpns


@dataclass(frozen=True)
class Constellation:
    """Ordered M-PAM signal photon-rate levels (equiprobable)."""

    levels_cpns: tuple

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels_cpns)
        if len(levels) < 2:
            raise InvalidOrderError(f"need at least 2 levels, got {len(levels)}")
        if any(v < 0.0 or not math.isfinite(v) for v in levels):
            raise ConfigError(f"levels must be non-negative and finite: {levels}")
        object.__setattr__(self, "levels_cpns", levels)

    @property
    def order(self) -> int:
        return len(self.levels_cpns)

    @functools.cached_property
    def is_strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.levels_cpns, self.levels_cpns[1:]))

    def require_strict(self) -> None:
        if not self.is_strictly_increasing:
            raise DegenerateConstellationError(
                f"constellation levels must be strictly increasing: {self.levels_cpns}"
            )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels_cpns, dtype=float)


def k_max(cfg: ReceiverConfig) -> int:
    """Maximum count per symbol, ``N_A * ceil(T_s / (tau_d + tau_g))``."""
    return cfg.array_size * cfg.gates_per_pixel


def square_root_constellation(peak: float, order: int) -> Constellation:
    """Levels ``peak * ((i - 1) / (order - 1))**2`` for i = 1..order.

    Square-root spacing equalizes shot-noise-limited distances; for 4-PAM it
    gives {0, peak/9, 4 peak/9, peak}.
    """
    if int(order) != order or order < 2:
        raise InvalidOrderError(f"order must be an integer >= 2, got {order}")
    if not (peak >= 0.0 and math.isfinite(peak)):
        raise ConfigError(f"peak must be non-negative, got {peak}")
    i = np.arange(order, dtype=float)
    levels = peak * (i / (order - 1)) ** 2
    return Constellation(tuple(levels.tolist()))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"attenuation must lie in (0, 1], got {alpha}")
    return alpha


def exponent_terms(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Split each symbol's per-gate exponent into ``alpha * slope + offset``.

    With the default ``attenuate_dark_counts`` the offset is zero and the
    slope is the full ``lam_tot``.
    """
    levels = constellation.as_array()
    optical = cfg.pde * (levels + est.background_rate_cpns) * cfg.gate_duration_ns
    dark = cfg.dark_rate_cpns * cfg.gate_duration_ns
    if cfg.attenuate_dark_counts:
        return optical + dark, np.zeros_like(optical)
    return optical, np.full_like(optical, dark)


def total_exponents(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation
) -> np.ndarray:
    """Pre-attenuation per-gate exponents ``lam_tot_m``."""
    slope, offset = exponent_terms(cfg, est, constellation)
    return slope + offset


def attenuated_exponents(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation, alpha: float
) -> np.ndarray:
    alpha = _check_alpha(alpha)
    slope, offset = exponent_terms(cfg, est, constellation)
    return alpha * slope + offset


def trigger_probability(
    cfg: ReceiverConfig,
    est: ChannelEstimate,
    constellation: Constellation,
    m: int,
    alpha: float,
) -> float:
    """Probability that one gate fires for symbol ``m`` (0-based)."""
    if not 0 <= m < constellation.order:
        raise IndexError(f"symbol index {m} outside 0..{constellation.order - 1}")
    x = attenuated_exponents(cfg, est, constellation, alpha)[m]
    return float(-math.expm1(-x))


def log_binomial_coefficients(n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def binomial_log_pmf(n: int, log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """Row-wise log Binomial(n, p) PMF from ``log p`` and ``log(1 - p)``.

    Zero-exponent factors are dropped so p = 0 and p = 1 give exact point
    masses instead of ``0 * -inf``.
    """
    log_p = np.atleast_1d(np.asarray(log_p, dtype=float))[:, None]
    log_q = np.atleast_1d(np.asarray(log_q, dtype=float))[:, None]
    k = np.arange(n + 1, dtype=float)[None, :]
    with np.errstate(invalid="ignore"):
        hits = np.where(k > 0, k * log_p, 0.0)
        misses = np.where(n - k > 0, (n - k) * log_q, 0.0)
    return log_binomial_coefficients(n)[None, :] + hits + misses


@dataclass(frozen=True, eq=False)
class CountModel:
    """Per-symbol trigger probabilities and count PMFs at one attenuation."""

    attenuation: float
    k_max: int
    total_exponents: np.ndarray
    trigger_probs: np.ndarray
    pmfs: np.ndarray
    log_pmfs: np.ndarray = field(repr=False)
    log_miss: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return self.pmfs.shape[0]

    def mean_counts(self) -> np.ndarray:
        return self.k_max * self.trigger_probs

    def variances(self) -> np.ndarray:
        return self.k_max * self.trigger_probs * (1.0 - self.trigger_probs)

    @classmethod
    def from_exponents(
        cls, k_max: int, exponents: Sequence[float], attenuation: float = 1.0, *, total=None
    ) -> "CountModel":
        """Build from attenuated per-gate exponents ``x_m = alpha * lam_tot_m``."""
        x = np.asarray(exponents, dtype=float)
        if np.any(x < 0.0) or not np.all(np.isfinite(x)):
            raise DomainError(f"exponents must be non-negative and finite: {x}")
        with np.errstate(divide="ignore"):
            probs = -np.expm1(-x)
            log_p = np.log(probs)
        return cls._assemble(k_max, probs, log_p, -x, attenuation, x if total is None else total)

    @classmethod
    def from_trigger_probs(
        cls, k_max: int, probs: Sequence[float], attenuation: float = 1.0
    ) -> "CountModel":
        """Build directly from trigger probabilities; no ordering check."""
        p = np.asarray(probs, dtype=float)
        if np.any((p < 0.0) | (p > 1.0)):
            raise DomainError(f"trigger probabilities must lie in [0, 1]: {p}")
        with np.errstate(divide="ignore"):
            log_p = np.log(p)
            log_q = np.log1p(-p)
            total = -np.log1p(-p) / attenuation
        return cls._assemble(k_max, p, log_p, log_q, attenuation, total)

    @classmethod
    def _assemble(cls, k_max, probs, log_p, log_q, attenuation, total):
        if int(k_max) != k_max or k_max < 1:
            raise ConfigError(f"k_max must be a positive integer, got {k_max}")
        k_max = int(k_max)
        log_pmfs = binomial_log_pmf(k_max, log_p, log_q)
        pmfs = np.exp(log_pmfs)
        err = np.abs(pmfs.sum(axis=1) - 1.0)
        if np.any(err > NORMALIZATION_TOL):
            raise NormalizationError(f"PMF rows deviate from 1 by up to {err.max():.3e}")
        log_q = np.array(log_q, dtype=float)
        total = np.array(total, dtype=float)
        for arr in (probs, pmfs, log_pmfs, log_q, total):
            arr.setflags(write=False)
        return cls(float(attenuation), k_max, total, probs, pmfs, log_pmfs, log_q)


def count_pmf(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation, alpha: float
) -> CountModel:
    """Binomial count PMFs of every symbol at attenuation ``alpha``."""
    constellation.require_strict()
    x = attenuated_exponents(cfg, est, constellation, alpha)
    return CountModel.from_exponents(
        k_max(cfg), x, alpha, total=total_exponents(cfg, est, constellation)
    )
