"""Achievable rate of equiprobable M-PAM over the binomial counting channel.

The rate is evaluated in the simplified entropy form

    I = log2 M + 1/(M ln 2) * [sum_{k,m} p ln p - sum_k G_k ln G_k],
    G_k = sum_m p_{m,k},

and its first and second derivatives in the attenuation coefficient are
built from the per-cell log-derivatives of the unnormalized binomial core
``f_m(alpha) = q^k (1 - q)^(k_max - k)`` with ``q = 1 - exp(-x_m)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .channel import (
    ChannelEstimate,
    Constellation,
    CountModel,
    ReceiverConfig,
    _check_alpha,
    exponent_terms,
    log_binomial_coefficients,
    square_root_constellation,
)

BOUND_TOL = 1e-12
CONCAVITY_CSV_HEADER = ("lambda_s", "lambda_b", "alpha", "d2I")


@dataclass(frozen=True)
class RateReport:
    rate_bits: float
    d1: float
    d2: float


@dataclass(frozen=True, eq=False)
class DerivativeComponents:
    """Binomial cores and their alpha-derivatives, shape (M, k_max + 1).

    ``g``, ``g1``, ``g2`` are the column sums over symbols.
    """

    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    g: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    def row(self, k: int) -> "DerivativeComponents":
        return DerivativeComponents(
            self.f[:, k], self.f1[:, k], self.f2[:, k], self.g[k], self.g1[k], self.g2[k]
        )


def _clamp(rate: float, order: int) -> float:
    top = math.log2(order)
    if -BOUND_TOL <= rate < 0.0:
        return 0.0
    if top < rate <= top + BOUND_TOL:
        return top
    return rate


def achievable_rate(model: CountModel, order: int | None = None) -> float:
    """Mutual information (bits/symbol) of a count model with equiprobable inputs."""
    if order is not None and order != model.order:
        raise ValueError(f"order {order} does not match model with {model.order} symbols")
    M = model.order
    p = model.pmfs
    live = p > 0.0
    own = math.fsum((p[live] * model.log_pmfs[live]).tolist())
    G = p.sum(axis=0)
    G = G[G > 0.0]
    mixed = math.fsum((G * np.log(G)).tolist())
    return _clamp(math.log2(M) + (own - mixed) / (M * math.log(2.0)), M)


def _exponents(cfg, est, constellation, alpha):
    alpha = _check_alpha(alpha)
    slope, offset = exponent_terms(cfg, est, constellation)
    return slope, alpha * slope + offset


def rate_report(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation, alpha: float
) -> RateReport:
    """Rate and its first two alpha-derivatives in a single fused pass."""
    constellation.require_strict()
    slope, x = _exponents(cfg, est, constellation, alpha)
    rate, d1, d2 = kernels.rate_and_derivatives(log_binomial_coefficients(cfg.k_max), slope, x)
    return RateReport(_clamp(rate, constellation.order), d1, d2)


def rate_second_derivative(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation, alpha: float
) -> float:
    return rate_report(cfg, est, constellation, alpha).d2


def rate_first_derivative(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation, alpha: float
) -> float:
    return rate_report(cfg, est, constellation, alpha).d1


def derivative_components(
    cfg: ReceiverConfig,
    est: ChannelEstimate,
    constellation: Constellation,
    alpha: float,
    k: int | None = None,
) -> DerivativeComponents:
    """Closed-form ``f_m``, ``f'_m``, ``f''_m`` and their symbol sums.

    For ``k >= 2`` the values coincide with the expanded power forms
    ``slope (e^x - 1)^(k-1) e^(-x k_max) [k_max + e^x (k - k_max)]`` and its
    second-order analogue; they are evaluated here as ``f`` times the
    log-derivative so the ``k = 0`` and ``k = 1`` cells, where those powers
    go negative, take their analytic limits instead of ``0 * inf``.
    """
    slope, x = _exponents(cfg, est, constellation, alpha)
    kmax = cfg.k_max
    f, f1, f2 = binomial_core_derivatives(kmax, slope, x)
    comps = DerivativeComponents(f, f1, f2, f.sum(axis=0), f1.sum(axis=0), f2.sum(axis=0))
    return comps if k is None else comps.row(k)


def binomial_core_derivatives(kmax: int, slope, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    slope = np.asarray(slope, dtype=float)[:, None]
    x = np.asarray(x, dtype=float)[:, None]
    k = np.arange(kmax + 1, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        q = -np.expm1(-x)
        log_f = np.where(k > 0, k * np.log(q), 0.0) + np.where(kmax - k > 0, -(kmax - k) * x, 0.0)
        # d/dalpha log f and d2/dalpha2 log f
        dl = np.where(k > 0, slope * (k / q - kmax), -slope * kmax)
        d2l = np.where(k > 0, -k * slope * slope * np.exp(-x) / (q * q), 0.0)
    f = np.exp(log_f)
    dl = np.where(f > 0.0, dl, 0.0)
    d2l = np.where(f > 0.0, d2l, 0.0)
    return f, f * dl, f * (dl * dl + d2l)


def second_derivative_from_components(
    comps: DerivativeComponents, log_binom: np.ndarray
) -> float:
    """Assemble d2I/dalpha2 term by term from explicit components.

    Cells with ``f_m = 0`` contribute their zero limit.
    """
    f, f1, f2, g, g1, g2 = comps.f, comps.f1, comps.f2, comps.g, comps.g1, comps.g2
    M = f.shape[0]
    C = np.exp(log_binom)[None, :]
    live = f > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (
            f2 * (1.0 + np.log(f / g))
            + f1 * (f1 / f - 2.0 * g1 / g)
            - f * (g2 / g - g1 * g1 / (g * g))
        )
    terms = np.where(live, C * terms, 0.0)
    return math.fsum(terms.ravel().tolist()) / (M * math.log(2.0))


@dataclass(frozen=True, eq=False)
class ConcavityScan:
    """Dense d2I/dalpha2 values indexed ``[background, signal, alpha]``."""

    signal_rates: np.ndarray
    background_rates: np.ndarray
    alphas: np.ndarray
    d2: np.ndarray

    def max(self) -> float:
        return float(self.d2.max())

    def rows(self) -> Iterable[tuple[float, float, float, float]]:
        for ib, lb in enumerate(self.background_rates):
            for i_s, ls in enumerate(self.signal_rates):
                for ia, a in enumerate(self.alphas):
                    yield float(ls), float(lb), float(a), float(self.d2[ib, i_s, ia])

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CONCAVITY_CSV_HEADER)
        for row in self.rows():
            writer.writerow([repr(v) for v in row])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def concavity_scan(
    cfg: ReceiverConfig,
    signal_rates: Sequence[float],
    background_rates: Sequence[float],
    alphas: Sequence[float],
    order: int = 4,
    family: Callable[[float, int], Constellation] = square_root_constellation,
) -> ConcavityScan:
    """Evaluate d2I/dalpha2 over a (background, signal, alpha) grid.

    ``family(peak, order)`` builds the constellation for each signal rate.
    Rows are ordered lexicographically in (background, signal, alpha).
    """
    ls_arr = np.sort(np.asarray(signal_rates, dtype=float))
    lb_arr = np.sort(np.asarray(background_rates, dtype=float))
    a_arr = np.sort(np.asarray(alphas, dtype=float))
    if ls_arr.size == 0 or lb_arr.size == 0 or a_arr.size == 0:
        raise ValueError("concavity scan grids must be non-empty")
    for a in a_arr:
        _check_alpha(a)
    log_binom = log_binomial_coefficients(cfg.k_max)
    out = np.empty((lb_arr.size, ls_arr.size, a_arr.size))
    for ib, lb in enumerate(lb_arr):
        for i_s, ls in enumerate(ls_arr):
            constellation = family(float(ls), order)
            constellation.require_strict()
            slope, offset = exponent_terms(cfg, ChannelEstimate(float(ls), float(lb)), constellation)
            for ia, a in enumerate(a_arr):
                out[ib, i_s, ia] = kernels.rate_and_derivatives(log_binom, slope, a * slope + offset)[2]
    return ConcavityScan(ls_arr, lb_arr, a_arr, out)
