"""Maximum-likelihood count thresholds and exact symbol error rate.

Symbols are indexed from 0.  A received count ``k`` is decided as the number
of thresholds that are ``<= k``, so a count landing exactly on a threshold
goes to the higher symbol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelEstimate, Constellation, CountModel, ReceiverConfig, count_pmf
from .exceptions import DegenerateConstellationError, SaturatedSymbolError


@dataclass(frozen=True)
class DecisionRule:
    thresholds: tuple[float, ...]
    k_max: int

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        if any(not 0.0 <= t <= self.k_max for t in th):
            raise ValueError(f"thresholds must lie in [0, {self.k_max}]: {th}")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise DegenerateConstellationError(f"thresholds must be strictly increasing: {th}")

    @property
    def order(self) -> int:
        return len(self.thresholds) + 1

    def decide(self, counts) -> np.ndarray:
        return np.searchsorted(np.asarray(self.thresholds), counts, side="right")

    def decisions(self) -> np.ndarray:
        """Decided symbol for every count 0..k_max."""
        return self.decide(np.arange(self.k_max + 1))

    def regions(self) -> list[tuple[int, int]]:
        """Inclusive integer count range ``(first, last)`` decided as each symbol.

        Empty regions have ``first > last``.
        """
        lower = [0] + [math.ceil(t) for t in self.thresholds]
        upper = [math.ceil(t) - 1 for t in self.thresholds] + [self.k_max]
        return list(zip(lower, upper))


@dataclass(frozen=True)
class SerReport:
    ser: float
    per_symbol_error: tuple[float, ...]


def ml_thresholds(model: CountModel) -> DecisionRule:
    """Likelihood crossing points of adjacent binomial count PMFs.

    ``k_th(m) = k_max ln[(1-p_m)/(1-p_{m+1})] / ln[p_{m+1}(1-p_m) / (p_m(1-p_{m+1}))]``,
    evaluated from the stored logs so that trigger probabilities that round
    to one still give usable thresholds.
    """
    log_miss = np.asarray(model.log_miss, dtype=float)
    probs = np.asarray(model.trigger_probs, dtype=float)
    if np.any(np.isneginf(log_miss)):
        bad = [int(m) for m in np.flatnonzero(np.isneginf(log_miss))]
        raise SaturatedSymbolError(
            f"symbols {bad} trigger every gate (p_tri = 1); the likelihood ratio is undefined"
        )
    steps = log_miss[:-1] - log_miss[1:]
    if np.any(steps <= 0.0):
        m = int(np.flatnonzero(steps <= 0.0)[0])
        raise DegenerateConstellationError(
            f"trigger probabilities of symbols {m} and {m + 1} are not strictly increasing"
        )
    with np.errstate(divide="ignore"):
        log_hit = np.log(probs)
    out = []
    for m, num in enumerate(steps):
        if probs[m] == 0.0:
            # symbol m always counts 0; any cut in (0, 1] separates it
            out.append(0.5)
            continue
        den = (log_hit[m + 1] - log_hit[m]) + num
        out.append(model.k_max * num / den)
    return DecisionRule(tuple(out), model.k_max)


def symbol_error_rate(model: CountModel, rule: DecisionRule) -> SerReport:
    """Exact SER of ``rule`` with equiprobable symbols.

    Error mass is summed directly over the wrong-decision cells rather than
    taken as a complement, so very small SERs keep their relative accuracy.
    """
    if rule.order != model.order or rule.k_max != model.k_max:
        raise ValueError(
            f"rule for M={rule.order}, k_max={rule.k_max} does not fit "
            f"model with M={model.order}, k_max={model.k_max}"
        )
    decided = rule.decisions()
    per_symbol = []
    for m in range(model.order):
        wrong = model.pmfs[m][decided != m]
        per_symbol.append(min(1.0, math.fsum(wrong.tolist())))
    return SerReport(math.fsum(per_symbol) / model.order, tuple(per_symbol))


def ser_at(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation, alpha: float
) -> SerReport:
    """ML SER at one attenuation."""
    model = count_pmf(cfg, est, constellation, alpha)
    return symbol_error_rate(model, ml_thresholds(model))
