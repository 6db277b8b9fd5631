"""Automatic attenuation control: choose alpha in (0, 1] for a channel estimate.

Two solvers are provided:

* :func:`solve_rate_max` maximizes the achievable rate directly, using
  Newton steps on dI/dalpha inside a sign bracket.
* :func:`solve_trigger_criterion` drives the average trigger probability to
  a target (0.7 by default) by Newton-Raphson; it never touches the count
  PMFs and costs O(M) per iteration.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import (
    ChannelEstimate,
    Constellation,
    ReceiverConfig,
    log_binomial_coefficients,
)
from .exceptions import ConfigError, DegenerateChannelError, InfeasibleAmplificationError

TRIGGER_TARGET = 0.7


class Algorithm(str, enum.Enum):
    NONE = "none"
    RATE_MAX = "rate-max"
    TRIGGER = "trigger"


@dataclass(frozen=True)
class SolverSettings:
    epsilon: float = 1e-14
    t_max: int = 100
    alpha_floor: float = 1e-12
    trigger_target: float = TRIGGER_TARGET

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ConfigError(f"t_max must be a positive integer, got {self.t_max}")
        if not 0.0 < self.alpha_floor < 1.0:
            raise ConfigError(f"alpha_floor must lie in (0, 1), got {self.alpha_floor}")
        if not 0.0 < self.trigger_target < 1.0:
            raise ConfigError(f"trigger_target must lie in (0, 1), got {self.trigger_target}")


class AacSolution:
    """Optimal attenuation plus diagnostics.

    ``rate_bits`` is evaluated on first access when the solver did not need
    the rate itself (the trigger criterion never builds count PMFs).
    """

    __slots__ = (
        "alpha_opt", "avg_trigger", "effective_signal_rate", "effective_background_rate",
        "iterations", "converged", "algorithm", "_rate", "_problem",
    )

    def __init__(self, alpha_opt, avg_trigger, effective_signal_rate, effective_background_rate,
                 iterations, converged, algorithm, rate_bits=None, problem=None):
        self.alpha_opt = alpha_opt
        self.avg_trigger = avg_trigger
        self.effective_signal_rate = effective_signal_rate
        self.effective_background_rate = effective_background_rate
        self.iterations = iterations
        self.converged = converged
        self.algorithm = Algorithm(algorithm)
        self._rate = rate_bits
        self._problem = problem
        if rate_bits is None and problem is None:
            raise ValueError("need either rate_bits or a problem to evaluate it")

    @property
    def rate_bits(self) -> float:
        if self._rate is None:
            self._rate = self._problem.clamped_rate(self.alpha_opt)
            self._problem = None
        return self._rate

    def as_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "alpha_opt": self.alpha_opt,
            "rate_bits": self.rate_bits,
            "avg_trigger": self.avg_trigger,
            "effective_signal_rate": self.effective_signal_rate,
            "effective_background_rate": self.effective_background_rate,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def __repr__(self):
        return f"AacSolution({', '.join(f'{k}={v!r}' for k, v in self.as_dict().items())})"

    def __eq__(self, other):
        return isinstance(other, AacSolution) and self.as_dict() == other.as_dict()


class _Problem:
    """Exponent bookkeeping shared by both solvers.

    Per-symbol slopes are kept as plain floats; NumPy arrays and binomial
    coefficients are only built when the rate is needed.
    """

    def __init__(self, cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation):
        constellation.require_strict()
        if est.incident_total <= 0.0:
            raise DegenerateChannelError("signal plus background rate is zero")
        self.cfg = cfg
        self.est = est
        scale = cfg.pde * cfg.gate_duration_ns
        dark = cfg.dark_rate_cpns * cfg.gate_duration_ns
        lb = est.background_rate_cpns
        if cfg.attenuate_dark_counts:
            self.slopes = tuple(scale * (lam + lb) + dark for lam in constellation.levels_cpns)
            self.offsets = (0.0,) * constellation.order
        else:
            self.slopes = tuple(scale * (lam + lb) for lam in constellation.levels_cpns)
            self.offsets = (dark,) * constellation.order
        self.order = constellation.order
        self._arrays = None

    def arrays(self):
        """``(log_binom, slope, offset)``; the binomial table is built lazily."""
        if self._arrays is None:
            self._arrays = [None, np.array(self.slopes), np.array(self.offsets)]
        return self._arrays

    def evaluate(self, alpha: float):
        arrays = self.arrays()
        if arrays[0] is None:
            arrays[0] = log_binomial_coefficients(self.cfg.k_max)
        log_binom, slope, offset = arrays
        return kernels.rate_and_derivatives(log_binom, slope, alpha * slope + offset)

    def rate(self, alpha: float) -> float:
        return self.evaluate(alpha)[0]

    def clamped_rate(self, alpha: float) -> float:
        rate = self.rate(alpha)
        top = math.log2(self.order)
        if -1e-12 <= rate < 0.0:
            return 0.0
        if top < rate <= top + 1e-12:
            return top
        return rate

    def avg_trigger(self, alpha: float) -> float:
        s = 0.0
        for a, b in zip(self.slopes, self.offsets):
            s -= math.expm1(-(alpha * a + b))
        return s / self.order

    def avg_trigger_slope(self, alpha: float) -> float:
        s = 0.0
        for a, b in zip(self.slopes, self.offsets):
            s += a * math.exp(-(alpha * a + b))
        return s / self.order

    def solution(self, alpha, algorithm, iterations, converged, rate=None, trigger=None) -> AacSolution:
        if rate is not None:
            top = math.log2(self.order)
            if -1e-12 <= rate < 0.0:
                rate = 0.0
            elif top < rate <= top + 1e-12:
                rate = top
        return AacSolution(
            alpha,
            self.avg_trigger(alpha) if trigger is None else trigger,
            alpha * self.est.signal_rate_cpns,
            alpha * self.est.background_rate_cpns,
            iterations,
            converged,
            algorithm,
            rate_bits=rate,
            problem=None if rate is not None else self,
        )


def _midpoint(lo: float, hi: float) -> float:
    # Geometric bisection reaches small roots in O(log log) steps from a floor of 1e-12.
    return math.sqrt(lo * hi) if hi > 4.0 * lo else 0.5 * (lo + hi)


def _golden_section(fn, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = fn(c), fn(d)
    n = 0
    while hi - lo > tol * max(1.0, hi) and n < max_iter:
        # ties move right: prefer less attenuation when flat
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = fn(d)
        n += 1
    return (c, fc) if fc > fd else (d, fd)


def no_attenuation(
    cfg: ReceiverConfig, est: ChannelEstimate, constellation: Constellation
) -> AacSolution:
    """Reference point without AAC (alpha = 1)."""
    problem = _Problem(cfg, est, constellation)
    return problem.solution(1.0, Algorithm.NONE, 0, True, problem.rate(1.0))


def solve_rate_max(
    cfg: ReceiverConfig,
    est: ChannelEstimate,
    constellation: Constellation,
    settings: SolverSettings = SolverSettings(),
) -> AacSolution:
    """Maximize the achievable rate over [alpha_floor, 1].

    Starts at alpha = 1.  If the rate is still increasing there, no
    attenuation is optimal.  Otherwise the stationary point of dI/dalpha is
    located by Newton steps, which are only accepted when the local curvature
    is negative and the step stays inside the current sign bracket; any other
    step bisects the bracket.  Iteration stops once a Newton step changes the
    rate by less than sqrt(epsilon), or after ``t_max`` steps.
    """
    problem = _Problem(cfg, est, constellation)
    eps = settings.epsilon

    alpha = 1.0
    rate, d1, d2 = problem.evaluate(alpha)
    if not (math.isfinite(d1) and math.isfinite(d2)):
        a, r = _golden_section(problem.rate, settings.alpha_floor, 1.0)
        return problem.solution(a, Algorithm.RATE_MAX, 0, True, r)
    # In deep saturation every PMF collapses onto k_max and dI/dalpha is pure
    # round-off; only trust a clearly positive slope. Bisection still reaches
    # alpha = 1 when the early exit is skipped wrongly.
    noise = 1e-9 * cfg.k_max * max(problem.slopes)
    if d1 > noise:
        return problem.solution(1.0, Algorithm.RATE_MAX, 0, True, rate)

    lo, hi = settings.alpha_floor, 1.0
    r_lo, d1_lo, _ = problem.evaluate(lo)
    if d1_lo <= 0.0:
        return problem.solution(lo, Algorithm.RATE_MAX, 0, True, r_lo)

    best_alpha, best_rate = alpha, rate
    t = 0
    converged = False
    while t < settings.t_max:
        newton = False
        if d2 < 0.0 and d1 != 0.0:
            cand = alpha - d1 / d2
            newton = lo < cand < hi
        if not newton:
            cand = _midpoint(lo, hi)
        new_rate, new_d1, new_d2 = problem.evaluate(cand)
        t += 1
        if not (math.isfinite(new_d1) and math.isfinite(new_d2)):
            a, r = _golden_section(problem.rate, lo, hi)
            if r > best_rate:
                best_alpha, best_rate = a, r
            converged = True
            break
        # derivative underflow only happens on the saturated side
        if new_d1 > 0.0:
            lo = cand
        else:
            hi = cand
        change = new_rate - rate
        alpha, rate, d1, d2 = cand, new_rate, new_d1, new_d2
        if rate >= best_rate:
            best_alpha, best_rate = alpha, rate
        if (newton and change * change <= eps) or (d1 == 0.0 and d2 < 0.0):
            converged = True
            break
        if hi - lo <= 4.0 * math.ulp(hi):
            converged = True
            break

    return problem.solution(best_alpha, Algorithm.RATE_MAX, t, converged, best_rate)


def solve_trigger_criterion(
    cfg: ReceiverConfig,
    est: ChannelEstimate,
    constellation: Constellation,
    settings: SolverSettings = SolverSettings(),
) -> AacSolution:
    """Drive the mean trigger probability over symbols to ``trigger_target``.

    The mean trigger probability is strictly increasing in alpha, so if it
    is already at or below the target unattenuated, alpha = 1 is returned.
    If even ``alpha_floor`` overshoots the target the floor is returned with
    ``converged=False``.
    """
    problem = _Problem(cfg, est, constellation)
    alpha, avg, t, status = kernels.trigger_solve(
        problem.slopes, problem.offsets, settings.trigger_target,
        settings.alpha_floor, settings.epsilon, settings.t_max,
    )
    return problem.solution(alpha, Algorithm.TRIGGER, t, status == 0, trigger=avg)


def solve(
    algorithm: Algorithm | str,
    cfg: ReceiverConfig,
    est: ChannelEstimate,
    constellation: Constellation,
    settings: SolverSettings = SolverSettings(),
) -> AacSolution:
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.NONE:
        return no_attenuation(cfg, est, constellation)
    if algorithm is Algorithm.RATE_MAX:
        return solve_rate_max(cfg, est, constellation, settings)
    return solve_trigger_criterion(cfg, est, constellation, settings)


def attenuation_from_targets(
    est: ChannelEstimate, target_signal_rate: float, target_background_rate: float
) -> float:
    """Attenuation that maps incident rates onto the target (optimal) rates."""
    total = est.incident_total
    if total <= 0.0:
        raise DegenerateChannelError("signal plus background rate is zero")
    if target_signal_rate < 0.0 or target_background_rate < 0.0:
        raise ConfigError("target rates must be non-negative")
    target = target_signal_rate + target_background_rate
    if target > total:
        raise InfeasibleAmplificationError(
            f"target total {target} exceeds incident total {total}; attenuators cannot amplify"
        )
    return target / total
