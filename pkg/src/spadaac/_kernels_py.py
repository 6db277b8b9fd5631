"""Pure NumPy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, or when
``SPADAAC_PURE_PYTHON=1`` is set.  Signatures mirror the Cython module.
"""
import math

import numpy as np

LN2 = math.log(2.0)


def _log_terms(log_binom, slope, x):
    """Log-PMF and first/second log-derivatives of every (symbol, count) cell."""
    kmax = log_binom.shape[0] - 1
    slope = np.asarray(slope, dtype=float)[:, None]
    x = np.asarray(x, dtype=float)[:, None]
    k = np.arange(kmax + 1, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        q = -np.expm1(-x)
        log_p = np.where(k > 0, k * np.log(q), 0.0)
        log_p = log_p + np.where(kmax - k > 0, -(kmax - k) * x, 0.0) + log_binom[None, :]
        dl = np.where(k > 0, slope * (k / q - kmax), -slope * kmax)
        d2l = np.where(k > 0, -k * slope * slope * np.exp(-x) / (q * q), 0.0)
    p = np.exp(log_p)
    live = p > 0.0
    dl = np.where(live, dl, 0.0)
    d2l = np.where(live, d2l, 0.0)
    return p, log_p, dl, d2l, live


def rate_and_derivatives(log_binom, slope, x):
    """Return ``(I, dI/dalpha, d2I/dalpha2)`` in bits for equiprobable symbols.

    ``x`` are the attenuated per-gate exponents and ``slope`` their
    derivative with respect to the attenuation coefficient.
    """
    log_binom = np.asarray(log_binom, dtype=float)
    p, log_p, dl, d2l, live = _log_terms(log_binom, slope, x)
    order = p.shape[0]

    G = p.sum(axis=0)
    G1 = (p * dl).sum(axis=0)
    G2 = (p * (dl * dl + d2l)).sum(axis=0)
    cols = G > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_G = np.where(cols, np.log(G), 0.0)
        r1 = np.where(cols, G1 / G, 0.0)
        r2 = np.where(cols, G2 / G, 0.0)
        log_ratio = np.where(live, log_p - log_G[None, :], 0.0)

        pl = np.where(live, p * log_p, 0.0)
        t1 = p * dl * log_ratio
        t2 = (
            p * (dl * dl + d2l) * (1.0 + log_ratio)
            + p * dl * (dl - 2.0 * r1[None, :])
            - p * (r2 - r1 * r1)[None, :]
        )
    t2 = np.where(live, t2, 0.0)
    GlG = np.where(cols, G * log_G, 0.0)

    scale = 1.0 / (order * LN2)
    rate = math.log2(order) + scale * (math.fsum(pl.ravel()) - math.fsum(GlG))
    d1 = scale * math.fsum(t1.ravel())
    d2 = scale * math.fsum(t2.ravel())
    return rate, d1, d2


def arrival_counts(times, pixels, offsets, period, gate, n_pixels, n_gates):
    """Count distinct (pixel, gate) triggers per trial.

    Trial ``i`` owns photons ``offsets[i]:offsets[i+1]``.  A photon at time
    ``t`` falls in gate ``floor(t / period)`` and triggers it when it lands in
    the first ``gate`` ns of the period.
    """
    times = np.asarray(times, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64)
    trials = offsets.shape[0] - 1
    slots = np.floor(times / period)
    in_gate = ((times - slots * period) < gate) & (slots < n_gates)
    trial_id = np.repeat(np.arange(trials, dtype=np.int64), np.diff(offsets))
    cells = n_pixels * n_gates
    key = (trial_id * n_pixels + pixels) * n_gates + slots.astype(np.int64)
    fired = np.unique(key[in_gate])
    return np.bincount(fired // cells, minlength=trials).astype(np.int64)


def trigger_solve(slope, offset, target, floor_, eps, t_max):
    """Attenuation that brings the mean trigger probability down to ``target``.

    Returns ``(alpha, mean_trigger, iterations, status)`` with status 0 for a
    root or alpha = 1, 1 when even ``floor_`` overshoots, 2 when ``t_max``
    iterations did not reach ``h**2 <= eps``.
    """
    pairs = list(zip(slope, offset))
    n = len(pairs)

    def mean_and_slope(a):
        s = ds = 0.0
        for sl, b in pairs:
            e = math.expm1(-(a * sl + b))
            s -= e
            ds += sl * (1.0 + e)
        return s / n, ds / n

    alpha, lo, hi = 1.0, floor_, 1.0
    mean, dmean = mean_and_slope(alpha)
    if mean <= target:
        return alpha, mean, 0, 0
    if mean_and_slope(lo)[0] >= target:
        return lo, mean_and_slope(lo)[0], 0, 1
    h = mean - target
    t = 0
    while t < t_max and h * h > eps:
        cand = alpha - h / dmean if dmean > 0.0 else -1.0
        if not lo < cand < hi:
            cand = math.sqrt(lo * hi) if hi > 4.0 * lo else 0.5 * (lo + hi)
        alpha = cand
        mean, dmean = mean_and_slope(alpha)
        h = mean - target
        t += 1
        if h > 0.0:
            hi = alpha
        else:
            lo = alpha
    return alpha, mean, t, 0 if h * h <= eps else 2
