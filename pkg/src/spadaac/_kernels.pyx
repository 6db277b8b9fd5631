# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see _kernels_py.py for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.math cimport exp, expm1, log, log2, floor, INFINITY

cnp.import_array()

cdef double LN2 = 0.6931471805599453


cdef inline void _neumaier(double* acc, double value) noexcept nogil:
    # acc[0] running sum, acc[1] running compensation
    cdef double t = acc[0] + value
    if abs(acc[0]) >= abs(value):
        acc[1] += (acc[0] - t) + value
    else:
        acc[1] += (value - t) + acc[0]
    acc[0] = t


def rate_and_derivatives(const double[::1] log_binom, const double[::1] slope, const double[::1] x):
    cdef Py_ssize_t order = x.shape[0]
    cdef Py_ssize_t K = log_binom.shape[0]
    cdef Py_ssize_t kmax = K - 1
    cdef Py_ssize_t m, k
    cdef double[::1] log_q = np.empty(order)
    cdef double[::1] inv_q = np.empty(order)
    cdef double[::1] curv = np.empty(order)
    cdef double[::1] p = np.empty(order)
    cdef double[::1] lp = np.empty(order)
    cdef double[::1] dl = np.empty(order)
    cdef double[::1] d2l = np.empty(order)
    cdef double s_rate[2]
    cdef double s_d1[2]
    cdef double s_d2[2]
    cdef double q, kk, G, G1, G2, logG, r1, r2, lr, a, b

    s_rate[0] = 0.0; s_rate[1] = 0.0
    s_d1[0] = 0.0; s_d1[1] = 0.0
    s_d2[0] = 0.0; s_d2[1] = 0.0

    with nogil:
        for m in range(order):
            q = -expm1(-x[m])
            if q > 0.0:
                log_q[m] = log(q)
                inv_q[m] = 1.0 / q
                curv[m] = slope[m] * slope[m] * exp(-x[m]) / (q * q)
            else:
                log_q[m] = -INFINITY
                inv_q[m] = 0.0
                curv[m] = 0.0

        for k in range(K):
            kk = <double>k
            G = 0.0
            G1 = 0.0
            G2 = 0.0
            for m in range(order):
                a = log_binom[k]
                if k > 0:
                    a += kk * log_q[m]
                if kmax - k > 0:
                    a -= (kmax - kk) * x[m]
                lp[m] = a
                p[m] = exp(a)
                if p[m] > 0.0:
                    if k > 0:
                        dl[m] = slope[m] * (kk * inv_q[m] - kmax)
                        d2l[m] = -kk * curv[m]
                    else:
                        dl[m] = -slope[m] * kmax
                        d2l[m] = 0.0
                else:
                    dl[m] = 0.0
                    d2l[m] = 0.0
                G += p[m]
                G1 += p[m] * dl[m]
                G2 += p[m] * (dl[m] * dl[m] + d2l[m])
            if G <= 0.0:
                continue
            logG = log(G)
            r1 = G1 / G
            r2 = G2 / G
            _neumaier(s_rate, -G * logG)
            for m in range(order):
                if p[m] <= 0.0:
                    continue
                lr = lp[m] - logG
                _neumaier(s_rate, p[m] * lp[m])
                _neumaier(s_d1, p[m] * dl[m] * lr)
                b = (p[m] * (dl[m] * dl[m] + d2l[m]) * (1.0 + lr)
                     + p[m] * dl[m] * (dl[m] - 2.0 * r1)
                     - p[m] * (r2 - r1 * r1))
                _neumaier(s_d2, b)

    cdef double scale = 1.0 / (order * LN2)
    rate = log2(<double>order) + scale * (s_rate[0] + s_rate[1])
    return rate, scale * (s_d1[0] + s_d1[1]), scale * (s_d2[0] + s_d2[1])


def arrival_counts(const double[::1] times, const long long[::1] pixels, const long long[::1] offsets,
                   double period, double gate, long long n_pixels, long long n_gates):
    cdef Py_ssize_t trials = offsets.shape[0] - 1
    cdef Py_ssize_t i, j
    cdef long long slot, cell
    cdef long long cells = n_pixels * n_gates
    cdef double t, s
    counts_arr = np.zeros(trials, dtype=np.int64)
    stamp_arr = np.full(cells, -1, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef long long[::1] stamp = stamp_arr

    with nogil:
        for i in range(trials):
            for j in range(offsets[i], offsets[i + 1]):
                t = times[j]
                s = floor(t / period)
                if t - s * period >= gate:
                    continue
                slot = <long long>s
                if slot >= n_gates:
                    continue
                cell = pixels[j] * n_gates + slot
                if stamp[cell] != i:
                    stamp[cell] = i
                    counts[i] += 1
    return counts_arr


cdef inline double _mean_trigger(const double* slope, const double* offset, Py_ssize_t order,
                                 double alpha, double* dmean) noexcept nogil:
    cdef Py_ssize_t m
    cdef double s = 0.0, ds = 0.0, e
    for m in range(order):
        e = expm1(-(alpha * slope[m] + offset[m]))
        s -= e
        ds += slope[m] * (1.0 + e)
    dmean[0] = ds / order
    return s / order


def trigger_solve(slope, offset, double target, double floor_, double eps, long long t_max):
    """Attenuation that brings the mean trigger probability down to ``target``.

    Returns ``(alpha, mean_trigger, iterations, status)`` with status 0 for a
    root or alpha = 1, 1 when even ``floor_`` overshoots, 2 when ``t_max``
    iterations did not reach ``h**2 <= eps``.
    """
    cdef Py_ssize_t order = len(slope)
    cdef Py_ssize_t m
    cdef double* buf = <double*>malloc(2 * order * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* s = buf
    cdef double* b = buf + order
    for m in range(order):
        s[m] = slope[m]
        b[m] = offset[m]
    cdef double alpha = 1.0, lo = floor_, hi = 1.0, mean, dmean, h, cand, unused
    cdef long long t = 0
    cdef int status = 0
    with nogil:
        mean = _mean_trigger(s, b, order, alpha, &dmean)
        if mean > target:
            if _mean_trigger(s, b, order, lo, &unused) >= target:
                alpha = lo
                mean = _mean_trigger(s, b, order, alpha, &dmean)
                status = 1
            else:
                h = mean - target
                while t < t_max and h * h > eps:
                    cand = alpha - h / dmean if dmean > 0.0 else -1.0
                    if not (lo < cand < hi):
                        cand = (lo * hi) ** 0.5 if hi > 4.0 * lo else 0.5 * (lo + hi)
                    alpha = cand
                    mean = _mean_trigger(s, b, order, alpha, &dmean)
                    h = mean - target
                    t += 1
                    if h > 0.0:
                        hi = alpha
                    else:
                        lo = alpha
                if h * h > eps:
                    status = 2
    free(buf)
    return alpha, mean, t, status
