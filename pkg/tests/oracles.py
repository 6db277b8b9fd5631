"""Independent high-precision reference implementations used by the tests."""
import mpmath as mp

mp.mp.dps = 40


def binomial_pmf_row(kmax, x):
    """Binomial(kmax, 1 - exp(-x)) PMF at 40 digits."""
    x = mp.mpf(x)
    q = -mp.expm1(-x)
    return [mp.binomial(kmax, k) * q**k * mp.exp(-x * (kmax - k)) for k in range(kmax + 1)]


def mutual_information_definitional(kmax, xs):
    """I = sum_m (1/M) sum_k p log2(p / ((1/M) sum_m' p)), straight double sum."""
    rows = [binomial_pmf_row(kmax, x) for x in xs]
    M = len(rows)
    total = mp.mpf(0)
    for k in range(kmax + 1):
        mix = sum(r[k] for r in rows) / M
        for r in rows:
            if r[k] > 0:
                total += r[k] / M * mp.log(r[k] / mix, 2)
    return total


def core(kmax, k, slope, alpha, offset=0.0):
    """f(alpha) = q^k (1-q)^(kmax-k) with q = 1 - exp(-(alpha*slope + offset))."""
    x = mp.mpf(alpha) * slope + offset
    return (-mp.expm1(-x)) ** k * mp.exp(-x * (kmax - k))


def core_printed_derivatives(kmax, k, slope, alpha, offset=0.0):
    """Expanded power forms of f' and f'' valid for k >= 2."""
    assert k >= 2
    slope = mp.mpf(slope)
    x = mp.mpf(alpha) * slope + offset
    u = mp.exp(x)
    base = (u - 1) ** (k - 2) * mp.exp(-x * kmax)
    bracket = kmax + u * (k - kmax)
    f1 = slope * (u - 1) ** (k - 1) * mp.exp(-x * kmax) * bracket
    f2 = slope**2 * base * (bracket**2 - k * u)
    return f1, f2


def central_first(fn, a, h):
    a, h = mp.mpf(a), mp.mpf(h)
    return (fn(a + h) - fn(a - h)) / (2 * h)


def central_second(fn, a, h):
    a, h = mp.mpf(a), mp.mpf(h)
    return (fn(a + h) - 2 * fn(a) + fn(a - h)) / (h * h)
