"""Hand-written closed forms used as independent references in the tests.

Every function takes the copula of the CDFs, ``C(u, v)``, and is coded directly
from the textbook expressions without touching the package.
"""

import numpy as np


def cdf(family, a, u, v):
    if family == "gumbel":
        x, y = -np.log(u), -np.log(v)
        return np.exp(-((x ** a + y ** a) ** (1 / a)))
    if family == "clayton":
        return (u ** -a + v ** -a - 1) ** (-1 / a)
    if family == "frank":
        g = lambda t: np.exp(-a * t) - 1  # noqa: E731
        return -np.log1p(g(u) * g(v) / g(1)) / a
    if family == "joe":
        p, q = (1 - u) ** a, (1 - v) ** a
        return 1 - (p + q - p * q) ** (1 / a)
    raise ValueError(family)


def h(family, a, u, v):
    """dC/du."""
    if family == "gumbel":
        x, y = -np.log(u), -np.log(v)
        A = (x ** a + y ** a) ** (1 / a)
        return np.exp(-A) * A ** (1 - a) * x ** (a - 1) / u
    if family == "clayton":
        return u ** (-a - 1) * (u ** -a + v ** -a - 1) ** (-1 / a - 1)
    if family == "frank":
        g = lambda t: np.exp(-a * t) - 1  # noqa: E731
        return np.exp(-a * u) * g(v) / (g(1) + g(u) * g(v))
    if family == "joe":
        p, q = (1 - u) ** a, (1 - v) ** a
        S = p + q - p * q
        return S ** (1 / a - 1) * (1 - u) ** (a - 1) * (1 - q)
    raise ValueError(family)


def density(family, a, u, v):
    if family == "gumbel":
        x, y = -np.log(u), -np.log(v)
        s = x ** a + y ** a
        C = np.exp(-(s ** (1 / a)))
        return C / (u * v) * (x * y) ** (a - 1) * s ** (1 / a - 2) * (s ** (1 / a) + a - 1)
    if family == "clayton":
        return (1 + a) * (u * v) ** (-a - 1) * (u ** -a + v ** -a - 1) ** (-1 / a - 2)
    if family == "frank":
        g = lambda t: np.exp(-a * t) - 1  # noqa: E731
        return -a * g(1) * np.exp(-a * (u + v)) / (g(1) + g(u) * g(v)) ** 2
    if family == "joe":
        p, q = (1 - u) ** a, (1 - v) ** a
        S = p + q - p * q
        return S ** (1 / a - 2) * ((1 - u) * (1 - v)) ** (a - 1) * (a - 1 + S)
    raise ValueError(family)


def censored_term(family, a, Sm, Sf, delta_m, delta_f):
    """Log contribution of one couple given marginal survival values.

    Joint survival is ``P(T_m > s, T_f > t) = 1 - F_m - F_f + C(F_m, F_f)``;
    its derivatives give the one-death and two-death terms.
    """
    Fm, Ff = 1 - Sm, 1 - Sf
    if delta_m == 0 and delta_f == 0:
        return np.log(density(family, a, Fm, Ff))
    if delta_m == 0:
        return np.log(1 - h(family, a, Fm, Ff))
    if delta_f == 0:
        return np.log(1 - h(family, a, Ff, Fm))
    return np.log(1 - Fm - Ff + cdf(family, a, Fm, Ff))


def gompertz_log_survival(m, sigma, x, t):
    # integral of the hazard exp((s - m)/sigma)/sigma from x to x + t
    return -(np.exp((x + t - m) / sigma) - np.exp((x - m) / sigma))


def gompertz_log_density(m, sigma, x, t):
    return (x + t - m) / sigma - np.log(sigma) + gompertz_log_survival(m, sigma, x, t)


def censored_term_exact(family, a, Sm, Sf, delta_m, delta_f, digits=50):
    """:func:`censored_term` in 50-digit arithmetic, returned as a float."""
    import mpmath as mp

    with mp.workdps(digits):
        a, u, v = mp.mpf(a), 1 - mp.mpf(Sm), 1 - mp.mpf(Sf)
        ops = dict(log=mp.log, exp=mp.exp)

        def C(p, q):
            return _mp_cdf(family, a, p, q, **ops)

        def dC(p, q):
            return mp.diff(lambda s: C(s, q), p)

        if delta_m == 0 and delta_f == 0:
            val = mp.diff(lambda s, t: C(s, t), (u, v), (1, 1))
        elif delta_m == 0:
            val = 1 - dC(u, v)
        elif delta_f == 0:
            val = 1 - dC(v, u)
        else:
            val = 1 - u - v + C(u, v)
        return float(mp.log(val))


def _mp_cdf(family, a, u, v, log, exp):
    if family == "gumbel":
        return exp(-(((-log(u)) ** a + (-log(v)) ** a) ** (1 / a)))
    if family == "clayton":
        return (u ** -a + v ** -a - 1) ** (-1 / a)
    if family == "frank":
        g = lambda t: exp(-a * t) - 1  # noqa: E731
        return -log(1 + g(u) * g(v) / g(1)) / a
    if family == "joe":
        p, q = (1 - u) ** a, (1 - v) ** a
        return 1 - (p + q - p * q) ** (1 / a)
    raise ValueError(family)
