"""Bivariate Archimedean copulas: Gumbel, Frank, Clayton, Joe and independence.

``C`` is the copula of the lifetime distribution functions, ``(F_m(T_m), F_f(T_f))``.
Joint survival probabilities use the survival copula
``C~(u, v) = u + v - 1 + C(1 - u, 1 - v)`` evaluated at marginal survival values.

Every function broadcasts over ``alpha``, ``u`` and ``v`` so that each couple can
carry its own association parameter.
"""

import enum

import numpy as np
from scipy import integrate, optimize, special

from . import _rng
from ._validation import check_positive_int, check_probability

_LN2 = np.log(2.0)


class CopulaFamily(str, enum.Enum):
    GUMBEL = "gumbel"
    FRANK = "frank"
    CLAYTON = "clayton"
    JOE = "joe"
    INDEPENDENCE = "independence"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown copula family {value!r}; expected one of {names}") from None

    @property
    def has_unit_intercept(self):
        """Gumbel and Joe parameters live above one, so their alpha(d) adds 1."""
        return self in (CopulaFamily.GUMBEL, CopulaFamily.JOE)


# Frank parameters closer to zero than this are evaluated as independence.
_FRANK_ZERO = 1e-12


def admissible(family, alpha):
    """Elementwise test of the family's parameter range."""
    family = CopulaFamily.parse(family)
    alpha = np.asarray(alpha, dtype=float)
    finite = np.isfinite(alpha)
    if family is CopulaFamily.INDEPENDENCE:
        return np.ones_like(alpha, dtype=bool)
    if family in (CopulaFamily.GUMBEL, CopulaFamily.JOE):
        return finite & (alpha > 1)
    if family is CopulaFamily.CLAYTON:
        return finite & (alpha > 0)
    return finite & (alpha != 0)


def check_alpha(family, alpha):
    family = CopulaFamily.parse(family)
    if family is CopulaFamily.INDEPENDENCE:
        return family, np.asarray(0.0 if alpha is None else alpha, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(admissible(family, alpha)):
        ranges = {"gumbel": "> 1", "joe": "> 1", "clayton": "> 0", "frank": "!= 0"}
        raise ValueError(f"{family.value} copula parameter must be {ranges[family.value]}, got {alpha}")
    return family, alpha


# --------------------------------------------------------------------------
# family kernels: cdf, h = dC/du, log density. No checks, arrays broadcast.
# --------------------------------------------------------------------------

def _gumbel_logA(a, lx, ly):
    # log of A = (x^a + y^a)^(1/a) with lx = log(-log u)
    return np.logaddexp(a * lx, a * ly) / a


def _gumbel_cdf(a, u, v):
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(-np.log(u))
        ly = np.log(-np.log(v))
        return np.exp(-np.exp(_gumbel_logA(a, lx, ly)))


def _gumbel_logh(a, u, v):
    # with x = -log u, A = x (1 + r)^(1/a), r = (y/x)^a:
    # log h = -(A - x) - (a - 1) log1p(r) / a, free of cancellation as v -> 1
    x = -np.log(u)
    with np.errstate(divide="ignore", over="ignore"):
        lr = a * (np.log(-np.log(v)) - np.log(x))
        l1p = np.logaddexp(0.0, lr)
    return -x * np.expm1(l1p / a) - (a - 1) * l1p / a


def _gumbel_logpdf(a, u, v):
    lu, lv = np.log(u), np.log(v)
    lx, ly = np.log(-lu), np.log(-lv)
    logA = _gumbel_logA(a, lx, ly)
    A = np.exp(logA)
    return -A - lu - lv + (a - 1) * (lx + ly) + (1 - 2 * a) * logA + np.log(A + a - 1)


def _clayton_logS(a, u, v):
    # log(u^-a + v^-a - 1), stable for both u, v near 1 and near 0
    p = -a * np.log(u)
    q = -a * np.log(v)
    m = np.maximum(p, q)
    s = np.minimum(p, q)
    return m + np.log1p(np.exp(s - m) * -np.expm1(-s))


def _clayton_cdf(a, u, v):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(-_clayton_logS(a, u, v) / a)
    return np.where((u == 0) | (v == 0), 0.0, out)


def _clayton_logh(a, u, v):
    # log h = -(1 + 1/a) log1p(u^a (v^-a - 1)), evaluated in log space
    q = -a * np.log(v)
    with np.errstate(divide="ignore"):
        t = a * np.log(u) + q + np.log(-np.expm1(-q))
    return -(1 + 1 / a) * np.logaddexp(0.0, t)


def _clayton_logpdf(a, u, v):
    return np.log1p(a) + (-a - 1) * (np.log(u) + np.log(v)) + (-1 / a - 2) * _clayton_logS(a, u, v)


def _frank_parts(a, u, v):
    g1 = np.expm1(-a)
    gu = np.expm1(-a * u)
    gv = np.expm1(-a * v)
    return g1, gu, gv


def _frank_cdf(a, u, v):
    small = np.abs(a) < _FRANK_ZERO
    a_safe = np.where(small, 1.0, a)
    g1, gu, gv = _frank_parts(a_safe, u, v)
    out = -np.log1p(gu * gv / g1) / a_safe
    return np.where(small, u * v, out)


def _frank_logh(a, u, v):
    small = np.abs(a) < _FRANK_ZERO
    a_safe = np.where(small, 1.0, a)
    g1, gu, gv = _frank_parts(a_safe, u, v)
    out = -a_safe * u + np.log(gv / (g1 + gu * gv))
    return np.where(small, np.log(v), out)


def _frank_logpdf(a, u, v):
    small = np.abs(a) < _FRANK_ZERO
    a_safe = np.where(small, 1.0, a)
    g1, gu, gv = _frank_parts(a_safe, u, v)
    out = np.log(-a_safe * g1) - a_safe * (u + v) - 2 * np.log(np.abs(g1 + gu * gv))
    return np.where(small, 0.0, out)


def _joe_logP(a, u, v):
    # log(ub^a + vb^a - ub^a vb^a) with ub = 1 - u
    la = a * np.log1p(-u)
    lb = a * np.log1p(-v)
    with np.errstate(divide="ignore"):
        return np.logaddexp(la, lb + np.log(-np.expm1(la)))


def _joe_cdf(a, u, v):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(_joe_logP(a, u, v) / a)
    out = np.where((u == 0) | (v == 0), 0.0, out)
    out = np.where(u == 1, v, out)
    return np.where(v == 1, u, out)


def _joe_logh(a, u, v):
    logP = _joe_logP(a, u, v)
    return (1 / a - 1) * logP + (a - 1) * np.log1p(-u) + np.log(-np.expm1(a * np.log1p(-v)))


def _joe_logpdf(a, u, v):
    logP = _joe_logP(a, u, v)
    return (1 / a - 2) * logP + (a - 1) * (np.log1p(-u) + np.log1p(-v)) + np.log(a - 1 + np.exp(logP))


def _indep_cdf(a, u, v):
    return u * v


def _indep_logh(a, u, v):
    return np.log(v) + 0 * u


def _indep_logpdf(a, u, v):
    return 0.0 * (u + v)


_KERNELS = {
    CopulaFamily.GUMBEL: (_gumbel_cdf, _gumbel_logh, _gumbel_logpdf),
    CopulaFamily.FRANK: (_frank_cdf, _frank_logh, _frank_logpdf),
    CopulaFamily.CLAYTON: (_clayton_cdf, _clayton_logh, _clayton_logpdf),
    CopulaFamily.JOE: (_joe_cdf, _joe_logh, _joe_logpdf),
    CopulaFamily.INDEPENDENCE: (_indep_cdf, _indep_logh, _indep_logpdf),
}


def _interior(u, v):
    u = check_probability(u, name="u", low_open=True, high_open=True)
    v = check_probability(v, name="v", low_open=True, high_open=True)
    return u, v


# --------------------------------------------------------------------------
# public evaluation API
# --------------------------------------------------------------------------

def copula_cdf(family, alpha, u, v):
    """``C(u, v)`` on the closed unit square."""
    family, alpha = check_alpha(family, alpha)
    u = check_probability(u, name="u")
    v = check_probability(v, name="v")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _KERNELS[family][0](alpha, u, v)
    # margins are exact by definition
    out = np.where(v == 1, u, out)
    out = np.where(u == 1, v, out)
    out = np.where((u == 0) | (v == 0), 0.0, out)
    return np.clip(out, 0.0, 1.0)


def survival_copula_cdf(family, alpha, u, v):
    """``C~(u, v) = u + v - 1 + C(1 - u, 1 - v)`` for survival values ``u, v``."""
    u = check_probability(u, name="u")
    v = check_probability(v, name="v")
    out = u + v - 1 + copula_cdf(family, alpha, 1 - u, 1 - v)
    return np.clip(out, 0.0, 1.0)


def copula_h(family, alpha, u, v):
    """``dC/du``: conditional distribution of ``V`` given ``U = u``."""
    family, alpha = check_alpha(family, alpha)
    u, v = _interior(u, v)
    return np.clip(np.exp(_KERNELS[family][1](alpha, u, v)), 0.0, 1.0)


def copula_h_v(family, alpha, u, v):
    """``dC/dv``; every family here is exchangeable so this is ``h(v, u)``."""
    return copula_h(family, alpha, v, u)


def copula_density(family, alpha, u, v):
    family, alpha = check_alpha(family, alpha)
    u, v = _interior(u, v)
    return np.exp(_KERNELS[family][2](alpha, u, v))


def copula_log_density(family, alpha, u, v):
    family, alpha = check_alpha(family, alpha)
    u, v = _interior(u, v)
    return _KERNELS[family][2](alpha, u, v)


def survival_copula_h(family, alpha, u, v):
    """``dC~/du = 1 - h_C(1 - u, 1 - v)``."""
    return 1.0 - copula_h(family, alpha, 1 - np.asarray(u, float), 1 - np.asarray(v, float))


def survival_copula_h_v(family, alpha, u, v):
    return 1.0 - copula_h_v(family, alpha, 1 - np.asarray(u, float), 1 - np.asarray(v, float))


def survival_copula_density(family, alpha, u, v):
    return copula_density(family, alpha, 1 - np.asarray(u, float), 1 - np.asarray(v, float))


# Unchecked log-space pieces used by the likelihood; callers clamp inputs.

def log_survival_density(family, alpha, u, v):
    return _KERNELS[family][2](alpha, 1 - u, 1 - v)


def log1mexp(x):
    """``log(1 - exp(x))`` for ``x <= 0``, accurate at both ends of the range."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > -_LN2, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def log_survival_h(family, alpha, u, v):
    return log1mexp(_KERNELS[family][1](alpha, 1 - u, 1 - v))


def log_survival_h_v(family, alpha, u, v):
    return log1mexp(_KERNELS[family][1](alpha, 1 - v, 1 - u))


def log_survival_cdf(family, alpha, u, v):
    with np.errstate(divide="ignore", invalid="ignore"):
        c = _KERNELS[family][0](alpha, 1 - u, 1 - v)
    return np.log(np.maximum(u + v - 1 + c, 1e-300))


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def _invert_h(family, alpha, u, w, tol=1e-10, max_iter=200):
    """Solve ``h(u, v) = w`` for ``v`` by bracketed Newton iteration."""
    logh = _KERNELS[family][1]
    logpdf = _KERNELS[family][2]
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    v = w.copy()
    active = np.ones(u.shape, dtype=bool)
    eps = 1e-300
    for _ in range(max_iter):
        if not active.any():
            break
        ia = np.flatnonzero(active)
        ua, va, wa = u[ia], v[ia], w[ia]
        aa = alpha[ia] if alpha.ndim else alpha
        vc = np.clip(va, eps, 1 - 1e-16)
        with np.errstate(all="ignore"):
            f = np.exp(logh(aa, ua, vc)) - wa
            dens = np.exp(logpdf(aa, ua, vc))
        below = f < 0
        lo[ia] = np.where(below, va, lo[ia])
        hi[ia] = np.where(below, hi[ia], va)
        with np.errstate(all="ignore"):
            step = f / dens
            cand = va - step
        bad = ~np.isfinite(cand) | (cand <= lo[ia]) | (cand >= hi[ia])
        cand = np.where(bad, 0.5 * (lo[ia] + hi[ia]), cand)
        v[ia] = cand
        done = (hi[ia] - lo[ia] < tol) | (~bad & (np.abs(step) < tol * 1e-2))
        active[ia[done]] = False
    return np.clip(v, 0.0, 1.0)


def copula_sample(family, alpha, n, seed=None, uniforms=None):
    """Draw ``n`` pairs ``(U, V)`` with distribution ``C`` by conditional inversion.

    ``U`` is uniform; ``V`` solves ``h(U, V) = W`` for an independent uniform ``W``.
    ``alpha`` may be a scalar or an array of length ``n`` (one parameter per pair).
    ``uniforms`` optionally supplies the ``(n, 2)`` array of ``(U, W)`` draws.
    """
    n = check_positive_int(n, "n")
    family, alpha = check_alpha(family, alpha)
    if alpha.ndim and alpha.shape != (n,):
        raise ValueError(f"alpha must be scalar or of length {n}")
    if uniforms is None:
        uniforms = _rng.make_generator(seed).random((n, 2))
    uniforms = np.asarray(uniforms, dtype=float)
    if n == 0:
        return np.empty((0, 2))
    u, w = uniforms[:, 0], uniforms[:, 1]
    if family is CopulaFamily.INDEPENDENCE:
        return np.column_stack([u, w])
    # keep strictly inside the square: the kernels are singular on the boundary
    u = np.clip(u, 1e-15, 1 - 1e-15)
    w = np.clip(w, 1e-15, 1 - 1e-15)
    v = _invert_h(family, alpha, u, w)
    return np.column_stack([u, v])


def _sample_sibuya(theta, size, rng):
    # inversion of P(V > k) = Gamma(k + 1 - theta) / (Gamma(k + 1) Gamma(1 - theta))
    u = rng.random(size)
    lg1 = special.gammaln(1 - theta)

    def log_tail(k):
        k = np.maximum(k, 1.0)
        small = special.gammaln(k + 1 - theta) - special.gammaln(k + 1) - lg1
        big = -theta * np.log(k) + np.log1p(theta * (theta - 1) / (2 * k)) - lg1
        return np.where(k < 1e7, small, big)

    logu = np.log(u)
    lo = np.ones(size)
    hi = np.ones(size)
    while True:
        grow = log_tail(hi) > logu
        if not grow.any():
            break
        hi = np.where(grow, hi * 2, hi)
    # V = smallest integer k >= 1 with P(V > k) <= u; the tail at k = 1 is 1 - theta
    first = log_tail(lo) <= logu
    for _ in range(200):
        if np.all(hi - lo <= 1):
            break
        mid = np.floor(0.5 * (lo + hi))
        ok = log_tail(mid) <= logu
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return np.where(first, 1.0, hi)


def frailty_sample(family, alpha, n, seed=None):
    """Marshall-Olkin frailty sampler, an independent route used to cross-check
    :func:`copula_sample`. Only a scalar positive-dependence ``alpha`` is supported."""
    n = check_positive_int(n, "n")
    family, alpha = check_alpha(family, alpha)
    alpha = float(alpha)
    rng = _rng.make_generator(seed)
    if family is CopulaFamily.INDEPENDENCE:
        return rng.random((n, 2))
    e = rng.exponential(size=(n, 2))
    if family is CopulaFamily.GUMBEL:
        theta = 1.0 / alpha
        w = rng.uniform(0, np.pi, n)
        ex = rng.exponential(size=n)
        frailty = (np.sin(theta * w) / np.sin(w) ** (1 / theta)) * (
            np.sin((1 - theta) * w) / ex
        ) ** ((1 - theta) / theta)
        return np.exp(-((e / frailty[:, None]) ** theta))
    if family is CopulaFamily.CLAYTON:
        frailty = rng.gamma(1.0 / alpha, size=n)
        return (1 + e / frailty[:, None]) ** (-1.0 / alpha)
    if family is CopulaFamily.FRANK:
        if alpha <= 0:
            raise ValueError("frailty sampler needs a positive Frank parameter")
        p = -np.expm1(-alpha)
        frailty = rng.logseries(p, size=n).astype(float)
        return -np.log1p(-p * np.exp(-e / frailty[:, None])) / alpha
    frailty = _sample_sibuya(1.0 / alpha, n, rng)
    return -np.expm1(np.log(-np.expm1(-e / frailty[:, None])) / alpha)


# --------------------------------------------------------------------------
# Kendall's tau
# --------------------------------------------------------------------------

def _debye1(a):
    if abs(a) < 1e-12:
        return 1.0
    val, _ = integrate.quad(lambda t: t / np.expm1(t) if t != 0 else 1.0, 0.0, a,
                            epsabs=1e-13, epsrel=1e-12)
    return val / a


def kendall_tau(family, alpha):
    """Population Kendall's tau of the copula."""
    family = CopulaFamily.parse(family)
    if family is CopulaFamily.INDEPENDENCE:
        return 0.0
    _, alpha = check_alpha(family, alpha)
    a = float(alpha)
    if family is CopulaFamily.GUMBEL:
        return 1 - 1 / a
    if family is CopulaFamily.CLAYTON:
        return a / (a + 2)
    if family is CopulaFamily.FRANK:
        return 1 - 4 / a * (1 - _debye1(a))

    def ratio(t):
        # phi / phi' for phi(t) = -log(1 - (1 - t)^a), written as
        # -(1 - t)(1 - s)/a * (-log(1 - s)/s) so it stays finite as s -> 0
        s = (1 - t) ** a
        g = -np.log1p(-s) / s if s > 0 else 1.0
        return -(1 - t) * (1 - s) * g / a

    val, _ = integrate.quad(ratio, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 1 + 4 * val


def alpha_from_tau(family, tau):
    """Invert :func:`kendall_tau`; ``tau`` is clipped into the family's range."""
    family = CopulaFamily.parse(family)
    if family is CopulaFamily.INDEPENDENCE:
        return None
    tau = float(tau)
    lo_tau = -0.95 if family is CopulaFamily.FRANK else 1e-4
    tau = min(max(tau, lo_tau), 0.95)
    if family is CopulaFamily.GUMBEL:
        return 1 / (1 - tau)
    if family is CopulaFamily.CLAYTON:
        return 2 * tau / (1 - tau)
    if family is CopulaFamily.FRANK:
        if abs(tau) < 1e-8:
            return 1e-6
        bracket = (1e-9, 200.0) if tau > 0 else (-200.0, -1e-9)
        return optimize.brentq(lambda a: kendall_tau(family, a) - tau, *bracket, xtol=1e-12)
    return optimize.brentq(lambda a: kendall_tau(family, a) - tau, 1 + 1e-9, 200.0, xtol=1e-12)
