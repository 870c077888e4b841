"""Maximum likelihood for Gompertz margins and age-gap copula models.

Observations are left truncated at the entry age and right censored at the end
of the window. The Gompertz law used here is already conditional on survival
to entry, so truncation needs no extra term.

Copula parameters are estimated in two ways:

* IFM: margins are fitted first and their survival values plugged in.
* omnibus: margins are replaced by rescaled Kaplan-Meier pseudo-observations.

Both maximise the same four-case censored likelihood (density if both died, a
partial derivative if one died, the survival copula if neither did).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _rng
from ._validation import check_couples
from .copulas import _KERNELS, CopulaFamily, alpha_from_tau, log1mexp
from .dependence import DEFAULT_D_DOMAIN, DependenceModel
from .survival import (
    GompertzParams,
    conditional_km_survival,
    gompertz_log_density,
    gompertz_log_survival,
    km_fit,
)

_F_MIN = 1e-15
_F_MAX = 1 - 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    """Nelder-Mead settings. ``restarts`` counts the total number of runs."""

    xatol: float = 1e-8
    fatol: float = 1e-8
    maxiter: int = 2000
    restarts: int = 5
    jitter: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class MarginalFit:
    params: GompertzParams
    std_errors: tuple
    log_likelihood: float
    n_used: int
    converged: bool
    iterations: int = 0
    hessian_ok: bool = True

    def to_dict(self):
        return {"m": self.params.m, "sigma": self.params.sigma,
                "std_errors": {"m": self.std_errors[0], "sigma": self.std_errors[1]},
                "loglik": self.log_likelihood, "n": self.n_used,
                "converged": self.converged, "iterations": self.iterations}

    @classmethod
    def from_dict(cls, data):
        se = data.get("std_errors", {})
        return cls(GompertzParams(data["m"], data["sigma"]),
                   (se.get("m", math.nan), se.get("sigma", math.nan)),
                   data.get("loglik", math.nan), data.get("n", 0),
                   data.get("converged", True), data.get("iterations", 0))


@dataclass(frozen=True)
class CopulaFit:
    model: DependenceModel
    std_errors: dict
    log_likelihood: float
    method: str
    converged: bool
    n_used: int = 0
    iterations: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return {"method": self.method, "family": self.model.family.value,
                "form": self.model.form, "coefficients": self.model.coefficients,
                "std_errors": self.std_errors, "loglik": self.log_likelihood,
                "converged": self.converged, "n": self.n_used,
                "iterations": self.iterations}

    @classmethod
    def from_dict(cls, data):
        model = DependenceModel.from_dict({"family": data["family"], "form": data["form"],
                                           **data["coefficients"]})
        return cls(model, dict(data.get("std_errors", {})), data.get("loglik", math.nan),
                   data.get("method", "ifm"), data.get("converged", True),
                   data.get("n", 0), data.get("iterations", 0))


# --------------------------------------------------------------------------
# log-likelihoods
# --------------------------------------------------------------------------

def _fsum(a):
    # exactly rounded and independent of summation order
    return math.fsum(np.ravel(a))


def marginal_loglik(params, x, t, delta):
    """Censored Gompertz log-likelihood; ``delta = 1`` marks a censored lifetime."""
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    cens = np.asarray(delta).astype(bool)
    terms = np.where(cens, gompertz_log_survival(params, x, t), gompertz_log_density(params, x, t))
    return _fsum(terms)


@dataclass(frozen=True)
class _CaseSplit:
    """Row indices of the four censoring patterns."""

    both_dead: np.ndarray
    m_dead: np.ndarray  # husband died, wife censored
    f_dead: np.ndarray  # wife died, husband censored
    both_cens: np.ndarray

    @classmethod
    def from_flags(cls, delta_m, delta_f):
        dm = np.asarray(delta_m).astype(bool)
        df = np.asarray(delta_f).astype(bool)
        return cls(np.flatnonzero(~dm & ~df), np.flatnonzero(~dm & df),
                   np.flatnonzero(dm & ~df), np.flatnonzero(dm & df))

    def counts(self):
        return {"both_dead": len(self.both_dead), "male_dead_only": len(self.m_dead),
                "female_dead_only": len(self.f_dead), "both_censored": len(self.both_cens)}


def censoring_cases(delta_m, delta_f):
    """Counts of the four censoring patterns (they partition the couples)."""
    return _CaseSplit.from_flags(delta_m, delta_f).counts()


def _copula_terms(family, alpha, Fm, Ff, cases):
    """Per-couple log contributions given lifetime CDF values ``F = 1 - S``."""
    cdf, logh, logpdf = _KERNELS[family]
    alpha = np.broadcast_to(np.asarray(alpha, float), Fm.shape)
    Fm = np.clip(Fm, _F_MIN, _F_MAX)
    Ff = np.clip(Ff, _F_MIN, _F_MAX)
    out = np.empty_like(Fm)
    with np.errstate(all="ignore"):
        i = cases.both_dead
        out[i] = logpdf(alpha[i], Fm[i], Ff[i])
        i = cases.m_dead
        out[i] = log1mexp(logh(alpha[i], Fm[i], Ff[i]))
        i = cases.f_dead
        out[i] = log1mexp(logh(alpha[i], Ff[i], Fm[i]))
        i = cases.both_cens
        c = cdf(alpha[i], Fm[i], Ff[i])
        out[i] = np.log(np.maximum(1 - Fm[i] - Ff[i] + c, 1e-300))
    return out


def copula_loglik(model, d, Sm, Sf, delta_m, delta_f):
    """Censored copula log-likelihood at marginal survival values ``Sm, Sf``.

    Each couple contributes ``log c~`` (both died), ``log dC~/du`` (husband died),
    ``log dC~/dv`` (wife died) or ``log C~`` (both censored), with ``C~`` the
    survival copula at parameter ``alpha(d)``.
    """
    Sm = np.asarray(Sm, float)
    Sf = np.asarray(Sf, float)
    cases = _CaseSplit.from_flags(delta_m, delta_f)
    alpha = model.alpha_of_d(d)
    return _fsum(_copula_terms(model.family, alpha, 1 - Sm, 1 - Sf, cases))


def full_loglik(model, marg_m, marg_f, X):
    """Joint log-likelihood of couples under Gompertz margins and ``model``."""
    X = check_couples(X)
    x_m, x_f, t_m, t_f, dm, df = X[:, :6].T
    lm = gompertz_log_survival(marg_m, x_m, t_m)
    lf = gompertz_log_survival(marg_f, x_f, t_f)
    cases = _CaseSplit.from_flags(dm, df)
    terms = _copula_terms(model.family, model.alpha_of_d(x_m - x_f),
                          -np.expm1(lm), -np.expm1(lf), cases)
    terms = terms + np.where(dm == 0, gompertz_log_density(marg_m, x_m, t_m), 0.0)
    terms = terms + np.where(df == 0, gompertz_log_density(marg_f, x_f, t_f), 0.0)
    return _fsum(terms)


# --------------------------------------------------------------------------
# optimisation helpers
# --------------------------------------------------------------------------

def _minimize(fun, z0, cfg, scale=None):
    """Nelder-Mead from ``z0`` then ``restarts - 1`` jittered restarts from the best point."""
    z0 = np.asarray(z0, float)
    rng = _rng.make_generator(cfg.seed)
    best = None
    total_iter = 0
    start = z0
    scale = np.ones_like(z0) if scale is None else np.asarray(scale, float)
    for k in range(max(cfg.restarts, 1)):
        if k > 0:
            start = best.x + cfg.jitter * scale * rng.standard_normal(z0.shape)
            if not np.isfinite(fun(start)):
                start = best.x
        res = optimize.minimize(fun, start, method="Nelder-Mead",
                                options={"xatol": cfg.xatol, "fatol": cfg.fatol,
                                         "maxiter": cfg.maxiter, "maxfev": 10 * cfg.maxiter})
        total_iter += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res
    return best, total_iter


def _hessian(f, theta):
    """Central finite-difference Hessian with step ``1e-4 (1 + |theta|)``."""
    theta = np.asarray(theta, float)
    k = len(theta)
    h = 1e-4 * (1 + np.abs(theta))
    H = np.empty((k, k))
    f0 = f(theta)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(theta + ei) - 2 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(theta + ei + ej) - f(theta + ei - ej)
                                 - f(theta - ei + ej) + f(theta - ei - ej)) / (4 * h[i] * h[j])
    return H


def _std_errors(negll, theta):
    """Square roots of the diagonal of the inverse observed information."""
    try:
        H = _hessian(negll, theta)
    except ValueError:
        return np.full(len(theta), np.nan), False
    if not np.all(np.isfinite(H)):
        return np.full(len(theta), np.nan), False
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return np.full(len(theta), np.nan), False
    cov = np.linalg.inv(H)
    return np.sqrt(np.maximum(np.diag(cov), 0.0)), True


# --------------------------------------------------------------------------
# margins
# --------------------------------------------------------------------------

def _gender_columns(X, gender):
    X = check_couples(X)
    if gender not in ("m", "f"):
        raise ValueError("gender must be 'm' or 'f'")
    j = 0 if gender == "m" else 1
    return X[:, j], X[:, 2 + j], X[:, 4 + j].astype(int)


def fit_marginal(portfolio, gender, optimizer=None):
    """Gompertz MLE for one spouse of every couple.

    Starts from the mean and standard deviation of observed ages at death and
    searches over ``(m, log sigma)``.
    """
    cfg = optimizer or OptimizerConfig()
    x, t, delta = _gender_columns(portfolio, gender)
    if len(x) < 2:
        raise ValueError("fit_marginal needs at least 2 records")
    dead = delta == 0
    if not dead.any():
        raise ValueError("all lifetimes are censored; the Gompertz likelihood has no maximum")
    death_age = x[dead] + t[dead]
    m0 = math.fsum(death_age) / len(death_age)
    s0 = float(np.std(death_age)) if len(death_age) > 1 else 10.0
    s0 = min(max(s0, 1.0), 30.0)

    def negll(z):
        m, log_s = z
        if not (np.isfinite(m) and m > 0 and -5 < log_s < 6):
            return np.inf
        val = -marginal_loglik(GompertzParams(m, math.exp(log_s)), x, t, delta)
        return val if np.isfinite(val) else np.inf

    res, nit = _minimize(negll, [m0, math.log(s0)], cfg, scale=[5.0, 0.3])
    m, sigma = float(res.x[0]), float(math.exp(res.x[1]))
    params = GompertzParams(m, sigma)

    def negll_nat(theta):
        if theta[1] <= 0:
            raise ValueError("sigma out of range")
        return -marginal_loglik(GompertzParams(*theta), x, t, delta)

    se, ok = _std_errors(negll_nat, [m, sigma])
    return MarginalFit(params, (float(se[0]), float(se[1])), -float(res.fun), len(x),
                       bool(res.success), nit, ok)


# --------------------------------------------------------------------------
# copulas
# --------------------------------------------------------------------------

def _transform(family, form):
    """Maps between search vector ``z`` and natural coefficients."""
    family = CopulaFamily.parse(family)
    positive_b0 = family is not CopulaFamily.FRANK
    if form == "constant":
        if family.has_unit_intercept:
            return (lambda z: [1 + math.exp(z[0])],
                    lambda c: [math.log(max(c[0] - 1, 1e-8))])
        if family is CopulaFamily.CLAYTON:
            return (lambda z: [math.exp(z[0])], lambda c: [math.log(max(c[0], 1e-8))])
        return (lambda z: [z[0]], lambda c: [c[0]])
    if positive_b0:
        fwd = lambda z: [math.exp(z[0]), *z[1:]]  # noqa: E731
        inv = lambda c: [math.log(max(c[0], 1e-8)), *c[1:]]  # noqa: E731
    else:
        fwd = lambda z: list(z)  # noqa: E731
        inv = lambda c: list(c)  # noqa: E731
    return fwd, inv


def _death_age_tau(x_m, x_f, t_m, t_f, cases):
    i = cases.both_dead
    if len(i) >= 3:
        a, b = x_m[i] + t_m[i], x_f[i] + t_f[i]
        if np.ptp(a) > 0 and np.ptp(b) > 0:
            return float(stats.kendalltau(a, b)[0])
    return math.nan


def _start_coefficients(family, form, tau=math.nan):
    """Invert the tau map at ``tau`` (0.3 if unusable) with zero slopes."""
    family = CopulaFamily.parse(family)
    if not np.isfinite(tau) or tau <= 0.02:
        tau = 0.3
    a0 = alpha_from_tau(family, tau)
    if form == "constant":
        return [a0]
    b0 = a0 - 1 if family.has_unit_intercept else a0
    return [b0, 0.0, 0.0] if form == "agegap" else [b0, 0.0]


_COEF_NAMES = {"constant": ("alpha",), "agegap": ("beta0", "beta1", "beta2"),
               "youn": ("beta0", "beta2")}


def _d_domain(d):
    lo = min(DEFAULT_D_DOMAIN[0], float(np.min(d))) if len(d) else DEFAULT_D_DOMAIN[0]
    hi = max(DEFAULT_D_DOMAIN[1], float(np.max(d))) if len(d) else DEFAULT_D_DOMAIN[1]
    return (math.floor(lo), math.ceil(hi))


def _fit_copula(family, form, d, Fm, Ff, delta_m, delta_f, start, method, cfg):
    family = CopulaFamily.parse(family)
    if family is CopulaFamily.INDEPENDENCE:
        raise ValueError("the independence copula has no parameters to fit")
    cases = _CaseSplit.from_flags(delta_m, delta_f)
    default = _start_coefficients(family, form)
    names = _COEF_NAMES[form]
    template = DependenceModel(family, form, **dict(zip(names, default)), d_domain=_d_domain(d))
    fwd, inv = _transform(family, form)

    def negll_coef(coefs):
        try:
            model = template.with_coefficients(coefs)
        except ValueError:
            return np.inf
        val = -_fsum(_copula_terms(family, model._raw_alpha(d), Fm, Ff, cases))
        return val if np.isfinite(val) else np.inf

    negll = lambda z: negll_coef(fwd(z))  # noqa: E731
    z0 = inv(list(start))
    if not np.isfinite(negll(z0)):
        z0 = inv(default)
    res, nit = _minimize(negll, z0, cfg, scale=[0.5] * len(z0))
    coefs = fwd(res.x)
    model = template.with_coefficients(coefs)

    def negll_nat(theta):
        val = negll_coef(theta)
        if not np.isfinite(val):
            raise ValueError("Hessian step left the admissible region")
        return val

    se, _ = _std_errors(negll_nat, coefs)
    std_errors = {k: float(s) for k, s in zip(model.coefficient_names, se)}
    return CopulaFit(model, std_errors, -float(res.fun), method, bool(res.success),
                     len(d), nit, {"cases": cases.counts()})


def _coerce_marginal(fit):
    return fit.params if isinstance(fit, MarginalFit) else fit


def ifm_fit_copula(portfolio, marginal_m, marginal_f, family, form="agegap", optimizer=None,
                   start=None):
    """Second IFM stage: copula coefficients given fitted Gompertz margins."""
    cfg = optimizer or OptimizerConfig()
    for fit in (marginal_m, marginal_f):
        if isinstance(fit, MarginalFit) and not fit.converged:
            raise ValueError("marginal fits must have converged")
    pm, pf = _coerce_marginal(marginal_m), _coerce_marginal(marginal_f)
    X = check_couples(portfolio)
    x_m, x_f, t_m, t_f, dm, df = X[:, :6].T
    Fm = -np.expm1(gompertz_log_survival(pm, x_m, t_m))
    Ff = -np.expm1(gompertz_log_survival(pf, x_f, t_f))
    cases = _CaseSplit.from_flags(dm, df)
    if start is None:
        start = _start_coefficients(family, form, _death_age_tau(x_m, x_f, t_m, t_f, cases))
    return _fit_copula(family, form, x_m - x_f, Fm, Ff, dm, df, start, "ifm", cfg)


def pseudo_observations(portfolio):
    """Rescaled Kaplan-Meier survival values ``(U, V)`` of each couple.

    Each gender's ages are pooled into one left-truncated KM curve; a couple's
    value is the conditional survival from its entry age, times ``n / (n + 1)``.
    Values that would be exactly zero are floored at ``1 / (2 (n + 1))``.
    """
    X = check_couples(portfolio)
    n = len(X)
    out = []
    for g in ("m", "f"):
        x, t, delta = _gender_columns(X, g)
        if np.any(t <= 0):
            raise ValueError(f"zero observed duration for gender {g}; cannot build Kaplan-Meier")
        s = km_fit(x, x + t, delta == 0)
        u = conditional_km_survival(s, x, t) * n / (n + 1)
        out.append(np.maximum(u, 0.5 / (n + 1)))
    return out[0], out[1]


def omnibus_fit_copula(portfolio, family, form="agegap", optimizer=None, start=None,
                       pseudo=None):
    """Copula coefficients with margins replaced by KM pseudo-observations.

    ``pseudo`` overrides the ``(U, V)`` survival values, e.g. with the true
    parametric survival to compare against IFM.
    """
    cfg = optimizer or OptimizerConfig()
    X = check_couples(portfolio)
    x_m, x_f, t_m, t_f, dm, df = X[:, :6].T
    U, V = pseudo_observations(X) if pseudo is None else map(np.asarray, pseudo)
    cases = _CaseSplit.from_flags(dm, df)
    if start is None:
        start = _start_coefficients(family, form, _death_age_tau(x_m, x_f, t_m, t_f, cases))
    return _fit_copula(family, form, x_m - x_f, 1 - U, 1 - V, dm, df, start, "omnibus", cfg)


def profile_loglik(portfolio, fit, name, grid, marginals=None, reoptimize=False, optimizer=None):
    """Copula log-likelihood along ``grid`` values of coefficient ``name``.

    Other coefficients stay at their fitted values, or are re-optimised with
    ``reoptimize=True``. ``marginals`` (male, female) selects IFM survival values;
    without it the omnibus pseudo-observations are used.
    """
    X = check_couples(portfolio)
    x_m, x_f, t_m, t_f, dm, df = X[:, :6].T
    if marginals is not None:
        pm, pf = map(_coerce_marginal, marginals)
        Fm = -np.expm1(gompertz_log_survival(pm, x_m, t_m))
        Ff = -np.expm1(gompertz_log_survival(pf, x_f, t_f))
    else:
        U, V = pseudo_observations(X)
        Fm, Ff = 1 - U, 1 - V
    cases = _CaseSplit.from_flags(dm, df)
    d = x_m - x_f
    model = fit.model
    names = list(model.coefficient_names)
    if name not in names:
        raise ValueError(f"{name!r} is not a coefficient of this model ({names})")
    j = names.index(name)
    base = [model.coefficients[k] for k in names]
    cfg = optimizer or OptimizerConfig(restarts=1)
    out = []
    for value in np.asarray(grid, float):
        coefs = list(base)
        coefs[j] = value

        def negll(free, coefs=coefs):
            c = list(coefs)
            c[:j] = free[:j]
            c[j + 1:] = free[j:]
            try:
                m = model.with_coefficients(c, d_domain=_d_domain(d))
            except ValueError:
                return np.inf
            val = -_fsum(_copula_terms(m.family, m._raw_alpha(d), Fm, Ff, cases))
            return val if np.isfinite(val) else np.inf

        free0 = base[:j] + base[j + 1:]
        if reoptimize and free0:
            res, _ = _minimize(negll, free0, cfg, scale=[0.1] * len(free0))
            val = res.fun
        else:
            val = negll(free0)
        if not np.isfinite(val):
            raise ValueError(f"{name} = {value} leaves the admissible region")
        out.append((float(value), -float(val)))
    return np.array(out)


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def fit_result_to_json(marginal_m, marginal_f, copula_fits):
    """Bundle margins and one or more copula fits into a JSON string."""
    fits = copula_fits if isinstance(copula_fits, (list, tuple)) else [copula_fits]
    payload = {"marginals": {"m": marginal_m.to_dict(), "f": marginal_f.to_dict()},
               "fits": [f.to_dict() for f in fits]}
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True)


def load_fit_result(text_or_dict):
    """Inverse of :func:`fit_result_to_json`.

    Returns ``(marginal_m, marginal_f, fits)`` with ``fits`` keyed by
    ``(method, form)``. A bare single-fit dict is accepted; margins are then ``None``.
    """
    data = json.loads(text_or_dict) if isinstance(text_or_dict, str) else text_or_dict
    if "fits" not in data:
        fit = CopulaFit.from_dict(data)
        return None, None, {(fit.method, fit.model.form): fit}
    marg = data.get("marginals", {})
    mm = MarginalFit.from_dict(marg["m"]) if "m" in marg else None
    mf = MarginalFit.from_dict(marg["f"]) if "f" in marg else None
    fits = {}
    for item in data["fits"]:
        fit = CopulaFit.from_dict(item)
        fits[(fit.method, fit.model.form)] = fit
    return mm, mf, fits


# --------------------------------------------------------------------------
# estimator API
# --------------------------------------------------------------------------

class GompertzEstimator(BaseEstimator):
    """Gompertz margin for one gender of a couple array."""

    def __init__(self, gender="m", optimizer=None):
        self.gender = gender
        self.optimizer = optimizer

    def fit(self, X, y=None):
        self.fit_ = fit_marginal(X, self.gender, self.optimizer)
        self.params_ = self.fit_.params
        return self

    def predict(self, X):
        """Survival probability over each record's observed duration."""
        check_is_fitted(self)
        x, t, _ = _gender_columns(X, self.gender)
        return np.exp(gompertz_log_survival(self.params_, x, t))

    def score(self, X, y=None):
        check_is_fitted(self)
        x, t, delta = _gender_columns(X, self.gender)
        return marginal_loglik(self.params_, x, t, delta)


class CoupleCopulaEstimator(BaseEstimator):
    """Margins plus age-gap copula, fitted by IFM or omnibus.

    ``predict(d)`` returns the fitted association parameter at age differences
    ``d``; ``transform(X)`` returns the pseudo-observations the copula stage used.
    """

    def __init__(self, family="gumbel", form="agegap", method="ifm", optimizer=None):
        self.family = family
        self.form = form
        self.method = method
        self.optimizer = optimizer

    def fit(self, X, y=None):
        X = check_couples(X)
        if self.method not in ("ifm", "omnibus"):
            raise ValueError("method must be 'ifm' or 'omnibus'")
        self.marginal_m_ = fit_marginal(X, "m", self.optimizer)
        self.marginal_f_ = fit_marginal(X, "f", self.optimizer)
        if self.method == "ifm":
            self.copula_fit_ = ifm_fit_copula(X, self.marginal_m_, self.marginal_f_,
                                              self.family, self.form, self.optimizer)
        else:
            self.copula_fit_ = omnibus_fit_copula(X, self.family, self.form, self.optimizer)
        self.model_ = self.copula_fit_.model
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_couples(X)
        if self.method == "omnibus":
            return np.column_stack(pseudo_observations(X))
        x_m, x_f, t_m, t_f = X[:, :4].T
        return np.column_stack([np.exp(gompertz_log_survival(self.marginal_m_.params, x_m, t_m)),
                                np.exp(gompertz_log_survival(self.marginal_f_.params, x_f, t_f))])

    def predict(self, d):
        check_is_fitted(self)
        return self.model_.alpha_of_d(d)

    def score(self, X, y=None):
        check_is_fitted(self)
        return full_loglik(self.model_, self.marginal_m_.params, self.marginal_f_.params, X)
