"""Goodness of fit for censored couple data.

The empirical copula gives each couple with two observed deaths a mass
``W_i / n``, where ``W_i`` is the inverse probability that the couple's later
death was not censored. A Cramer-von Mises distance compares it with the
fitted parametric copula, and a parametric bootstrap provides the p-value.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._parallel import map_indexed
from ._validation import check_couples, check_positive_int
from .copulas import copula_cdf, copula_sample
from .estimation import (
    CopulaFit,
    MarginalFit,
    OptimizerConfig,
    fit_marginal,
    ifm_fit_copula,
    omnibus_fit_copula,
)
from .survival import (
    conditional_km_quantile,
    conditional_km_survival,
    gompertz_cdf_inverse,
    km_fit,
    km_quantile,
)

MAX_EXCLUDED_FRACTION = 0.05


def censoring_survival(portfolio, gender="m"):
    """Kaplan-Meier estimate of the censoring duration ``B`` for one gender.

    Roles are swapped: censored records are the events. Durations are measured
    from entry into observation, so every record enters at zero.
    """
    X = check_couples(portfolio)
    if len(X) == 0:
        raise ValueError("censoring_survival needs a non-empty portfolio")
    j = {"m": 0, "f": 1}[gender]
    t, delta = X[:, 2 + j], X[:, 4 + j]
    if np.any(t <= 0):
        raise ValueError("observed durations must be positive")
    return km_fit(np.zeros(len(t)), t, delta == 1)


@dataclass(frozen=True, eq=False)
class EmpiricalCopula:
    """Weighted empirical copula built from the couples with two observed deaths.

    ``points`` holds each support couple's pseudo-observations ``F(T)`` and
    ``lower`` the left limits ``F(T-)`` used in the indicator
    ``T <= F^{-1}(u)``, which is equivalent to ``F(T-) < u``.
    """

    points: np.ndarray
    lower: np.ndarray
    weights: np.ndarray
    n: int
    index: np.ndarray
    censor_survival: object = field(repr=False, default=None)

    def __call__(self, u1, u2):
        return self.evaluate(u1, u2)

    def evaluate(self, u1, u2):
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        shape = np.broadcast(u1, u2).shape
        a = np.ravel(np.broadcast_to(u1, shape))
        b = np.ravel(np.broadcast_to(u2, shape))
        inside = (self.lower[None, :, 0] < a[:, None]) & (self.lower[None, :, 1] < b[:, None])
        return (inside @ self.weights / self.n).reshape(shape)

    @property
    def total_mass(self):
        return float(self.weights.sum() / self.n)


def _pseudo_pairs(X, idx):
    """Right-continuous and left-limit conditional KM CDF values of rows ``idx``."""
    out_hi, out_lo = [], []
    for j in (0, 1):
        x, t, delta = X[:, j], X[:, 2 + j], X[:, 4 + j]
        s = km_fit(x, x + t, delta == 0)
        xi, ti = x[idx], t[idx]
        out_hi.append(1 - conditional_km_survival(s, xi, ti))
        out_lo.append(1 - conditional_km_survival(s, xi, ti, left=True))
    return np.column_stack(out_hi), np.column_stack(out_lo)


def empirical_copula(portfolio):
    """Censoring-weighted empirical copula of a couple portfolio.

    Each couple with both deaths observed carries weight
    ``1 / S_B(max(T_m, T_f)-)`` with ``S_B`` the male censoring survival. Both
    spouses of a couple leave observation at the same calendar date, so the
    gap between their censoring times is zero.
    """
    X = check_couples(portfolio)
    idx = np.flatnonzero((X[:, 4] == 0) & (X[:, 5] == 0))
    if idx.size == 0:
        raise ValueError("empirical copula needs at least one couple with both deaths observed")
    sB = censoring_survival(X, "m")
    tmax = np.maximum(X[idx, 2], X[idx, 3])
    surv = sB.left_limit(tmax)
    if np.any(surv <= 0):
        bad = int(idx[np.flatnonzero(surv <= 0)[0]])
        raise ValueError(f"censoring survival is zero for couple at row {bad}; weight undefined")
    hi, lo = _pseudo_pairs(X, idx)
    return EmpiricalCopula(hi, lo, 1.0 / surv, len(X), idx, sB)


def cvm_statistic(portfolio, emp, model=None, reference=None):
    """Sum over support points of ``(C_n(u) - C_{alpha(d_i)}(u))**2``.

    ``reference(u1, u2, rows)`` replaces the parametric copula when given.
    """
    if emp.points.shape[0] == 0:
        raise ValueError("empty support")
    X = check_couples(portfolio)
    u1, u2 = emp.points[:, 0], emp.points[:, 1]
    cn = emp.evaluate(u1, u2)
    if reference is not None:
        cp = np.asarray(reference(u1, u2, emp.index), dtype=float)
    else:
        d = X[emp.index, 0] - X[emp.index, 1]
        alpha = model.alpha_of_d(d) if model.family.value != "independence" else None
        cp = copula_cdf(model.family, alpha, u1, u2)
    return math.fsum((cn - cp) ** 2)


@dataclass(frozen=True)
class GofResult:
    statistic: float
    p_value: float
    K: int
    replicate_statistics: tuple
    excluded: tuple = ()
    method: str = "ifm"

    def to_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value, "K": self.K,
                "method": self.method,
                "replicate_statistics": [None if not math.isfinite(v) else v
                                         for v in self.replicate_statistics],
                "exclusions": {"count": len(self.excluded), "replicates": list(self.excluded)}}


@dataclass(frozen=True)
class _BootstrapTask:
    X: np.ndarray
    marginals: tuple
    fit: CopulaFit
    method: str
    paired: bool
    refit_marginals: bool
    optimizer: OptimizerConfig
    seeds: tuple = ()
    censoring: str = "km"
    censor_km: tuple = ()


def _simulate_replicate(task, seed):
    X = task.X
    n = len(X)
    x_m, x_f = X[:, 0], X[:, 1]
    cop_ss, cens_ss = _rng.spawn(seed, 2)
    model = task.fit.model
    alpha = model.alpha_of_d(x_m - x_f) if model.family.value != "independence" else None
    uv = copula_sample(model.family, alpha, n, seed=cop_ss)
    u = np.clip(uv, 0.0, 1 - 1e-16)
    if task.method == "ifm":
        pm, pf = task.marginals
        life_m = gompertz_cdf_inverse(pm, x_m, u[:, 0])
        life_f = gompertz_cdf_inverse(pf, x_f, u[:, 1])
    else:
        life = []
        for j in (0, 1):
            x, t, delta = X[:, j], X[:, 2 + j], X[:, 4 + j]
            s = km_fit(x, x + t, delta == 0)
            life.append(conditional_km_quantile(s, x, u[:, j]))
        life_m, life_f = life
    rng = _rng.make_generator(cens_ss)
    B_m, B_f = _draw_censoring(task, rng, n)
    Xb = X.copy()
    Xb[:, 2] = np.minimum(life_m, B_m)
    Xb[:, 3] = np.minimum(life_f, B_f)
    Xb[:, 4] = (life_m >= B_m).astype(float)
    Xb[:, 5] = (life_f >= B_f).astype(float)
    # a lifetime of exactly zero would break the KM risk sets
    Xb[:, 2:4] = np.maximum(Xb[:, 2:4], 1e-9)
    return Xb


def _draw_censoring(task, rng, n):
    X = task.X
    if task.censoring == "km":
        # the censoring law's own KM estimate corrects for censoring by death
        B_m = km_quantile(task.censor_km[0], rng.random(n), return_flag=True)[0]
        B_f = B_m if task.paired else km_quantile(task.censor_km[1], rng.random(n),
                                                   return_flag=True)[0]
        return B_m, B_f
    if task.paired:
        both = np.flatnonzero((X[:, 4] == 1) & (X[:, 5] == 1))
        if len(both) == 0:
            raise ValueError("paired censoring resampling needs a couple with both lives censored")
        pick = both[rng.integers(0, len(both), n)]
        return X[pick, 2], X[pick, 3]
    out = []
    for j in (0, 1):
        pool = X[X[:, 4 + j] == 1, 2 + j]
        out.append(pool[rng.integers(0, len(pool), n)] if len(pool) else np.full(n, np.inf))
    return out[0], out[1]


def _refit_and_score(task, Xb):
    start = list(task.fit.model.coefficients.values())
    if task.method == "ifm":
        if task.refit_marginals:
            mm = fit_marginal(Xb, "m", task.optimizer)
            mf = fit_marginal(Xb, "f", task.optimizer)
            if not (mm.converged and mf.converged):
                raise RuntimeError("marginal refit did not converge")
            margs = (mm, mf)
        else:
            margs = task.marginals
        fit = ifm_fit_copula(Xb, *margs, task.fit.model.family, task.fit.model.form,
                             task.optimizer, start=start)
    else:
        fit = omnibus_fit_copula(Xb, task.fit.model.family, task.fit.model.form,
                                 task.optimizer, start=start)
    if not fit.converged:
        raise RuntimeError("copula refit did not converge")
    return cvm_statistic(Xb, empirical_copula(Xb), fit.model)


def _run_replicate(task, b, replicate_fn=None):
    try:
        if replicate_fn is not None:
            Xb = replicate_fn(b, task.X)
        else:
            Xb = _simulate_replicate(task, task.seeds[b])
        return _refit_and_score(task, Xb)
    except (ValueError, RuntimeError, FloatingPointError):
        return math.nan


def bootstrap_gof(portfolio, marginals, fit, method="ifm", K=1000, seed=0, paired=True,
                  censoring="km", refit_marginals=True, optimizer=None, workers=None,
                  replicate_fn=None):
    """Parametric-bootstrap p-value of the Cramer-von Mises statistic.

    Each replicate keeps the real entry ages, draws lifetimes from the fitted
    model (Gompertz inverse for IFM, KM quantiles for omnibus), censors them with
    resampled censoring times, refits by ``method`` and recomputes the
    statistic. Replicates whose refit fails are excluded; more than 5% exclusions
    is an error.

    Parameters
    ----------
    marginals : (MarginalFit or GompertzParams, same) or None
        Required for ``method="ifm"``.
    paired : bool
        Give both spouses the same censoring time (they leave observation
        together). Otherwise each gender is drawn independently.
    censoring : {"km", "observed"}
        Draw censoring times from the Kaplan-Meier estimate of the censoring
        law, or resample the observed censoring values directly. The latter
        over-represents short windows, since those are the lives most often
        still alive at exit.
    workers : int, optional
        Processes for the replicates; results do not depend on it.
    replicate_fn : callable, optional
        ``replicate_fn(b, X)`` returning replicate ``b``'s data (testing hook).
    """
    K = check_positive_int(K, "K")
    if K < 1:
        raise ValueError("K must be at least 1")
    if method not in ("ifm", "omnibus"):
        raise ValueError("method must be 'ifm' or 'omnibus'")
    if not fit.converged:
        raise ValueError("bootstrap needs a converged fit")
    X = check_couples(portfolio)
    if method == "ifm":
        if marginals is None:
            raise ValueError("IFM bootstrap needs the fitted marginals")
        marginals = tuple(m.params if isinstance(m, MarginalFit) else m for m in marginals)
    opt = optimizer or OptimizerConfig(maxiter=500, restarts=1)
    if censoring not in ("observed", "km"):
        raise ValueError("censoring must be 'observed' or 'km'")
    censor_km = (censoring_survival(X, "m"), censoring_survival(X, "f")) if censoring == "km" else ()
    task = _BootstrapTask(X, marginals, fit, method, paired, refit_marginals, opt,
                          tuple(_rng.spawn(seed, K)), censoring, censor_km)
    statistic = cvm_statistic(X, empirical_copula(X), fit.model)
    if replicate_fn is not None:
        stats = [_run_replicate(task, b, replicate_fn=replicate_fn) for b in range(K)]
    else:
        stats = map_indexed(_run_replicate, task, K, workers)

    stats = np.array(stats, dtype=float)
    excluded = tuple(int(i) for i in np.flatnonzero(~np.isfinite(stats)))
    if len(excluded) > MAX_EXCLUDED_FRACTION * K:
        raise RuntimeError(f"{len(excluded)} of {K} bootstrap refits failed (limit 5%)")
    valid = stats[np.isfinite(stats)]
    p = float(np.sum(valid >= statistic) / (len(valid) + 1))
    return GofResult(statistic, p, K, tuple(stats.tolist()), excluded, method)
