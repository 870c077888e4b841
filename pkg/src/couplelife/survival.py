"""Gompertz marginal law and the left-truncated Kaplan-Meier estimator.

The Gompertz law is used in its (mode, dispersion) parametrisation: the force of
mortality at age ``x`` is ``exp((x - m) / sigma) / sigma``. All survival and
density evaluations happen on the log scale; ``exp`` is applied last.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_finite, check_probability


@dataclass(frozen=True)
class GompertzParams:
    """Modal age at death ``m`` and dispersion ``sigma``, both in years."""

    m: float
    sigma: float

    def __post_init__(self):
        check_finite(self.m, self.sigma, name="Gompertz parameters")
        if self.m <= 0 or self.sigma <= 0:
            raise ValueError(f"Gompertz parameters must be positive, got {self}")


def _check_age_duration(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    check_finite(x, t, name="age/duration")
    if np.any(t < 0) or np.any(x < 0):
        raise ValueError("ages and durations must be non-negative")
    return x, t


def gompertz_log_survival(p, x, t):
    """``log(t_p_x)``; no domain checks (hot path of the likelihood)."""
    # very long durations overflow to -inf, i.e. survival exactly 0
    with np.errstate(over="ignore"):
        return -np.exp((x - p.m) / p.sigma) * np.expm1(t / p.sigma)


def gompertz_log_density(p, x, t):
    return gompertz_log_survival(p, x, t) + (x + t - p.m) / p.sigma - np.log(p.sigma)


def gompertz_survival(p, x, t):
    """Probability that a life aged ``x`` survives ``t`` more years."""
    x, t = _check_age_duration(x, t)
    return np.exp(gompertz_log_survival(p, x, t))


def gompertz_density(p, x, t):
    """Density of the remaining lifetime of a life aged ``x`` at duration ``t``."""
    x, t = _check_age_duration(x, t)
    return np.exp(gompertz_log_density(p, x, t))


def gompertz_hazard(p, age):
    return np.exp((np.asarray(age, dtype=float) - p.m) / p.sigma) / p.sigma


def gompertz_cdf_inverse(p, x, u):
    """Remaining lifetime ``t`` of a life aged ``x`` with ``F_x(t) = u``."""
    x = np.asarray(x, dtype=float)
    check_finite(x, name="age")
    u = check_probability(u, high_open=True)
    return p.sigma * np.log1p(-np.exp((p.m - x) / p.sigma) * np.log1p(-u))


@dataclass(frozen=True, eq=False)
class StepSurvival:
    """Right-continuous survival step function produced by :func:`km_fit`.

    ``values[k]`` is the survival probability on ``[jump_ages[k], jump_ages[k+1])``;
    before the first jump the function equals one. ``max_exit`` is the largest
    observed exit age, used as the quantile of last resort.
    """

    jump_ages: np.ndarray
    values: np.ndarray
    at_risk: np.ndarray
    deaths: np.ndarray
    max_exit: float
    min_entry: float = field(default=0.0)

    def __call__(self, age):
        return self.evaluate(age)

    def _lookup(self, age, side):
        age = np.asarray(age, dtype=float)
        if len(self.values) == 0:
            return np.ones_like(age)
        idx = np.searchsorted(self.jump_ages, age, side=side) - 1
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 1.0)

    def evaluate(self, age):
        return self._lookup(age, "right")

    def left_limit(self, age):
        """``S(age-)``: the value just before ``age``."""
        return self._lookup(age, "left")

    @property
    def final_mass(self):
        """Total mass of the distribution function ``1 - S`` at the last jump."""
        return 1.0 - self.values[-1] if len(self.values) else 0.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["age", "survival", "at_risk", "deaths"])
            for row in zip(self.jump_ages, self.values, self.at_risk, self.deaths):
                w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3])])


def km_fit(entry, exit, event):
    """Product-limit estimator with left truncation.

    At every distinct event age ``a`` the running product is multiplied by
    ``1 - d_a / n_a`` with ``n_a = #{entry < a <= exit}``. Subjects censored at
    ``a`` are still at risk at ``a`` (deaths come first at tied ages).

    Parameters
    ----------
    entry, exit : array-like of float
        Ages at entry into and exit from observation.
    event : array-like of {0, 1} or bool
        1 where the exit is an event (a death), 0 where it is a censoring.
    """
    entry = np.asarray(entry, dtype=float).ravel()
    exit = np.asarray(exit, dtype=float).ravel()
    event = np.asarray(event).astype(bool).ravel()
    if entry.size == 0:
        raise ValueError("km_fit needs at least one observation")
    if not (entry.shape == exit.shape == event.shape):
        raise ValueError("entry, exit and event must have the same length")
    check_finite(entry, exit, name="entry/exit ages")
    if np.any(exit <= entry):
        bad = int(np.flatnonzero(exit <= entry)[0])
        raise ValueError(f"exit age must exceed entry age (observation {bad})")

    ages, deaths = np.unique(exit[event], return_counts=True)
    entry_sorted = np.sort(entry)
    exit_sorted = np.sort(exit)
    n_entered = np.searchsorted(entry_sorted, ages, side="left")
    n_left = np.searchsorted(exit_sorted, ages, side="left")
    at_risk = n_entered - n_left
    values = np.cumprod(1.0 - deaths / at_risk)
    return StepSurvival(
        jump_ages=ages,
        values=values,
        at_risk=at_risk,
        deaths=deaths,
        max_exit=float(exit.max()),
        min_entry=float(entry.min()),
    )


def km_quantile(s, u, return_flag=False):
    """Generalised inverse of ``F = 1 - S``: smallest jump age with ``F >= u``.

    When ``u`` exceeds the mass reached at the last jump (the largest observation
    was censored), the largest observed exit age is returned and, with
    ``return_flag``, the corresponding entry of the flag array is True.
    """
    u = check_probability(u)
    F = 1.0 - s.values
    idx = np.searchsorted(F, u, side="left")
    beyond = idx >= len(F)
    if len(F):
        ages = np.where(beyond, s.max_exit, s.jump_ages[np.minimum(idx, len(F) - 1)])
    else:
        ages = np.full_like(u, s.max_exit)
    if np.any(beyond) and not return_flag:
        warnings.warn("quantile level beyond Kaplan-Meier mass; returning largest exit age",
                      RuntimeWarning, stacklevel=2)
    if return_flag:
        return ages, beyond
    return ages


def _log_factors(s):
    """Cumulative log of the non-zero KM factors and count of zero factors.

    Splitting out factors with ``d_a = n_a`` keeps conditional products defined
    after the unconditional curve has reached zero.
    """
    frac = s.deaths / s.at_risk
    zero = frac >= 1
    with np.errstate(divide="ignore"):
        logf = np.where(zero, 0.0, np.log1p(-np.where(zero, 0.0, frac)))
    return np.cumsum(logf), np.cumsum(zero)


def _at(cum, s, age, side="right"):
    idx = np.searchsorted(s.jump_ages, age, side=side) - 1
    return np.where(idx >= 0, cum[np.maximum(idx, 0)], 0)


def conditional_km_survival(s, x, t, left=False):
    """KM probability of surviving ``t`` more years from age ``x``.

    This is the product of ``1 - d_a / n_a`` over jump ages in ``(x, x + t]``,
    equal to ``S(x + t) / S(x)`` whenever ``S(x) > 0``. With ``left=True`` the
    interval is ``(x, x + t)``, giving the left limit in ``t``.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(s.values) == 0:
        return np.ones(np.broadcast(x, t).shape)
    logc, zeros = _log_factors(s)
    side = "left" if left else "right"
    dz = _at(zeros, s, x + t, side) - _at(zeros, s, x)
    dz = np.maximum(dz, 0)
    return np.where(dz > 0, 0.0, np.exp(np.minimum(_at(logc, s, x + t, side) - _at(logc, s, x), 0.0)))


def conditional_km_quantile(s, x, u):
    """Remaining lifetime at age ``x`` from the KM law conditional on survival to ``x``.

    Smallest jump age ``a > x`` whose conditional distribution function reaches
    ``u``, returned as ``a - x``; levels beyond the attainable mass map to the
    largest observed exit age.
    """
    x = np.asarray(x, dtype=float)
    u = check_probability(u)
    x, u = np.broadcast_arrays(x, u)
    if len(s.values) == 0:
        return np.maximum(s.max_exit - x, 0.0)
    logc, zeros = _log_factors(s)
    first_after = np.searchsorted(s.jump_ages, x, side="right")
    # -logc is non-decreasing; the slack absorbs rounding when u equals a jump level
    with np.errstate(divide="ignore"):
        thr = _at(-logc, s, x) - np.log1p(-u) - 1e-12
    idx = np.maximum(np.searchsorted(-logc, thr, side="left"), first_after)
    # a jump with d_a = n_a sends the conditional survival to zero
    next_zero = np.searchsorted(zeros, _at(zeros, s, x), side="right")
    idx = np.minimum(idx, next_zero)
    beyond = idx >= len(s.values)
    age = np.where(beyond, np.maximum(s.max_exit, x), s.jump_ages[np.minimum(idx, len(s.values) - 1)])
    return age - x


class KaplanMeier(BaseEstimator):
    """Estimator wrapper around :func:`km_fit`.

    ``fit(entry, exit, event)`` stores the fitted step function in
    ``survival_``; ``predict(ages)`` evaluates it.
    """

    def fit(self, entry, exit, event):
        self.survival_ = km_fit(entry, exit, event)
        return self

    def predict(self, ages):
        check_is_fitted(self)
        return self.survival_.evaluate(ages)

    def quantile(self, u):
        check_is_fitted(self)
        return km_quantile(self.survival_, u)
