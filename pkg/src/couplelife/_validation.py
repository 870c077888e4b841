"""Input checking helpers shared by the estimators and functional API."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

# Column order of the numeric couple matrix used throughout the package.
PORTFOLIO_COLUMNS = ("x_m", "x_f", "t_m", "t_f", "delta_m", "delta_f", "benefit")


def check_finite(*values, name="input"):
    for v in values:
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} must be finite")


def check_probability(u, *, name="u", low_open=False, high_open=False):
    """Return ``u`` as a float array after checking it lies in the unit interval."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} must be finite")
    lo_bad = u <= 0 if low_open else u < 0
    hi_bad = u >= 1 if high_open else u > 1
    if np.any(lo_bad | hi_bad):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}")
    return u


def check_positive_int(n, name):
    if not isinstance(n, numbers.Integral) or n < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {n!r}")
    return int(n)


def check_couples(X):
    """Validate a couple matrix and return it as float array of shape (n, 7).

    Accepts a :class:`~couplelife.data.Portfolio` or anything array-like with the
    columns of :data:`PORTFOLIO_COLUMNS` (the benefit column may be omitted).
    """
    if hasattr(X, "to_array"):
        X = X.to_array()
    X = check_array(X, dtype=float, ensure_min_samples=1)
    if X.shape[1] == 6:
        X = np.column_stack([X, np.ones(len(X))])
    if X.shape[1] != 7:
        raise ValueError(
            f"expected 6 or 7 columns {PORTFOLIO_COLUMNS}, got {X.shape[1]}"
        )
    flags = X[:, 4:6]
    if not np.all((flags == 0) | (flags == 1)):
        raise ValueError("censoring flags must be 0 or 1")
    if np.any(X[:, :4] < 0):
        raise ValueError("ages and durations must be non-negative")
    return X
