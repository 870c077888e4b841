"""Association parameter as a function of the spousal age difference.

With ``d = x_m - x_f`` (husband's age minus wife's age):

* ``constant``: ``alpha(d) = alpha``
* ``agegap``:   ``alpha(d) = k + beta0 / (1 + beta1 * d + beta2 * |d|)``
* ``youn``:     ``alpha(d) = k + beta0 / (1 + beta2 * d**2)``

where ``k = 1`` for Gumbel and Joe (parameters above one) and ``k = 0`` otherwise.
The sign term ``beta1 * d`` lets dependence differ by which spouse is older.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .copulas import CopulaFamily, admissible

FORMS = ("constant", "agegap", "youn")

# Age differences the model must be valid on unless told otherwise.
DEFAULT_D_DOMAIN = (-20.0, 20.0)


@dataclass(frozen=True)
class DependenceModel:
    """Copula family plus the rule mapping an age difference to its parameter.

    Admissibility is checked at construction over ``d_domain`` on a grid with step
    ``d_step`` (grid end points included), so an invalid model fails here rather
    than in the middle of an optimisation.
    """

    family: CopulaFamily
    form: str = "constant"
    alpha: float | None = None
    beta0: float | None = None
    beta1: float = 0.0
    beta2: float = 0.0
    d_domain: tuple = field(default=DEFAULT_D_DOMAIN, compare=False)
    d_step: float = field(default=0.05, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily.parse(self.family))
        form = str(self.form).lower()
        if form not in FORMS:
            raise ValueError(f"unknown dependence form {self.form!r}; expected one of {FORMS}")
        object.__setattr__(self, "form", form)
        if self.family is CopulaFamily.INDEPENDENCE:
            object.__setattr__(self, "form", "constant")
            object.__setattr__(self, "alpha", None)
            return
        if form == "constant":
            if self.alpha is None:
                raise ValueError("constant form needs alpha")
            object.__setattr__(self, "alpha", float(self.alpha))
        else:
            if self.beta0 is None:
                raise ValueError(f"{form} form needs beta0")
            if form == "youn" and self.beta1 != 0:
                raise ValueError("youn form has no beta1 term")
            if form == "youn" and not self.family.has_unit_intercept:
                raise ValueError("youn form is defined for Gumbel and Joe only")
            for name in ("beta0", "beta1", "beta2"):
                object.__setattr__(self, name, float(getattr(self, name)))
        lo, hi = self.d_domain
        grid = np.unique(np.append(np.arange(lo, hi, self.d_step), [lo, 0.0, hi]))
        self._check(grid)

    @classmethod
    def independence(cls):
        return cls(CopulaFamily.INDEPENDENCE)

    @property
    def n_coefficients(self):
        return {"constant": 1, "agegap": 3, "youn": 2}[self.form] if self.family is not CopulaFamily.INDEPENDENCE else 0

    @property
    def coefficient_names(self):
        if self.family is CopulaFamily.INDEPENDENCE:
            return ()
        return {"constant": ("alpha",), "agegap": ("beta0", "beta1", "beta2"),
                "youn": ("beta0", "beta2")}[self.form]

    @property
    def coefficients(self):
        return {name: getattr(self, name) for name in self.coefficient_names}

    def _denominator(self, d):
        if self.form == "agegap":
            return 1 + self.beta1 * d + self.beta2 * np.abs(d)
        return 1 + self.beta2 * d * d

    def _check(self, d):
        if self.form != "constant":
            den = self._denominator(d)
            if np.any(den <= 0):
                bad = np.asarray(d)[den <= 0].ravel()[0]
                raise ValueError(f"alpha(d) denominator is non-positive at d = {bad}")
        a = self._raw_alpha(d)
        if not np.all(admissible(self.family, a)):
            bad = np.asarray(np.broadcast_to(d, np.shape(a)))[~admissible(self.family, a)].ravel()[0]
            raise ValueError(f"{self.family.value} parameter inadmissible at d = {bad}")

    def _raw_alpha(self, d):
        d = np.asarray(d, dtype=float)
        if self.family is CopulaFamily.INDEPENDENCE:
            return np.zeros_like(d)
        if self.form == "constant":
            return np.full_like(d, self.alpha)
        base = 1.0 if self.family.has_unit_intercept else 0.0
        return base + self.beta0 / self._denominator(d)

    def alpha_of_d(self, d):
        """Copula parameter for age difference(s) ``d``; raises outside the valid region."""
        d = np.asarray(d, dtype=float)
        if not np.all(np.isfinite(d)):
            raise ValueError("age difference must be finite")
        self._check(d)
        return self._raw_alpha(d)

    def with_coefficients(self, values, d_domain=None):
        """Copy with coefficients replaced (in :attr:`coefficient_names` order)."""
        kw = dict(zip(self.coefficient_names, map(float, values)))
        return DependenceModel(
            self.family, self.form, **kw,
            d_domain=self.d_domain if d_domain is None else d_domain, d_step=self.d_step,
        )

    def to_dict(self):
        out = {"family": self.family.value, "form": self.form}
        out.update(self.coefficients)
        return out

    @classmethod
    def from_dict(cls, data, **kw):
        data = dict(data)
        family = data.pop("family")
        form = data.pop("form", "constant")
        return cls(family, form, **{k: v for k, v in data.items() if k in ("alpha", "beta0", "beta1", "beta2")}, **kw)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text, **kw):
        return cls.from_dict(json.loads(text), **kw)


def alpha_of_d(model, d):
    return model.alpha_of_d(d)
