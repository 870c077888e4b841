"""Couple-level portfolio data: file I/O, summary statistics, synthetic generation.

Censoring flags follow the convention ``delta = 1`` for a right-censored
lifetime and ``delta = 0`` for an observed death. This is the reverse of the
usual "event indicator"; :func:`load_portfolio` can flip incoming files with
``event_flag=True``.
"""

import csv
import math
import os
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import stats

from . import _rng
from .copulas import copula_sample
from .survival import GompertzParams, gompertz_cdf_inverse

CSV_COLUMNS = ("couple_id", "x_m", "x_f", "t_m", "t_f", "delta_m", "delta_f", "benefit")
DEFAULT_WINDOW = 5.055
# slack when checking observed durations against the window length
_WINDOW_TOL = 1e-9


@dataclass(frozen=True)
class CoupleRecord:
    couple_id: str
    x_m: float
    x_f: float
    t_m: float
    t_f: float
    delta_m: int
    delta_f: int
    benefit: float = 1.0

    @property
    def d(self):
        return self.x_m - self.x_f


class Portfolio:
    """Ordered collection of couples stored column-wise.

    ``window_years`` is the observation window; ``None`` or ``inf`` disables the
    duration check.
    """

    def __init__(self, couple_id, x_m, x_f, t_m, t_f, delta_m, delta_f, benefit=None,
                 window_years=DEFAULT_WINDOW):
        self.couple_id = np.asarray([str(c) for c in couple_id], dtype=object)
        n = len(self.couple_id)
        self.x_m = np.asarray(x_m, dtype=float).reshape(n)
        self.x_f = np.asarray(x_f, dtype=float).reshape(n)
        self.t_m = np.asarray(t_m, dtype=float).reshape(n)
        self.t_f = np.asarray(t_f, dtype=float).reshape(n)
        self.delta_m = np.asarray(delta_m).astype(int).reshape(n)
        self.delta_f = np.asarray(delta_f).astype(int).reshape(n)
        self.benefit = np.ones(n) if benefit is None else np.asarray(benefit, dtype=float).reshape(n)
        self.window_years = None if window_years is None else float(window_years)
        self._validate()

    def _validate(self):
        if len(set(self.couple_id)) != len(self.couple_id):
            raise ValueError("couple_id values must be unique")
        for name in ("delta_m", "delta_f"):
            col = getattr(self, name)
            bad = np.flatnonzero((col != 0) & (col != 1))
            if bad.size:
                raise ValueError(f"row {bad[0]}: column {name} must be 0 or 1, got {col[bad[0]]}")
        for name in ("x_m", "x_f", "t_m", "t_f", "benefit"):
            col = getattr(self, name)
            bad = np.flatnonzero(~np.isfinite(col) | (col < 0))
            if bad.size:
                raise ValueError(f"row {bad[0]}: column {name} must be finite and >= 0")
        w = self.window_years
        if w is not None and math.isfinite(w):
            for name in ("t_m", "t_f"):
                bad = np.flatnonzero(getattr(self, name) > w + _WINDOW_TOL)
                if bad.size:
                    raise ValueError(
                        f"row {bad[0]}: column {name} exceeds the observation window {w}"
                    )

    def __len__(self):
        return len(self.couple_id)

    def __repr__(self):
        return f"Portfolio(n={len(self)}, window_years={self.window_years})"

    @property
    def d(self):
        """Age difference husband minus wife."""
        return self.x_m - self.x_f

    @property
    def records(self):
        return [
            CoupleRecord(c, *map(float, (a, b, t1, t2)), int(d1), int(d2), float(bb))
            for c, a, b, t1, t2, d1, d2, bb in zip(
                self.couple_id, self.x_m, self.x_f, self.t_m, self.t_f,
                self.delta_m, self.delta_f, self.benefit,
            )
        ]

    @classmethod
    def from_records(cls, records, window_years=DEFAULT_WINDOW):
        records = list(records)
        cols = {f.name: [getattr(r, f.name) for r in records] for f in fields(CoupleRecord)}
        return cls(**cols, window_years=window_years)

    @classmethod
    def from_array(cls, X, couple_id=None, window_years=DEFAULT_WINDOW):
        X = np.asarray(X, dtype=float)
        ids = range(len(X)) if couple_id is None else couple_id
        benefit = X[:, 6] if X.shape[1] > 6 else None
        return cls(ids, *X[:, :6].T, benefit=benefit, window_years=window_years)

    def to_array(self):
        return np.column_stack([self.x_m, self.x_f, self.t_m, self.t_f,
                                self.delta_m, self.delta_f, self.benefit])

    def subset(self, mask):
        idx = np.asarray(mask)
        return Portfolio(self.couple_id[idx], self.x_m[idx], self.x_f[idx], self.t_m[idx],
                         self.t_f[idx], self.delta_m[idx], self.delta_f[idx],
                         self.benefit[idx], window_years=self.window_years)

    def censoring_counts(self):
        both_dead = int(np.sum((self.delta_m == 0) & (self.delta_f == 0)))
        both_cens = int(np.sum((self.delta_m == 1) & (self.delta_f == 1)))
        return {"both_dead": both_dead, "male_dead_only": int(np.sum((self.delta_m == 0) & (self.delta_f == 1))),
                "female_dead_only": int(np.sum((self.delta_m == 1) & (self.delta_f == 0))),
                "both_censored": both_cens}


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def load_portfolio(path, schema=None, event_flag=False, window_years=DEFAULT_WINDOW):
    """Read a portfolio CSV.

    Parameters
    ----------
    schema : dict, optional
        Maps canonical column names (``x_m``, ``delta_f``, ...) to the header names
        used in the file.
    event_flag : bool
        Set when the file's flags mark observed deaths with 1; they are flipped on
        load.
    """
    schema = dict(schema or {})
    names = {c: schema.get(c, c) for c in CSV_COLUMNS}
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        missing = [names[c] for c in CSV_COLUMNS if names[c] not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        cols = {c: [] for c in CSV_COLUMNS}
        for i, row in enumerate(reader):
            for c in CSV_COLUMNS:
                raw = row[names[c]]
                if c == "couple_id":
                    if raw is None or raw == "":
                        raise ValueError(f"row {i}: column couple_id is empty")
                    cols[c].append(raw)
                    continue
                try:
                    val = float(raw)
                except (TypeError, ValueError):
                    raise ValueError(f"row {i}: column {c} is not a number: {raw!r}") from None
                if c.startswith("delta"):
                    if val not in (0.0, 1.0):
                        raise ValueError(f"row {i}: column {c} must be 0 or 1, got {raw}")
                    val = int(val)
                    if event_flag:
                        val = 1 - val
                cols[c].append(val)
    if not cols["couple_id"]:
        raise ValueError(f"{path}: no data rows")
    return Portfolio(**cols, window_years=window_years)


def write_portfolio(portfolio, path):
    """Write ``portfolio`` as CSV with 17-significant-digit floats (atomic)."""
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in zip(portfolio.couple_id, portfolio.x_m, portfolio.x_f, portfolio.t_m,
                     portfolio.t_f, portfolio.delta_m, portfolio.delta_f, portfolio.benefit):
            w.writerow([r[0], _fmt(r[1]), _fmt(r[2]), _fmt(r[3]), _fmt(r[4]),
                        int(r[5]), int(r[6]), _fmt(r[7])])
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# summaries
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DependenceSummary:
    n_pairs: int
    pearson_r: float
    spearman_rho: float
    kendall_tau: float


def dependence_summary(pairs):
    """Pearson, Spearman (midranks) and Kendall tau-b of paired ages at death."""
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must have shape (n, 2)")
    if len(pairs) < 2:
        raise ValueError("dependence_summary needs at least 2 pairs")
    a, b = pairs[:, 0], pairs[:, 1]
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("zero variance in one coordinate; correlation undefined")
    r = float(np.clip(np.corrcoef(a, b)[0, 1], -1, 1))
    rho = float(np.clip(stats.spearmanr(a, b)[0], -1, 1))
    tau = float(np.clip(stats.kendalltau(a, b, variant="b")[0], -1, 1))
    return DependenceSummary(len(pairs), r, rho, tau)


def death_age_pairs(portfolio):
    """Ages at death of couples where both deaths were observed."""
    both = (portfolio.delta_m == 0) & (portfolio.delta_f == 0)
    return np.column_stack([portfolio.x_m[both] + portfolio.t_m[both],
                            portfolio.x_f[both] + portfolio.t_f[both]])


def _band_labels(bands):
    edges = [0.0] + list(bands)
    labels = [f"{_num(lo)}<=|d|<{_num(hi)}" for lo, hi in zip(edges[:-1], edges[1:])]
    labels.append(f"|d|>={_num(edges[-1])}")
    return labels


def _num(v):
    return str(int(v)) if float(v).is_integer() else str(v)


def partition_by_age_gap(portfolio, bands, split_by_sign=False):
    """Split couples by ``|d|`` band (and optionally by the sign of ``d``).

    ``d = 0`` counts with the ``x_m>=x_f`` group. Returns an ordered dict of
    label to sub-portfolio; every band appears even if empty.
    """
    bands = [float(b) for b in bands]
    if not bands:
        raise ValueError("bands must not be empty")
    if any(b <= 0 for b in bands) or any(b2 <= b1 for b1, b2 in zip(bands, bands[1:])):
        raise ValueError("bands must be positive and strictly increasing")
    absd = np.abs(portfolio.d)
    band_idx = np.searchsorted(bands, absd, side="right")
    out = {}
    for k, label in enumerate(_band_labels(bands)):
        in_band = band_idx == k
        if split_by_sign:
            older_m = portfolio.x_m >= portfolio.x_f
            out[f"{label}, x_m>=x_f"] = portfolio.subset(in_band & older_m)
            out[f"{label}, x_m<x_f"] = portfolio.subset(in_band & ~older_m)
        else:
            out[label] = portfolio.subset(in_band)
    return out


def describe_ages(portfolio):
    """Entry and death age statistics by gender, laid out like a summary table."""
    out = {}
    for g in ("m", "f"):
        x = getattr(portfolio, f"x_{g}")
        dead = getattr(portfolio, f"delta_{g}") == 0
        death = x[dead] + getattr(portfolio, f"t_{g}")[dead]
        for kind, v in (("entry", x), ("death", death)):
            out[f"{g}_{kind}"] = {
                "number": int(v.size),
                "mean": float(v.mean()) if v.size else None,
                "std": float(v.std(ddof=1)) if v.size > 1 else None,
                "median": float(np.median(v)) if v.size else None,
                "p10": float(np.percentile(v, 10)) if v.size else None,
                "p90": float(np.percentile(v, 90)) if v.size else None,
            }
    return out


# --------------------------------------------------------------------------
# synthetic portfolios
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Settings for :func:`synthesize_portfolio`.

    Entry-age moments default to the observed male/female figures of a large
    Canadian annuity portfolio. A fraction ``late_entry_fraction`` of couples
    join at a uniform time within the window; the rest are observed for all of it.
    """

    n_couples: int = 12856
    male_entry_mean: float = 67.9
    male_entry_sd: float = 6.38
    female_entry_mean: float = 64.95
    female_entry_sd: float = 7.26
    entry_corr: float = 0.8
    min_entry_age: float = 40.0
    max_entry_age: float = 100.0
    window_years: float = DEFAULT_WINDOW
    late_entry_fraction: float = 0.1
    censoring: bool = True
    benefit_mean: float = 1000.0
    benefit_cv: float = 0.5

    def __post_init__(self):
        if not isinstance(self.n_couples, (int, np.integer)) or self.n_couples < 0:
            raise ValueError("n_couples must be a non-negative integer")
        for name in ("male_entry_sd", "female_entry_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not -1 < self.entry_corr < 1:
            raise ValueError("entry_corr must lie in (-1, 1)")
        if not self.min_entry_age < self.max_entry_age:
            raise ValueError("min_entry_age must be below max_entry_age")
        if not self.window_years > 0:
            raise ValueError("window_years must be positive")
        if not 0 <= self.late_entry_fraction <= 1:
            raise ValueError("late_entry_fraction must lie in [0, 1]")
        if self.benefit_mean < 0 or self.benefit_cv < 0:
            raise ValueError("benefit parameters must be non-negative")

    def to_dict(self):
        return asdict(self)


def read_kv_config(path):
    """Parse flat ``key = value`` lines (``#`` comments allowed) into a dict."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = _parse_scalar(val)
    return out


def _parse_scalar(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def generator_config_from_dict(data):
    known = {f.name: f for f in fields(GeneratorConfig)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown generator settings: {sorted(unknown)}")
    return replace(GeneratorConfig(), **data)


def _entry_ages(cfg, n, rng):
    mean = np.array([cfg.male_entry_mean, cfg.female_entry_mean])
    sd = np.array([cfg.male_entry_sd, cfg.female_entry_sd])
    cov = np.outer(sd, sd) * np.array([[1, cfg.entry_corr], [cfg.entry_corr, 1]])
    out = np.empty((0, 2))
    while len(out) < n:
        draw = rng.multivariate_normal(mean, cov, size=max(2 * (n - len(out)), 16), method="cholesky")
        ok = np.all((draw >= cfg.min_entry_age) & (draw <= cfg.max_entry_age), axis=1)
        out = np.vstack([out, draw[ok]])
    return out[:n]


def synthesize_portfolio(config, marginals, dependence, seed):
    """Simulate an observed portfolio from Gompertz margins and a copula model.

    Remaining lifetimes at entry are ``F_x^{-1}(U)``, ``F_y^{-1}(V)`` with ``(U, V)``
    drawn from the couple's copula at ``alpha(x_m - x_f)``. Each couple is then
    observed from its entry time until the end of the window; a lifetime still
    running at that point is recorded as censored.

    Parameters
    ----------
    marginals : (GompertzParams, GompertzParams)
        Male and female laws.
    dependence : DependenceModel
    """
    cfg = config if isinstance(config, GeneratorConfig) else generator_config_from_dict(config)
    p_m, p_f = marginals
    n = int(cfg.n_couples)
    ages_ss, cop_ss, cens_ss, ben_ss = _rng.spawn(seed, 4)
    if n == 0:
        return Portfolio([], [], [], [], [], [], [], [], window_years=cfg.window_years)
    ages = _entry_ages(cfg, n, _rng.make_generator(ages_ss))
    x_m, x_f = ages[:, 0], ages[:, 1]
    alpha = dependence.alpha_of_d(x_m - x_f)
    if dependence.family.value == "independence":
        alpha = None
    uv = copula_sample(dependence.family, alpha, n, seed=cop_ss)
    # U = 1 exactly would be an infinite lifetime
    uv = np.clip(uv, 0.0, 1 - 1e-16)
    life_m = gompertz_cdf_inverse(p_m, x_m, uv[:, 0])
    life_f = gompertz_cdf_inverse(p_f, x_f, uv[:, 1])

    rng = _rng.make_generator(cens_ss)
    late = rng.random(n) < cfg.late_entry_fraction
    offset = np.where(late, rng.uniform(0.0, cfg.window_years, n), 0.0)
    if cfg.censoring and math.isfinite(cfg.window_years):
        bound = cfg.window_years - offset
        t_m = np.minimum(life_m, bound)
        t_f = np.minimum(life_f, bound)
        delta_m = (life_m >= bound).astype(int)
        delta_f = (life_f >= bound).astype(int)
    else:
        t_m, t_f = life_m, life_f
        delta_m = np.zeros(n, dtype=int)
        delta_f = np.zeros(n, dtype=int)

    rng = _rng.make_generator(ben_ss)
    if cfg.benefit_cv > 0 and cfg.benefit_mean > 0:
        s2 = math.log1p(cfg.benefit_cv ** 2)
        benefit = rng.lognormal(math.log(cfg.benefit_mean) - s2 / 2, math.sqrt(s2), n)
    else:
        benefit = np.full(n, cfg.benefit_mean)
    window = cfg.window_years if cfg.censoring else None
    width = len(str(n))
    ids = [f"C{i:0{width}d}" for i in range(1, n + 1)]
    return Portfolio(ids, x_m, x_f, t_m, t_f, delta_m, delta_f, benefit, window_years=window)
