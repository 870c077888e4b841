"""Monte Carlo distribution of a couple portfolio's annuity liability.

Each path draws both spouses' remaining lifetimes for every couple, prices every
product on those lifetimes and sums over couples. All models and products on
a path share the same uniforms, so differences between them are not blurred by
sampling noise.
"""

import csv
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _rng
from ._parallel import map_indexed
from ._validation import check_couples, check_positive_int
from .actuarial import PRODUCTS, ProductSpec, product_liability
from .copulas import CopulaFamily, copula_sample
from .survival import gompertz_cdf_inverse

# Deductibles of the stop-loss premium by product, in CAD.
DEFAULT_DEDUCTIBLES = {"joint_life": 4.0e6, "last_survivor": 4.5e6,
                       "two_thirds": 4.2e6, "reversionary": 1.7e6}
MEASURES = ("be", "cov", "stop_loss", "var_995", "es_99")


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int = 1000
    seed: int = 0
    delta: float = 0.05
    products: tuple = PRODUCTS
    deductibles: dict = field(default_factory=lambda: dict(DEFAULT_DEDUCTIBLES))
    workers: int | None = None

    def __post_init__(self):
        check_positive_int(self.n_paths, "n_paths")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError("delta must be finite and >= 0")
        prods = tuple(ProductSpec(p) if not isinstance(p, ProductSpec) else p for p in self.products)
        object.__setattr__(self, "products", prods)
        for k, z in self.deductibles.items():
            if not z >= 0:
                raise ValueError(f"deductible for {k} must be >= 0")

    def deductible(self, product):
        return float(self.deductibles.get(product.kind, 0.0))

    def to_dict(self):
        out = asdict(self)
        out["products"] = [p.kind for p in self.products]
        out.pop("workers")
        return out


@dataclass(frozen=True)
class _PathTask:
    X: np.ndarray
    marginals: tuple
    models: tuple
    alphas: tuple
    products: tuple
    delta: float
    seeds: tuple
    uniforms_fn: object = None


def _alphas(model, X):
    if model.family is CopulaFamily.INDEPENDENCE:
        return None
    return model.alpha_of_d(X[:, 0] - X[:, 1])


def _one_path(task, p):
    n = len(task.X)
    if task.uniforms_fn is not None:
        uw = np.asarray(task.uniforms_fn(p, n), dtype=float)
    else:
        uw = _rng.make_generator(task.seeds[p]).random((n, 2))
    pm, pf = task.marginals
    x_m, x_f, benefit = task.X[:, 0], task.X[:, 1], task.X[:, 6]
    out = np.empty((len(task.models), len(task.products)))
    for i, (model, alpha) in enumerate(zip(task.models, task.alphas)):
        uv = copula_sample(model.family, alpha, n, uniforms=uw)
        uv = np.clip(uv, 0.0, 1 - 1e-16)
        T_m = gompertz_cdf_inverse(pm, x_m, uv[:, 0])
        T_f = gompertz_cdf_inverse(pf, x_f, uv[:, 1])
        for j, prod in enumerate(task.products):
            out[i, j] = math.fsum(benefit * product_liability(task.delta, prod, T_m, T_f))
    return out


def simulate_liability(portfolio, marginals, models, config, uniforms_fn=None):
    """Sample the aggregate liability ``L`` for each model and product.

    Parameters
    ----------
    marginals : (GompertzParams, GompertzParams)
    models : dict
        Label to :class:`DependenceModel`; Model A is usually independence.
    uniforms_fn : callable, optional
        ``uniforms_fn(path, n)`` returning the ``(n, 2)`` uniforms of a path
        (testing hook).

    Returns
    -------
    dict mapping ``(model_label, product_kind)`` to an array of ``n_paths`` values.
    """
    X = check_couples(portfolio)
    if len(X) == 0:
        raise ValueError("empty portfolio")
    labels = list(models)
    deps = tuple(models[k] for k in labels)
    alphas = tuple(_alphas(m, X) for m in deps)
    seeds = tuple(_rng.spawn(config.seed, config.n_paths))
    task = _PathTask(X, tuple(marginals), deps, alphas, config.products, config.delta,
                     seeds, uniforms_fn)
    workers = 1 if uniforms_fn is not None else config.workers
    paths = np.stack(map_indexed(_one_path, task, config.n_paths, workers))
    return {(label, prod.kind): paths[:, i, j].copy()
            for i, label in enumerate(labels) for j, prod in enumerate(config.products)}


@dataclass(frozen=True)
class RiskReport:
    be: float
    cov: float
    stop_loss: float
    var_995: float
    es_99: float
    var_99: float
    relative: dict | None = None

    def to_dict(self):
        out = {k: _json_float(getattr(self, k)) for k in MEASURES + ("var_99",)}
        out["relative"] = None if self.relative is None else {
            k: _json_float(v) for k, v in self.relative.items()}
        return out


def _json_float(v):
    return None if v is None or not math.isfinite(v) else float(v)


def value_at_risk(sample, level):
    """Order statistic ``L_(ceil(n * level))`` of the sorted sample."""
    s = np.sort(np.asarray(sample, dtype=float))
    if s.size == 0:
        raise ValueError("empty sample")
    k = min(max(math.ceil(len(s) * level - 1e-9), 1), len(s))
    return float(s[k - 1])


def expected_shortfall(sample, level):
    """Mean of values strictly above the VaR at ``level``; the VaR if there are none."""
    s = np.asarray(sample, dtype=float)
    var = value_at_risk(s, level)
    tail = s[s > var]
    return float(math.fsum(tail) / len(tail)) if len(tail) else var


def risk_report(sample, zeta, baseline=None):
    """Best estimate, CoV, stop-loss premium, VaR 99.5% and ES 99% of a sample.

    With ``baseline`` (another sample, typically Model A's) the ``relative``
    field holds each measure divided by the baseline's; a zero baseline gives NaN.
    """
    s = np.asarray(sample, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("empty sample")
    if zeta < 0:
        raise ValueError("deductible must be >= 0")
    mean = math.fsum(s) / len(s)
    if mean == 0:
        raise ValueError("coefficient of variation undefined for a zero-mean sample")
    sd = float(np.std(s, ddof=1)) if len(s) > 1 else 0.0
    rep = RiskReport(
        be=mean,
        cov=sd / abs(mean),
        stop_loss=math.fsum(np.maximum(s - zeta, 0.0)) / len(s),
        var_995=value_at_risk(s, 0.995),
        es_99=expected_shortfall(s, 0.99),
        var_99=value_at_risk(s, 0.99),
    )
    if baseline is None:
        return rep
    base = risk_report(baseline, zeta)
    rel = {}
    for k in MEASURES:
        b = getattr(base, k)
        rel[k] = getattr(rep, k) / b if b != 0 else math.nan
    return RiskReport(**{**asdict(rep), "relative": rel})


@dataclass
class StudyReport:
    config: SimulationConfig
    models: tuple
    reports: dict
    samples: dict = field(repr=False)

    def to_dict(self):
        absolute, relative = {}, {}
        for prod in self.config.products:
            absolute[prod.label] = {}
            relative[prod.label] = {}
            for m in self.models:
                rep = self.reports[(m, prod.kind)]
                d = rep.to_dict()
                rel = d.pop("relative")
                absolute[prod.label][m] = d
                relative[prod.label][m] = rel
        return {"config": self.config.to_dict(), "models": list(self.models),
                "products": {p.label: p.kind for p in self.config.products},
                "absolute": absolute,
                "relative": relative if "A" in self.models else None}

    def write_samples(self, path):
        """CSV of the raw liability sample, one column per (product, model) cell."""
        keys = [(m, p.kind) for p in self.config.products for m in self.models]
        tmp = f"{path}.tmp{os.getpid()}"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path"] + [f"{ProductSpec(k).label}_{m}" for m, k in keys])
            for i in range(self.config.n_paths):
                w.writerow([i] + [format(self.samples[key][i], ".17g") for key in keys])
        os.replace(tmp, path)


def run_study(portfolio, marginals, models, config=None, uniforms_fn=None):
    """Risk measures for every product under every model.

    If ``models`` contains ``"A"`` every report also carries values relative
    to Model A.
    """
    config = config or SimulationConfig()
    samples = simulate_liability(portfolio, marginals, models, config, uniforms_fn)
    reports = {}
    for prod in config.products:
        zeta = config.deductible(prod)
        base = samples.get(("A", prod.kind))
        for m in models:
            reports[(m, prod.kind)] = risk_report(samples[(m, prod.kind)], zeta, baseline=base)
    return StudyReport(config, tuple(models), reports, samples)
