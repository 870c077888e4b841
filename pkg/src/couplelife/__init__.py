"""Dependent lifetimes of couples: Gompertz margins, age-gap Archimedean copulas,
censored-data estimation, goodness of fit and joint-life annuity risk."""

__version__ = "0.1.0"

from .actuarial import (
    CoupleModel,
    ProductSpec,
    annuity_pv,
    curtate_expectancy,
    expectancy_curve,
    expected_annuity,
    expected_product_value,
    joint_survival,
    last_survivor_survival,
    portfolio_expected_values,
    product_liability,
)
from .copulas import (
    CopulaFamily,
    copula_cdf,
    copula_density,
    copula_h,
    copula_sample,
    frailty_sample,
    kendall_tau,
    survival_copula_cdf,
)
from .data import (
    CoupleRecord,
    GeneratorConfig,
    Portfolio,
    dependence_summary,
    load_portfolio,
    partition_by_age_gap,
    synthesize_portfolio,
    write_portfolio,
)
from .dependence import DependenceModel, alpha_of_d
from .estimation import (
    CopulaFit,
    CoupleCopulaEstimator,
    GompertzEstimator,
    MarginalFit,
    OptimizerConfig,
    fit_marginal,
    ifm_fit_copula,
    omnibus_fit_copula,
    profile_loglik,
)
from .gof import EmpiricalCopula, GofResult, bootstrap_gof, censoring_survival, cvm_statistic, empirical_copula
from .risk import RiskReport, SimulationConfig, risk_report, run_study, simulate_liability
from .survival import GompertzParams, KaplanMeier, StepSurvival, km_fit, km_quantile

__all__ = [name for name in dir() if not name.startswith("_")]
