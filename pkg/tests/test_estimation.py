import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from couplelife.copulas import copula_sample
from couplelife.data import GeneratorConfig, synthesize_portfolio
from couplelife.dependence import DependenceModel
from couplelife.estimation import (
    CoupleCopulaEstimator,
    GompertzEstimator,
    OptimizerConfig,
    censoring_cases,
    copula_loglik,
    fit_marginal,
    fit_result_to_json,
    full_loglik,
    ifm_fit_copula,
    load_fit_result,
    marginal_loglik,
    omnibus_fit_copula,
    profile_loglik,
    pseudo_observations,
)
from couplelife.survival import GompertzParams, gompertz_cdf_inverse, gompertz_survival

from conftest import FEMALE, MALE

FAST = OptimizerConfig(restarts=2)
CASES = [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.mark.parametrize("family,a", [("gumbel", 2.0), ("frank", 7.0), ("frank", -2.0),
                                      ("clayton", 1.5), ("joe", 2.4)])
@pytest.mark.parametrize("dm,df", CASES)
def test_censored_terms_match_direct_evaluation(family, a, dm, df, rng):
    model = DependenceModel(family, "constant", alpha=a)
    Sm = rng.uniform(0.05, 0.95, 20)
    Sf = rng.uniform(0.05, 0.95, 20)
    for s1, s2 in zip(Sm, Sf):
        got = copula_loglik(model, [0.0], [s1], [s2], [dm], [df])
        want = oracles.censored_term(family, a, s1, s2, dm, df)
        assert_allclose(got, want, rtol=1e-10)


def test_full_loglik_is_marginals_plus_copula(small_portfolio, gumbel_agegap):
    X = small_portfolio.to_array()
    want = 0.0
    for x_m, x_f, t_m, t_f, dm, df, _ in X:
        a = float(gumbel_agegap.alpha_of_d(x_m - x_f))
        Sm = math.exp(oracles.gompertz_log_survival(MALE.m, MALE.sigma, x_m, t_m))
        Sf = math.exp(oracles.gompertz_log_survival(FEMALE.m, FEMALE.sigma, x_f, t_f))
        want += oracles.censored_term("gumbel", a, Sm, Sf, dm, df)
        if dm == 0:
            want += oracles.gompertz_log_density(MALE.m, MALE.sigma, x_m, t_m)
        if df == 0:
            want += oracles.gompertz_log_density(FEMALE.m, FEMALE.sigma, x_f, t_f)
    assert_allclose(full_loglik(gumbel_agegap, MALE, FEMALE, X), want, rtol=1e-10)


def test_marginal_loglik_direct():
    x = np.array([70.0, 80.0])
    t = np.array([3.0, 5.0])
    delta = np.array([0, 1])
    want = (oracles.gompertz_log_density(MALE.m, MALE.sigma, 70, 3)
            + oracles.gompertz_log_survival(MALE.m, MALE.sigma, 80, 5))
    assert_allclose(marginal_loglik(MALE, x, t, delta), want, rtol=1e-12)


def test_censoring_cases_partition(small_portfolio):
    c = censoring_cases(small_portfolio.delta_m, small_portfolio.delta_f)
    assert sum(c.values()) == len(small_portfolio)
    assert c == small_portfolio.censoring_counts()
    assert censoring_cases([0, 0, 1, 1], [0, 1, 0, 1]) == {
        "both_dead": 1, "male_dead_only": 1, "female_dead_only": 1, "both_censored": 1}


def test_loglik_invariant_to_row_order(small_portfolio, gumbel_agegap, rng):
    X = small_portfolio.to_array()
    perm = rng.permutation(len(X))
    assert full_loglik(gumbel_agegap, MALE, FEMALE, X) == full_loglik(gumbel_agegap, MALE, FEMALE, X[perm])


def uncensored_sample(n, params, seed):
    r = np.random.default_rng(seed)
    x = r.uniform(60, 75, n)
    return x, gompertz_cdf_inverse(params, x, r.random(n))


def test_marginal_recovery_uncensored():
    truth = GompertzParams(90.0, 8.0)
    x, t = uncensored_sample(100_000, truth, 1)
    X = np.column_stack([x, x, t, t, np.zeros_like(x), np.zeros_like(x), np.ones_like(x)])
    fit = fit_marginal(X, "m")
    assert abs(fit.params.m - 90) < 0.3 and abs(fit.params.sigma - 8) < 0.3
    assert fit.converged and fit.std_errors[0] < 0.1


def test_marginal_requires_deaths():
    X = np.array([[70, 65, 5, 5, 1, 1, 1.0], [72, 66, 5, 5, 1, 1, 1.0]])
    with pytest.raises(ValueError, match="censored"):
        fit_marginal(X, "m")


@pytest.fixture(scope="module")
def fitted(small_portfolio):
    mm = fit_marginal(small_portfolio, "m", FAST)
    mf = fit_marginal(small_portfolio, "f", FAST)
    return mm, mf


def test_marginals_near_truth(fitted):
    mm, mf = fitted
    assert abs(mm.params.m - MALE.m) < 4 * mm.std_errors[0]
    assert abs(mf.params.m - FEMALE.m) < 4 * mf.std_errors[0]


def test_constant_is_agegap_without_slopes(small_portfolio, fitted):
    mm, mf = fitted
    c = ifm_fit_copula(small_portfolio, mm, mf, "clayton", "constant", FAST)
    a = float(c.model.alpha)
    g = DependenceModel("clayton", "agegap", beta0=a)
    X = small_portfolio.to_array()
    Sm = gompertz_survival(mm.params, X[:, 0], X[:, 2])
    Sf = gompertz_survival(mf.params, X[:, 1], X[:, 3])
    assert_allclose(copula_loglik(g, small_portfolio.d, Sm, Sf, X[:, 4], X[:, 5]),
                    c.log_likelihood, rtol=1e-12)
    # the nested model cannot fit worse
    full = ifm_fit_copula(small_portfolio, mm, mf, "clayton", "agegap", FAST)
    assert full.log_likelihood >= c.log_likelihood - 1e-6


def test_ifm_equals_omnibus_on_parametric_pseudo(small_portfolio, fitted):
    mm, mf = fitted
    X = small_portfolio.to_array()
    Sm = gompertz_survival(mm.params, X[:, 0], X[:, 2])
    Sf = gompertz_survival(mf.params, X[:, 1], X[:, 3])
    ifm = ifm_fit_copula(small_portfolio, mm, mf, "gumbel", "constant", FAST)
    omni = omnibus_fit_copula(small_portfolio, "gumbel", "constant", FAST, pseudo=(Sm, Sf))
    assert_allclose(omni.model.alpha, ifm.model.alpha, rtol=1e-6)


def test_pseudo_observations_range(small_portfolio):
    U, V = pseudo_observations(small_portfolio)
    n = len(small_portfolio)
    for P in (U, V):
        assert np.all(P > 0) and np.all(P <= n / (n + 1) + 1e-15)


def test_ifm_permutation_invariant(small_portfolio, fitted, rng):
    mm, mf = fitted
    X = small_portfolio.to_array()
    a = ifm_fit_copula(X, mm, mf, "gumbel", "constant", FAST)
    b = ifm_fit_copula(X[rng.permutation(len(X))], mm, mf, "gumbel", "constant", FAST)
    assert_allclose(a.model.alpha, b.model.alpha, rtol=1e-6)


def test_frank_on_independent_data_is_near_zero():
    cfg = GeneratorConfig(n_couples=1500, window_years=30.0)
    p = synthesize_portfolio(cfg, (MALE, FEMALE), DependenceModel.independence(), seed=4)
    fit = ifm_fit_copula(p, MALE, FEMALE, "frank", "constant", FAST)
    assert abs(fit.model.alpha) < 0.2 + 2 * fit.std_errors["alpha"]


def test_profile_curvature_matches_standard_error(small_portfolio, fitted):
    mm, mf = fitted
    fit = ifm_fit_copula(small_portfolio, mm, mf, "gumbel", "constant", FAST)
    a, se = fit.model.alpha, fit.std_errors["alpha"]
    prof = profile_loglik(small_portfolio, fit, "alpha", [a - se, a, a + se], marginals=(mm, mf))
    # a quadratic log-likelihood drops by 1/2 at one standard error
    drop = prof[1, 1] - 0.5 * (prof[0, 1] + prof[2, 1])
    assert_allclose(drop, 0.5, rtol=0.3)
    with pytest.raises(ValueError):
        profile_loglik(small_portfolio, fit, "beta1", [0.0], marginals=(mm, mf))


def test_fit_json_round_trip(small_portfolio, fitted):
    mm, mf = fitted
    fit = ifm_fit_copula(small_portfolio, mm, mf, "joe", "constant", FAST)
    text = fit_result_to_json(mm, mf, [fit])
    json.loads(text)
    m2, f2, fits = load_fit_result(text)
    assert m2.params == mm.params and f2.params == mf.params
    assert fits[("ifm", "constant")].model == fit.model


def test_copula_fit_recovers_simple_truth():
    # uncensored pairs straight from the copula with known uniform margins
    n = 3000
    uv = copula_sample("clayton", 2.0, n, seed=8)
    x = np.full(n, 60.0)
    t_m = gompertz_cdf_inverse(MALE, x, uv[:, 0])
    t_f = gompertz_cdf_inverse(FEMALE, x, uv[:, 1])
    X = np.column_stack([x, x, t_m, t_f, np.zeros(n), np.zeros(n), np.ones(n)])
    fit = ifm_fit_copula(X, MALE, FEMALE, "clayton", "constant", FAST)
    assert abs(fit.model.alpha - 2.0) < 3 * fit.std_errors["alpha"]


def test_estimators(small_portfolio):
    X = small_portfolio.to_array()
    g = GompertzEstimator(gender="f", optimizer=FAST)
    assert g.get_params()["gender"] == "f"
    g.fit(X)
    assert g.predict(X).shape == (len(X),)
    assert np.isfinite(g.score(X))
    est = CoupleCopulaEstimator(family="gumbel", form="constant", method="omnibus", optimizer=FAST)
    assert est.get_params()["method"] == "omnibus"
    est.fit(X)
    assert est.transform(X).shape == (len(X), 2)
    assert est.predict([0.0, 5.0]).shape == (2,)
    assert np.isfinite(est.score(X))
    with pytest.raises(ValueError):
        CoupleCopulaEstimator(method="bogus").fit(X)
