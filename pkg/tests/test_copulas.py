import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from couplelife.copulas import (
    CopulaFamily,
    admissible,
    alpha_from_tau,
    copula_cdf,
    copula_density,
    copula_h,
    copula_log_density,
    copula_sample,
    frailty_sample,
    kendall_tau,
    survival_copula_cdf,
    survival_copula_density,
    survival_copula_h,
)

FAMILIES = [("gumbel", 1.7), ("frank", 5.0), ("frank", -3.0), ("clayton", 2.0), ("joe", 2.2)]


def textbook_cdf(family, a, u, v):
    if family == "gumbel":
        return np.exp(-(((-np.log(u)) ** a + (-np.log(v)) ** a) ** (1 / a)))
    if family == "clayton":
        return (u ** -a + v ** -a - 1) ** (-1 / a)
    if family == "frank":
        return -np.log(1 + (np.exp(-a * u) - 1) * (np.exp(-a * v) - 1) / (np.exp(-a) - 1)) / a
    if family == "joe":
        p, q = (1 - u) ** a, (1 - v) ** a
        return 1 - (p + q - p * q) ** (1 / a)
    raise AssertionError(family)


GRID = np.array([0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99])
U, V = np.meshgrid(GRID, GRID)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_cdf_matches_textbook_form(family, a):
    assert_allclose(copula_cdf(family, a, U, V), textbook_cdf(family, a, U, V), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_h_is_derivative_of_cdf(family, a):
    e = 1e-6
    fd = (textbook_cdf(family, a, U + e, V) - textbook_cdf(family, a, U - e, V)) / (2 * e)
    assert_allclose(copula_h(family, a, U, V), fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_density_is_mixed_derivative(family, a):
    e = 1e-4
    c = lambda du, dv: textbook_cdf(family, a, U + du, V + dv)
    fd = (c(e, e) - c(e, -e) - c(-e, e) + c(-e, -e)) / (4 * e * e)
    assert_allclose(copula_density(family, a, U, V), fd, rtol=2e-4, atol=1e-6)
    assert_allclose(copula_log_density(family, a, U, V), np.log(copula_density(family, a, U, V)),
                    rtol=1e-12)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_density_integrates_to_one(family, a):
    val, _ = integrate.dblquad(lambda v, u: float(copula_density(family, a, u, v)),
                               0, 1, 0, 1, epsabs=1e-10, epsrel=1e-10)
    assert_allclose(val, 1.0, atol=1e-6)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_margins_and_boundaries(family, a):
    assert_allclose(copula_cdf(family, a, GRID, 1.0), GRID)
    assert_allclose(copula_cdf(family, a, 1.0, GRID), GRID)
    assert_allclose(copula_cdf(family, a, 0.0, GRID), 0.0)
    assert_allclose(copula_cdf(family, a, U, V), copula_cdf(family, a, V, U), rtol=1e-13)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_survival_copula_identities(family, a):
    # C~ is the joint survival of (1 - U, 1 - V): inclusion-exclusion by hand
    want = 1 - (1 - U) - (1 - V) + textbook_cdf(family, a, 1 - U, 1 - V)
    assert_allclose(survival_copula_cdf(family, a, U, V), want, rtol=1e-12, atol=1e-15)
    e = 1e-6
    fd = (survival_copula_cdf(family, a, U + e, V) - survival_copula_cdf(family, a, U - e, V)) / (2 * e)
    assert_allclose(survival_copula_h(family, a, U, V), fd, rtol=1e-5, atol=1e-7)
    assert_allclose(survival_copula_density(family, a, U, V),
                    copula_density(family, a, 1 - U, 1 - V))


def test_independence_is_product():
    assert_allclose(copula_cdf("independence", None, U, V), U * V)
    assert_allclose(copula_density("independence", None, U, V), 1.0)
    assert_allclose(copula_h("independence", None, U, V), V)


def test_frank_near_zero_is_independence():
    assert_allclose(copula_cdf("frank", 1e-13, U, V), U * V, atol=1e-12)


@pytest.mark.parametrize("family,bad", [("gumbel", 1.0), ("joe", 0.5), ("clayton", 0.0),
                                        ("frank", 0.0), ("gumbel", np.nan)])
def test_inadmissible_parameters_raise(family, bad):
    assert not admissible(family, bad)
    with pytest.raises(ValueError):
        copula_cdf(family, bad, 0.5, 0.5)


def test_probability_inputs_validated():
    with pytest.raises(ValueError):
        copula_cdf("gumbel", 2.0, 1.2, 0.5)
    with pytest.raises(ValueError):
        copula_h("gumbel", 2.0, 0.0, 0.5)


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown copula family"):
        CopulaFamily.parse("gaussian")


def kendall_oracle(family, a):
    # tau = 4 E[C(U, V)] - 1, integrated directly against the density
    f = lambda v, u: float(textbook_cdf(family, a, u, v) * copula_density(family, a, u, v))
    val, _ = integrate.dblquad(f, 1e-9, 1 - 1e-9, 1e-9, 1 - 1e-9, epsabs=1e-8)
    return 4 * val - 1


@pytest.mark.parametrize("family,a", FAMILIES)
def test_kendall_tau_against_integral(family, a):
    assert_allclose(kendall_tau(family, a), kendall_oracle(family, a), atol=5e-4)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_alpha_from_tau_inverts(family, a):
    assert_allclose(alpha_from_tau(family, kendall_tau(family, a)), a, rtol=1e-8)


def empirical_cdf(sample, u, v):
    return np.mean((sample[:, 0][:, None] <= u) & (sample[:, 1][:, None] <= v), axis=0)


@pytest.mark.parametrize("family,a", FAMILIES)
def test_conditional_sampler_distribution(family, a):
    s = copula_sample(family, a, 40000, seed=3)
    u, v = U.ravel(), V.ravel()
    # 4 binomial SDs at n = 40000 is at most 0.01
    assert np.max(np.abs(empirical_cdf(s, u, v) - copula_cdf(family, a, u, v))) < 0.01
    tau = stats.kendalltau(s[:4000, 0], s[:4000, 1]).statistic
    assert abs(tau - kendall_tau(family, a)) < 0.04


@pytest.mark.parametrize("family,a", [f for f in FAMILIES if f[1] > 0])
def test_frailty_sampler_distribution(family, a):
    s = frailty_sample(family, a, 40000, seed=4)
    u, v = U.ravel(), V.ravel()
    assert np.max(np.abs(empirical_cdf(s, u, v) - copula_cdf(family, a, u, v))) < 0.01


def test_sampler_inverts_h():
    rng = np.random.default_rng(0)
    uw = rng.random((500, 2))
    alpha = rng.uniform(1.1, 4, 500)
    s = copula_sample("gumbel", alpha, 500, uniforms=uw)
    assert_allclose(s[:, 0], uw[:, 0])
    assert_allclose(copula_h("gumbel", alpha, s[:, 0], s[:, 1]), uw[:, 1], atol=1e-8)


def test_sampler_reproducible_and_checks_alpha_length():
    assert np.array_equal(copula_sample("clayton", 2.0, 50, seed=9), copula_sample("clayton", 2.0, 50, seed=9))
    with pytest.raises(ValueError):
        copula_sample("clayton", np.ones(3) * 2, 4, seed=0)


params = st.sampled_from(["gumbel", "frank", "clayton", "joe"]).flatmap(
    lambda f: st.tuples(
        st.just(f),
        {"gumbel": st.floats(1.01, 15), "joe": st.floats(1.01, 15),
         "clayton": st.floats(0.01, 15), "frank": st.floats(-30, 30).filter(lambda a: abs(a) > 1e-3)}[f]))
unit = st.floats(0.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(params, unit, unit, unit)
def test_frechet_bounds_and_monotonicity(fa, u, v, w):
    family, a = fa
    c = float(copula_cdf(family, a, u, v))
    assert max(u + v - 1, 0) - 1e-12 <= c <= min(u, v) + 1e-12
    lo, hi = sorted((u, w))
    assert copula_cdf(family, a, lo, v) <= copula_cdf(family, a, hi, v) + 1e-12


@settings(max_examples=200, deadline=None)
@given(params, st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_h_is_a_probability(fa, u, v):
    family, a = fa
    h = float(copula_h(family, a, u, v))
    assert 0.0 <= h <= 1.0


def test_joe_tau_closed_form_at_two():
    assert_allclose(kendall_tau("joe", 2.0), 2 - np.pi ** 2 / 6, rtol=1e-10)
    assert np.isfinite(kendall_tau("joe", 150.0))


def test_reference_values():
    assert_allclose(copula_cdf("gumbel", 2.0, 0.5, 0.5), 0.5 ** (2 ** 0.5), rtol=1e-14)
    assert_allclose(copula_cdf("gumbel", 2.0, 0.5, 0.5), 0.37521, atol=5e-6)
    assert_allclose(copula_cdf("clayton", 2.0, 0.5, 0.5), 7 ** -0.5, rtol=1e-14)
    assert_allclose(survival_copula_cdf("gumbel", 2.0, 0.5, 0.5), copula_cdf("gumbel", 2.0, 0.5, 0.5))


def test_conditional_density_integrates_to_one():
    val, _ = integrate.quad(lambda v: float(copula_density("gumbel", 2.0, 0.35, v)), 0, 1,
                            epsabs=1e-12)
    assert_allclose(val, 1.0, atol=1e-6)


def test_frank_density_at_centre():
    a, e = 7.359, 1e-4
    c = lambda u, v: textbook_cdf("frank", a, u, v)  # noqa: E731
    fd = (c(0.5 + e, 0.5 + e) - c(0.5 + e, 0.5 - e) - c(0.5 - e, 0.5 + e) + c(0.5 - e, 0.5 - e)) / (4 * e * e)
    assert_allclose(copula_density("frank", a, 0.5, 0.5), fd, rtol=1e-5)


def test_tau_reference_values():
    assert kendall_tau("gumbel", 2.0) == 0.5
    assert_allclose(kendall_tau("frank", 7.359), kendall_oracle("frank", 7.359), atol=1e-4)


@pytest.mark.parametrize("family", ["gumbel", "clayton"])
def test_sampler_tau_at_two(family):
    s = copula_sample(family, 2.0, 100_000, seed=21)
    tau = stats.kendalltau(s[:, 0], s[:, 1]).statistic
    assert abs(tau - 0.5) < 0.01


def test_log1mexp_matches_high_precision():
    import mpmath as mp

    from couplelife.copulas import log1mexp

    xs = [-40.0, -16.5, -1.0, -0.7, -0.69, -1e-3, -1e-9, -1e-15]
    with mp.workdps(40):
        want = [float(mp.log(1 - mp.exp(mp.mpf(x)))) for x in xs]
    np.testing.assert_allclose(log1mexp(xs), want, rtol=1e-14)
