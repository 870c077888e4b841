import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from couplelife.actuarial import (
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
    single_survival,
)
from couplelife.copulas import copula_sample
from couplelife.dependence import DependenceModel
from couplelife.survival import gompertz_cdf_inverse

from conftest import FEMALE, GUMBEL_AGEGAP, MALE

GUMBEL = DependenceModel("gumbel", "agegap", **GUMBEL_AGEGAP)
INDEP = DependenceModel.independence()
T = np.linspace(0, 50, 101)


def couple(x=65.0, y=55.0, dep=GUMBEL, delta=0.05):
    return CoupleModel(x, y, MALE, FEMALE, dep, delta)


def test_annuity_pv_closed_form():
    assert_allclose(annuity_pv(20.0, 0.05), (1 - np.exp(-1)) / 0.05)
    assert_allclose(annuity_pv(20.0, 0.05), 12.642411, atol=1e-6)
    assert_allclose(annuity_pv([0.0, 7.0], 0.0), [0.0, 7.0])
    with pytest.raises(ValueError):
        annuity_pv(-1.0, 0.05)


def test_independence_joint_survival_is_product():
    c = couple(dep=INDEP)
    assert_allclose(joint_survival(c, T), single_survival(c, T, "m") * single_survival(c, T, "f"),
                    rtol=1e-12, atol=1e-15)


def test_status_identities_and_bounds():
    c = couple()
    px, py = single_survival(c, T, "m"), single_survival(c, T, "f")
    pxy = joint_survival(c, T)
    assert_allclose(last_survivor_survival(c, T), px + py - pxy, atol=1e-15)
    assert np.all(pxy <= np.minimum(px, py) + 1e-15)
    assert np.all(pxy >= px * py - 1e-15)  # positive dependence
    assert np.all(np.diff(pxy) <= 1e-15)


def test_expectancy_anchor_couples():
    assert_allclose(curtate_expectancy(couple(65, 55)), 32.62, atol=0.1)
    assert_allclose(curtate_expectancy(couple(55, 65)), 28.82, atol=0.1)


def test_curtate_expectancy_by_direct_sum():
    c = couple(70, 66)
    t = np.arange(1, 130 - 66 + 1)
    assert_allclose(curtate_expectancy(c, "joint"), joint_survival(c, t.astype(float)).sum(), atol=1e-10)


@pytest.mark.parametrize("status", ["joint", "last_survivor", "single_m", "single_f"])
def test_expected_annuity_against_trapezoid(status):
    c = couple()
    t = np.linspace(0, c.horizon, 200_001)
    from couplelife.actuarial import status_survival
    y = np.exp(-c.delta * t) * status_survival(c, status, t)
    assert_allclose(expected_annuity(c, status), integrate.trapezoid(y, t), rtol=1e-8)


@pytest.mark.parametrize("product", ["joint_life", "last_survivor", "two_thirds", "reversionary"])
def test_monte_carlo_agrees_with_quadrature(product):
    c = couple(68, 64)
    n = 200_000
    uv = np.clip(copula_sample("gumbel", c.alpha, n, seed=12), 0, 1 - 1e-16)
    T_m = gompertz_cdf_inverse(MALE, 68.0, uv[:, 0])
    T_f = gompertz_cdf_inverse(FEMALE, 64.0, uv[:, 1])
    v = product_liability(c, product, T_m, T_f)
    se = v.std() / np.sqrt(n)
    assert abs(v.mean() - expected_product_value(c, product)) < 4 * se


def test_pathwise_product_identities(rng):
    T_m, T_f = rng.exponential(15, 100), rng.exponential(18, 100)
    p1, p2, p3, p4 = (product_liability(0.04, k, T_m, T_f) for k in
                      ("joint_life", "last_survivor", "two_thirds", "reversionary"))
    assert_allclose(p3, p1 / 3 + 2 * p2 / 3, rtol=1e-14)
    assert_allclose(p4, annuity_pv(T_f, 0.04) - p1, atol=1e-14)
    assert np.all(p4 >= -1e-14)
    mirror = product_liability(0.04, ProductSpec("p4", mirrored=True), T_m, T_f)
    assert_allclose(mirror, annuity_pv(T_m, 0.04) - p1, atol=1e-14)


def test_portfolio_pricing_matches_quadrature(rng):
    ages = rng.uniform(55, 85, (6, 2))
    X = np.column_stack([ages, np.ones((6, 4)), rng.uniform(500, 1500, 6)])
    prods = ["joint_life", "last_survivor", "two_thirds", "reversionary"]
    got = portfolio_expected_values(X, (MALE, FEMALE), GUMBEL, prods)
    for i, (x, y) in enumerate(ages):
        c = couple(x, y)
        want = [X[i, 6] * expected_product_value(c, p) for p in prods]
        assert_allclose(got[i], want, rtol=1e-8)


def test_dependence_direction():
    # stronger association lengthens the joint life and shortens the survivor's wait
    low = couple(dep=DependenceModel("gumbel", "constant", alpha=1.2))
    high = couple(dep=DependenceModel("gumbel", "constant", alpha=3.0))
    indep = couple(dep=INDEP)
    a = [expected_product_value(m, "joint_life") for m in (indep, low, high)]
    r = [expected_product_value(m, "reversionary") for m in (indep, low, high)]
    assert a[0] < a[1] < a[2]
    assert r[0] > r[1] > r[2]


def test_expectancy_curve_shape():
    rows = expectancy_curve((MALE, FEMALE), {"A": INDEP, "B": GUMBEL})
    assert len(rows) == 82
    assert rows[0][:2] == (-20.0, "A") and rows[40][0] == 20.0
    with pytest.raises(ValueError):
        expectancy_curve((MALE, FEMALE), {"A": INDEP}, fixed="z")


def test_invalid_inputs():
    with pytest.raises(ValueError):
        ProductSpec("whole_life")
    with pytest.raises(ValueError):
        couple(delta=-0.01)
    with pytest.raises(ValueError):
        joint_survival(couple(), -1.0)
    assert ProductSpec("P2").kind == "last_survivor" and ProductSpec("two_thirds").label == "P3"


def test_status_ordering_random_points(rng):
    c = couple(dep=DependenceModel("gumbel", "constant", alpha=2.0))
    t = rng.uniform(0, 60, 100)
    px, py = single_survival(c, t, "m"), single_survival(c, t, "f")
    assert np.all(joint_survival(c, t) <= np.minimum(px, py) + 1e-15)
    assert np.all(np.maximum(px, py) <= last_survivor_survival(c, t) + 1e-15)


def test_independence_overstates_last_survivor_expectancy():
    a = curtate_expectancy(couple(65, 65, INDEP))
    b = curtate_expectancy(couple(65, 65, DependenceModel("gumbel", "constant", alpha=1.993)))
    assert a >= b


def test_reversionary_hand_value():
    v = product_liability(0.05, "reversionary", 10.0, 20.0)
    assert_allclose(v, annuity_pv(20.0, 0.05) - annuity_pv(10.0, 0.05))
    assert_allclose(v, 4.773, atol=5e-4)


def test_independence_curve_dominates():
    rows = expectancy_curve((MALE, FEMALE), {"A": INDEP, "B": DependenceModel("gumbel", "constant", alpha=1.993)})
    a = np.array([e for _, m, e in rows if m == "A"])
    b = np.array([e for _, m, e in rows if m == "B"])
    assert np.all(a >= b - 1e-12)
