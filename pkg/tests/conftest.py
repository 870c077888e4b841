import numpy as np
import pytest

from couplelife.data import GeneratorConfig, synthesize_portfolio
from couplelife.dependence import DependenceModel
from couplelife.survival import GompertzParams

# Published Gompertz estimates for husbands and wives of a large annuity book.
MALE = GompertzParams(86.378, 9.833)
FEMALE = GompertzParams(92.175, 8.114)
GUMBEL_AGEGAP = dict(beta0=1.027, beta1=-0.024, beta2=0.036)


@pytest.fixture(scope="session")
def marginals():
    return MALE, FEMALE


@pytest.fixture(scope="session")
def gumbel_agegap():
    return DependenceModel("gumbel", "agegap", **GUMBEL_AGEGAP)


@pytest.fixture(scope="session")
def small_portfolio(gumbel_agegap):
    """600 couples over a 25-year window: plenty of observed deaths, fast fits."""
    cfg = GeneratorConfig(n_couples=600, window_years=25.0)
    return synthesize_portfolio(cfg, (MALE, FEMALE), gumbel_agegap, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed at the end of the run
CRITERIA = {}


def record_criterion(number, title, ok, detail=""):
    CRITERIA[number] = (title, bool(ok), detail)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" [{detail}]" if detail else "")
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA, key=str):
        title, ok, detail = CRITERIA[number]
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" [{detail}]" if detail else ""))
