import pytest

from branchfront import levy, reaction, semigroup

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def bm():
    return levy.standard_bm()


@pytest.fixture(scope="session")
def dyadic_rf():
    return reaction.reaction_fn(reaction.dyadic())


@pytest.fixture(scope="session")
def quarter_rf():
    """Law {0: 1/4, 2: 3/4}; extinction probability 1/3."""
    return reaction.reaction_fn(reaction.OffspringLaw(((0, 0.25), (2, 0.75))))


@pytest.fixture(scope="session")
def u0():
    return semigroup.heaviside_grid()


@pytest.fixture(scope="session")
def solved_t1(bm, dyadic_rf, u0):
    """Dyadic BBM at t=1 on the default grid, solved to gap < 0.02."""
    return semigroup.solve(bm, dyadic_rf, u0, 1.0, tol=0.02)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
