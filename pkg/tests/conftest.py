import pytest

from mad.solver import SolverPool, SolverUnavailable, find_solver


def available_solver():
    try:
        return find_solver()
    except SolverUnavailable:
        return None


@pytest.fixture(scope="session")
def solver_path():
    path = available_solver()
    if path is None:
        pytest.skip("no SMT solver available (install z3 or set MAD_SOLVER)")
    return path


@pytest.fixture(scope="session")
def solver_pool(solver_path):
    with SolverPool(solver_path) as pool:
        yield pool
