import numpy as np
import pytest

from floquet_spec.operator_model import (FourierCoefficient, PerturbationTerm, free_operator,
                                         hill_operator, normalize)

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str):
    """Register an acceptance outcome and print its line."""
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def free():
    return normalize(free_operator(2, -1.0))[0]


@pytest.fixture(scope="session")
def hill():
    return normalize(hill_operator([FourierCoefficient(-1, 1.0), FourierCoefficient(1, 1.0)]))[0]


@pytest.fixture(scope="session")
def poschl_teller():
    return normalize(free_operator(2, -1.0, [PerturbationTerm(0, "sech_sq", -2.0)]))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
