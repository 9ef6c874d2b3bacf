import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def random_chol(rng, J):
    A = rng.standard_normal((J, J))
    return np.linalg.cholesky(A @ A.T + J * np.eye(J))


# one status line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
