import math

import pytest
from scipy.special import gammaln

from fracanderson.anderson import DisorderSpec
from fracanderson.laplacian import FracLaplacianParams, kernel_table

# criterion id -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def closed_form_1d(alpha, x):
    """(-Delta)^alpha(0, x) on Z from the Gamma-function formula (independent oracle)."""
    x = abs(int(x))
    if x == 0:
        return math.exp(gammaln(2 * alpha + 1) - 2 * gammaln(alpha + 1))
    if alpha == 1.0:
        return -1.0 if x == 1 else 0.0
    mag = math.exp(gammaln(2 * alpha + 1) + gammaln(x - alpha) - gammaln(x + alpha + 1)) * math.sin(math.pi * alpha) / math.pi
    return -mag


@pytest.fixture(scope="session")
def uniform():
    return DisorderSpec.uniform(1.0)


@pytest.fixture(scope="session")
def table_1d_half():
    return kernel_table(FracLaplacianParams(1, 0.5), 200)


@pytest.fixture(scope="session")
def table_1d_one():
    return kernel_table(FracLaplacianParams(1, 1.0), 40)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
