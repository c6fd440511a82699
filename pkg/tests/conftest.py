from fractions import Fraction
from itertools import product
from math import factorial

import numpy as np
import pytest

from batchfem.geometry import jitter_mesh, structured_simplicial_mesh


def dirichlet_integral(exponents):
    """Exact integral of prod(xi_k ** a_k) over the unit simplex."""
    num = 1
    for a in exponents:
        num *= factorial(a)
    return Fraction(num, factorial(sum(exponents) + len(exponents)))


def monomials(dim, max_degree):
    for exps in product(range(max_degree + 1), repeat=dim):
        if sum(exps) <= max_degree:
            yield exps


@pytest.fixture(scope="session")
def jittered_meshes():
    # >= 1000 elements each: 2*23^2 = 1058, 6*6^3 = 1296
    return {
        2: jitter_mesh(structured_simplicial_mesh(2, 23), 0.15, 42),
        3: jitter_mesh(structured_simplicial_mesh(3, 6), 0.15, 42),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one human-readable verdict line per acceptance check."""

    def record(criterion, passed, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
