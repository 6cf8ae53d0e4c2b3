import numpy as np
import pytest

import oracle
from tumorbif.field import FieldSolver
from tumorbif.model import NutrientFn
from tumorbif.radial import find_RA
from tumorbif.spectrum import build_table, catalog, find_k1

A1 = oracle.canonical_A(1)


@pytest.fixture(scope="session")
def eq1():
    """Disk state with R_A = 1 for f = id."""
    return find_RA(A1)


@pytest.fixture(scope="session")
def table64(eq1):
    return build_table(eq1, 64)


@pytest.fixture(scope="session")
def k1(table64):
    return find_k1(table64)


@pytest.fixture(scope="session")
def catalog2(table64):
    return catalog(2, 3, table64)


@pytest.fixture(scope="session")
def solver(eq1):
    return FieldSolver(eq1)


@pytest.fixture(scope="session")
def flat_f():
    """f' = 0, not admissible; only for exercising degenerate paths."""
    return NutrientFn("custom", value=lambda p: 0.0 * np.asarray(p, dtype=float),
                      derivative=lambda p: np.zeros_like(np.asarray(p, dtype=float)), name="flat")
