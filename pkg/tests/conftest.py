import numpy as np
import pytest

from scripts.log_utils import configure_logging
from scripts.seq_tools import ProbabilityModel, SymbolTable, intern

EXAMPLE_ONE = "a b c a c b c a b a b c a b".split()


@pytest.fixture(autouse=True)
def _single_worker(monkeypatch):
    # joblib pools are exercised explicitly where a test needs them
    monkeypatch.setenv("EPIRANK_WORKERS", "1")
    configure_logging("WARNING")


@pytest.fixture
def example_one():
    """Example string over {a, b, c} with p = (1/2, 1/4, 1/4)."""
    table, seq = intern(EXAMPLE_ONE)
    model = ProbabilityModel(np.array([0.5, 0.25, 0.25]))
    return table, seq, model


@pytest.fixture
def abc_table():
    return SymbolTable(("a", "b", "c"))
