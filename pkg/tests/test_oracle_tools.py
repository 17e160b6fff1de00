import numpy as np
import pytest

from scripts.episode_tools import parallel, serial
from scripts.errors import ParameterError, SizeGuardError
from scripts.fsm_tools import build_minimal_window_machine
from scripts.oracle_tools import CROSS_SUMS, minimal_windows_definition, monte_carlo_statistics, pgreedy_exhaustive
from scripts.seq_tools import ProbabilityModel, intern, uniform_model
from scripts.stats_tools import compute_statistics
from tests.builders import diamond_episode, fork_episode, fork_model, panel

MOMENT_NAMES = ("p", "v", "q", "z2", "w")


# =============================================================================
# EXHAUSTIVE PGREEDY
# =============================================================================

def test_exhaustive_length_zero_is_indicator():
    mw = build_minimal_window_machine(fork_episode())
    m = mw.machine
    for x in range(len(m)):
        assert pgreedy_exhaustive(m, x, mw.omega, 0, fork_model()) == (1.0 if x in mw.omega else 0.0)


def test_exhaustive_total_probability():
    mw = build_minimal_window_machine(fork_episode())
    m = mw.machine
    assert pgreedy_exhaustive(m, mw.alpha, range(len(m)), 4, fork_model()) == pytest.approx(1.0, abs=1e-12)


def test_exhaustive_guards():
    mw = build_minimal_window_machine(serial([0, 1]))
    with pytest.raises(SizeGuardError):
        pgreedy_exhaustive(mw.machine, mw.alpha, mw.omega, 8, uniform_model(10))
    with pytest.raises(ParameterError):
        pgreedy_exhaustive(mw.machine, mw.alpha, mw.omega, -1, uniform_model(2))


# =============================================================================
# DEFINITION ORACLE
# =============================================================================

def test_definition_oracle_examples(example_one):
    _, seq, _ = example_one
    assert minimal_windows_definition(seq, serial([0, 1])) == [(1, 2), (4, 6), (8, 9), (10, 11), (13, 14)]

    _, seq = intern(list("acbadbc"))
    assert minimal_windows_definition(seq, diamond_episode()) == [(1, 5)]


# =============================================================================
# MONTE CARLO
# =============================================================================

@pytest.mark.parametrize(
    "rho, horizon, model",
    [
        (0.5, 10, ProbabilityModel(np.array([0.5, 0.5]))),
        (0.1, 20, ProbabilityModel(np.array([0.5, 0.01, 0.49]))),
        (1.0, 100, ProbabilityModel(np.array([0.5, 0.5]))),
    ],
)
def test_monte_carlo_rejects_short_horizon(rho, horizon, model):
    with pytest.raises(ParameterError):
        monte_carlo_statistics(serial([0, 1]), model, rho, horizon, trials=10, seed=0)


def test_monte_carlo_single_node():
    model = ProbabilityModel(np.array([0.5, 0.5]))
    reports = monte_carlo_statistics(parallel([0]), model, 0.5, horizon=80, trials=4000, seed=1)
    assert set(reports) == set(MOMENT_NAMES) | set(CROSS_SUMS)
    assert reports["p"].within(0.5, 4.0)
    assert reports["q"].within(0.25, 4.0)
    assert reports["v"].estimate == reports["p"].estimate
    for name in CROSS_SUMS:
        assert reports[name].estimate == 0.0
        assert reports[name].standard_error == 0.0
    assert reports["p"].trials == 4000


def test_monte_carlo_is_reproducible():
    model = ProbabilityModel(np.array([0.5, 0.5]))
    a = monte_carlo_statistics(parallel([0]), model, 0.5, horizon=80, trials=60_000, seed=3, n_jobs=1)
    b = monte_carlo_statistics(parallel([0]), model, 0.5, horizon=80, trials=60_000, seed=3, n_jobs=2)
    assert {k: r.estimate for k, r in a.items()} == {k: r.estimate for k, r in b.items()}


def test_monte_carlo_example_string_moments():
    model = ProbabilityModel(np.array([0.5, 0.25, 0.25]))
    reports = monte_carlo_statistics(serial([0, 1]), model, 0.5, horizon=200, trials=20_000, seed=11)
    assert reports["p"].within(1 / 6, 4.0)
    assert reports["q"].within(1 / 28, 4.0)


@pytest.mark.slow
@pytest.mark.parametrize("name, g, model", panel(), ids=[row[0] for row in panel()])
def test_monte_carlo_agrees_with_exact_statistics(name, g, model):
    rho = 0.5
    exact = compute_statistics(build_minimal_window_machine(g), rho, model)
    reports = monte_carlo_statistics(g, model, rho, horizon=400, trials=200_000, seed=17)
    for field in MOMENT_NAMES + tuple(CROSS_SUMS):
        assert reports[field].within(getattr(exact, field), 4.0), (name, field)
