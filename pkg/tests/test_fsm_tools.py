import itertools

import numpy as np
import pytest

from scripts.episode_tools import Episode, covers_bruteforce, parallel, serial
from scripts.errors import ParameterError, StateLimitError
from scripts.fsm_tools import (
    WILDCARD,
    Machine,
    MachineCache,
    build_cross_join,
    build_episode_machine,
    build_minimal_window_machine,
    greedy,
    join,
    machine_sizes,
    simplify,
    step,
)
from scripts.scan_tools import scan
from scripts.seq_tools import EventSequence
from tests.builders import diamond_episode, fork_episode, random_episode

I = frozenset({frozenset()})
A = frozenset({frozenset({0})})
B = frozenset({frozenset({1})})
AB = frozenset({frozenset({0, 1})})
ABC = frozenset({frozenset({0, 1, 2})})


def _ids(text: str):
    return ["abcd".index(ch) for ch in text]


def _covers(symbols, g) -> bool:
    return covers_bruteforce(EventSequence(list(symbols), 4), g)


def _is_minimal_window(symbols, g) -> bool:
    return _covers(symbols, g) and not _covers(symbols[1:], g) and not _covers(symbols[:-1], g)


# =============================================================================
# EPISODE MACHINE
# =============================================================================

@pytest.mark.parametrize(
    "g, states, edges",
    [
        (diamond_episode(), 6, 6),
        (parallel([0, 1]), 4, 4),
        (serial([0, 1, 2]), 4, 3),
        (fork_episode(), 5, 6),
        (parallel([0]), 2, 1),
    ],
)
def test_episode_machine_size(g, states, edges):
    m = build_episode_machine(g)
    assert (len(m), m.n_edges) == (states, edges)
    assert m.payloads[m.source] == frozenset()
    assert [m.payloads[x] for x in m.sinks] == [frozenset(range(len(g)))]


def test_episode_machine_rejects_empty_episode():
    with pytest.raises(ParameterError):
        build_episode_machine(parallel([]))


@pytest.mark.parametrize("g", [diamond_episode(), fork_episode(), serial([0, 1, 0]), parallel([0, 1, 2])])
def test_strict_machine_is_already_simple(g):
    m = build_episode_machine(g)
    s = simplify(m)
    assert m.is_simple
    assert (len(s), s.n_edges) == (len(m), m.n_edges)


def test_simplify_merges_twin_labels():
    m = build_episode_machine(parallel([0, 0]))
    assert not m.is_simple
    s = simplify(m)
    assert s.is_simple
    assert (len(s), s.n_edges) == (3, 2)
    assert all(label == 0 for _, _, label in s.edges)


def test_step_and_greedy_on_diamond():
    m = build_episode_machine(diamond_episode())
    full = m.state_of(frozenset({0, 1, 2, 3}))
    abc = m.state_of(frozenset({0, 1, 2}))
    assert step(m, full, 3) == abc
    assert step(m, abc, 0) == abc
    assert step(m, abc, 1) == m.state_of(frozenset({0, 2}))
    assert greedy(m, full, _ids("acbadbc")) == m.source
    assert greedy(m, full, _ids("cbad")) != m.source
    assert greedy(m, full, []) == full


def test_greedy_requires_simple_machine():
    m = build_episode_machine(parallel([0, 0]))
    with pytest.raises(ParameterError):
        greedy(m, next(iter(m.sinks)), [0])


def test_greedy_matches_bruteforce_coverage():
    rng = np.random.default_rng(20)
    for _ in range(200):
        g = random_episode(rng, max_nodes=4, alphabet=3)
        m = simplify(build_episode_machine(g))
        (sink,) = m.sinks
        symbols = rng.integers(0, 3, size=int(rng.integers(0, 9))).tolist()
        assert (greedy(m, sink, symbols) == m.source) == _covers(symbols, g), (g, symbols)


def test_join_runs_in_lockstep():
    m1 = simplify(build_episode_machine(serial([0, 1])))
    m2 = simplify(build_episode_machine(parallel([0, 2])))
    (s1,) = m1.sinks
    (s2,) = m2.sinks
    joined = join(m1, m2, [(s1, s2)])
    start = joined.state_of((m1.payloads[s1], m2.payloads[s2]))

    rng = np.random.default_rng(4)
    for _ in range(100):
        symbols = rng.integers(0, 4, size=int(rng.integers(0, 7))).tolist()
        expected = (m1.payloads[greedy(m1, s1, symbols)], m2.payloads[greedy(m2, s2, symbols)])
        assert joined.payloads[greedy(joined, start, symbols)] == expected


def test_join_matches_pair_of_greedies_on_random_machines():
    rng = np.random.default_rng(31)
    for _ in range(500):
        m1 = simplify(build_episode_machine(random_episode(rng, max_nodes=3, alphabet=3)))
        m2 = simplify(build_episode_machine(random_episode(rng, max_nodes=3, alphabet=3)))
        z1, z2 = int(rng.integers(len(m1))), int(rng.integers(len(m2)))
        joined = join(m1, m2, [(z1, z2)])
        start = joined.state_of((m1.payloads[z1], m2.payloads[z2]))
        symbols = rng.integers(0, 4, size=int(rng.integers(0, 8))).tolist()
        expected = (m1.payloads[greedy(m1, z1, symbols)], m2.payloads[greedy(m2, z2, symbols)])
        assert joined.payloads[greedy(joined, start, symbols)] == expected, (m1.edges, m2.edges, symbols)


# =============================================================================
# MINIMAL WINDOW MACHINE
# =============================================================================

def test_fork_window_machine_states():
    mw = build_minimal_window_machine(fork_episode())
    m = mw.machine
    assert len(m) == 10
    assert m.source == mw.psi == 0
    assert m.payloads[mw.alpha] == (ABC, "T")
    assert {m.payloads[x] for x in mw.omega} == {(I, ABC), (I, A), (I, B)}
    assert {m.payloads[x] for x in mw.theta} == {(AB, ABC), (B, ABC), (A, ABC), (B, AB), (A, AB)}
    assert m.is_simple


def test_single_node_window_machine():
    mw = build_minimal_window_machine(parallel([0]))
    assert len(mw.machine) == 3
    assert len(mw.omega) == 1
    assert mw.theta == frozenset()
    (omega,) = mw.omega
    assert mw.machine.transitions(omega) == [(WILDCARD, mw.psi)]
    assert build_cross_join(mw) is None


def test_psi_absorbs():
    mw = build_minimal_window_machine(fork_episode())
    assert greedy(mw.machine, mw.psi, _ids("abcabc")) == mw.psi


@pytest.mark.parametrize(
    "g",
    [serial([0, 1]), parallel([0, 1]), fork_episode(), serial([0, 0]), parallel([0, 0]), serial([0, 1, 2])],
)
def test_window_machine_recognises_exactly_minimal_windows(g):
    mw = build_minimal_window_machine(g)
    for n in range(1, 7):
        for symbols in itertools.product(range(3), repeat=n):
            symbols = list(symbols)
            landed = greedy(mw.machine, mw.alpha, symbols) in mw.omega
            assert landed == _is_minimal_window(symbols, g), symbols


@pytest.mark.parametrize("text, minimal", [("ab", True), ("acccb", True), ("aacb", False), ("acbb", False), ("ba", False)])
def test_serial_window_with_filler(text, minimal):
    mw = build_minimal_window_machine(serial([0, 1]))
    assert (greedy(mw.machine, mw.alpha, _ids(text)) in mw.omega) is minimal


def test_cross_join_seeds():
    mw = build_minimal_window_machine(fork_episode())
    cross = build_cross_join(mw)
    assert cross is not None
    for theta in mw.theta:
        assert (theta, mw.alpha) in cross.index
    assert all(mw.psi not in pair for pair in cross.index)
    assert cross.machine.payloads[cross.machine.source] == "psi"


def test_state_cap():
    with pytest.raises(StateLimitError):
        build_minimal_window_machine(fork_episode(), state_cap=3)
    with pytest.raises(StateLimitError):
        build_episode_machine(parallel(list(range(8))), state_cap=50)


def test_machine_sizes_of_fork():
    sizes = machine_sizes(fork_episode())
    assert (sizes.episode_states, sizes.episode_edges) == (5, 6)
    assert (sizes.simple_states, sizes.simple_edges) == (5, 6)
    assert sizes.window_states == 10
    assert sizes.cross_states > 0


# =============================================================================
# SHARED MACHINES
# =============================================================================

def test_machine_cache_builds_once_per_shape():
    cache = MachineCache()
    episodes = [
        fork_episode(),
        Episode((7, 3, 5), frozenset({(1, 0), (2, 0)})),
        Episode((9, 8, 6), frozenset({(0, 2), (1, 2)})),
    ]
    for g in episodes:
        mw = cache.window(g)
        fresh = build_minimal_window_machine(g)
        assert mw.episode is g
        assert len(mw.machine) == len(fresh.machine)
        assert sorted(a for _, _, a in mw.machine.edges) == sorted(a for _, _, a in fresh.machine.edges)
    assert cache.builds == 1
    assert len(cache) == 1


def test_machine_cache_windows_match_fresh_machines():
    rng = np.random.default_rng(12)
    cache = MachineCache()
    for _ in range(150):
        g = random_episode(rng, max_nodes=4, alphabet=5)
        seq = EventSequence(rng.integers(0, 6, size=40), 6)
        expected = scan(seq, build_minimal_window_machine(g), 40).windows
        assert scan(seq, cache.window(g), 40).windows == expected, (g, seq.tolist())
    assert cache.builds == len(cache)


def test_machine_cache_remembers_state_cap_failures():
    cache = MachineCache(state_cap=3)
    for _ in range(2):
        with pytest.raises(StateLimitError, match="exceeds the state cap"):
            cache.window(fork_episode())
        with pytest.raises(StateLimitError):
            cache.cross(fork_episode())
    assert (cache.builds, len(cache)) == (0, 1)


def test_machine_cache_cross_join_follows_window():
    cache = MachineCache()
    assert cache.cross(parallel([4])) is None
    g = Episode((4, 2, 3), frozenset({(1, 0), (2, 0)}))
    cross = cache.cross(g)
    fresh = build_cross_join(build_minimal_window_machine(g))
    assert len(cross.machine) == len(fresh.machine)
    assert sorted(a for _, _, a in cross.machine.edges) == sorted(a for _, _, a in fresh.machine.edges)


def test_relabelled_matches_rebuilt_machine():
    m = build_minimal_window_machine(fork_episode()).machine
    fast = m.relabelled((7, 3, 5))
    rebuilt = Machine(m.payloads, fast.edges, m.source, m.sinks)
    assert fast.explicit == rebuilt.explicit
    assert fast.incoming == rebuilt.incoming
    assert (fast.wildcard, fast.order, fast.is_simple) == (rebuilt.wildcard, rebuilt.order, rebuilt.is_simple)
    assert {a for _, _, a in fast.edges} == {7, 3, 5, WILDCARD}
