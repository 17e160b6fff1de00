import json

import pytest

from scripts.episode_tools import (
    Episode,
    canonical_key,
    classify,
    covers_bruteforce,
    episode_from_json,
    episode_to_json,
    format_episodes,
    induced,
    is_strict,
    is_subepisode,
    parallel,
    parse_episodes,
    parse_linear,
    prefix_episodes,
    prefix_subsets,
    remove_sink,
    render_linear,
    serial,
    shape_of,
    sinks,
    transitive_closure,
)
from scripts.errors import DataError, ParameterError, SizeGuardError, StateLimitError
from scripts.schema import EpisodeClass
from scripts.seq_tools import EventSequence, SymbolTable, intern
from tests.builders import diamond_episode, fork_episode


def _seq(text: str, alphabet: int = 4) -> EventSequence:
    return EventSequence(["abcdefgh".index(ch) for ch in text.replace(" ", "")], alphabet)


def test_episode_validation():
    with pytest.raises(ParameterError):
        Episode((0, 1), frozenset({(0, 2)}))
    with pytest.raises(ParameterError):
        Episode((0, 1), frozenset({(0, 1), (1, 0)}))
    with pytest.raises(ParameterError):
        Episode((0,), frozenset({(0, 0)}))


# =============================================================================
# PREFIXES
# =============================================================================

@pytest.mark.parametrize(
    "g, count",
    [
        (diamond_episode(), 6),
        (parallel([0, 1]), 4),
        (serial([0, 1, 2]), 4),
        (fork_episode(), 5),
        (parallel([0]), 2),
    ],
)
def test_prefix_subset_counts(g, count):
    subsets = prefix_subsets(g)
    assert len(subsets) == count
    assert subsets[0] == frozenset()
    assert subsets[-1] == frozenset(range(len(g)))
    for h in subsets:
        assert all(g.parents[v] <= h for v in h)


def test_prefix_subset_cap():
    with pytest.raises(StateLimitError):
        prefix_subsets(parallel(list(range(10))), cap=100)


def test_prefix_episodes_of_diamond():
    labels = sorted(tuple(sorted(h.labels)) for h in prefix_episodes(diamond_episode()))
    assert labels == [(), (0,), (0, 1), (0, 1, 2), (0, 1, 2, 3), (0, 2)]


def test_sinks_and_removal():
    g = diamond_episode()
    assert sinks(g) == frozenset({3})
    h = remove_sink(g, 3)
    assert h.labels == (0, 1, 2)
    assert h.edges == frozenset({(0, 1), (0, 2)})
    with pytest.raises(ParameterError):
        remove_sink(g, 0)


def test_induced_renumbers():
    g = induced(diamond_episode(), [1, 3])
    assert g.labels == (1, 3)
    assert g.edges == frozenset({(0, 1)})


# =============================================================================
# PROPERTIES
# =============================================================================

@pytest.mark.parametrize(
    "g, strict",
    [
        (parallel([0, 0]), False),
        (serial([0, 0]), True),
        (parallel([0, 1]), True),
        (Episode((0, 1, 0), frozenset({(0, 1)})), False),
        (Episode((0, 1, 0), frozenset({(0, 1), (1, 2)})), True),
    ],
)
def test_is_strict(g, strict):
    assert is_strict(g) is strict


@pytest.mark.parametrize(
    "g, expected",
    [
        (parallel([0]), EpisodeClass.SERIAL),
        (serial([0, 1, 2]), EpisodeClass.SERIAL),
        (Episode((0, 1, 2), frozenset({(0, 1), (1, 2), (0, 2)})), EpisodeClass.SERIAL),
        (parallel([0, 1, 2]), EpisodeClass.PARALLEL),
        (diamond_episode(), EpisodeClass.GENERAL),
        (fork_episode(), EpisodeClass.GENERAL),
    ],
)
def test_classify(g, expected):
    assert classify(g) == expected


def test_canonical_key_ignores_numbering_and_redundant_edges():
    a = Episode((0, 1, 2), frozenset({(0, 2), (1, 2)}))
    b = Episode((2, 1, 0), frozenset({(1, 0), (2, 0)}))
    assert canonical_key(a) == canonical_key(b)

    chain = serial([0, 1, 2])
    closed = Episode((0, 1, 2), frozenset({(0, 1), (1, 2), (0, 2)}))
    assert chain.key == closed.key == transitive_closure(chain).key

    assert serial([0, 1]).key != serial([1, 0]).key
    assert parallel([0, 1]).key == parallel([1, 0]).key


def test_canonical_key_symmetric_labels():
    # two a-nodes feeding b, numbered differently
    a = Episode((0, 0, 1), frozenset({(0, 2), (1, 2)}))
    b = Episode((1, 0, 0), frozenset({(1, 0), (2, 0)}))
    assert a.key == b.key
    assert Episode((0, 0, 1), frozenset({(0, 2)})).key != a.key


def test_shape_of_shares_isomorphic_episodes():
    a_shape, a_labels = shape_of(Episode((4, 7, 9), frozenset({(0, 2), (1, 2)})))
    b_shape, b_labels = shape_of(Episode((5, 3, 1), frozenset({(1, 0), (2, 0)})))
    assert a_shape == b_shape
    assert a_shape.labels == (0, 1, 2)
    (sink,) = [v for v in range(3) if len(a_shape.parents[v]) == 2]
    assert (a_labels[sink], b_labels[sink]) == (9, 5)
    assert sorted(a for v, a in enumerate(a_labels) if v != sink) == [4, 7]
    assert sorted(b for v, b in enumerate(b_labels) if v != sink) == [1, 3]


@pytest.mark.parametrize(
    "g",
    [diamond_episode(), fork_episode(), serial([5, 2, 8]), parallel([3, 1]), Episode((6, 2, 4, 0), frozenset({(0, 1), (2, 3)}))],
)
def test_shape_of_labels_recover_episode(g):
    shape, labels = shape_of(g)
    relabelled = Episode(labels, shape.edges)
    assert relabelled.key == g.key
    assert shape.edges == shape.closure_edges


def test_shape_of_rejects_repeated_labels():
    with pytest.raises(ParameterError):
        shape_of(serial([0, 1, 0]))


def test_is_subepisode():
    g = diamond_episode()
    assert is_subepisode(serial([0, 3]), g)
    assert is_subepisode(parallel([1, 2]), g)
    assert is_subepisode(serial([0, 1, 3]), g)
    assert not is_subepisode(serial([1, 2]), g)
    assert not is_subepisode(serial([3, 0]), g)
    assert not is_subepisode(serial([0, 0]), g)
    with pytest.raises(SizeGuardError):
        is_subepisode(parallel([0]), parallel(list(range(9))))


# =============================================================================
# COVERAGE
# =============================================================================

@pytest.mark.parametrize(
    "text, g, expected",
    [
        ("acbadbc", diamond_episode(), True),
        ("acbad", diamond_episode(), True),
        ("cbad", diamond_episode(), False),
        ("ab", serial([0, 1]), True),
        ("ba", serial([0, 1]), False),
        ("ba", parallel([0, 1]), True),
        ("aa", parallel([0, 0]), True),
        ("a", parallel([0, 0]), False),
        ("bac", fork_episode(), True),
        ("acb", fork_episode(), False),
    ],
)
def test_covers_bruteforce(text, g, expected):
    assert covers_bruteforce(_seq(text), g) is expected


def test_covers_bruteforce_guard():
    with pytest.raises(SizeGuardError):
        covers_bruteforce(_seq("abc"), parallel(list(range(9))))


# =============================================================================
# TEXT AND FILE FORMATS
# =============================================================================

def test_render_and_parse_linear():
    table = SymbolTable(("a", "b", "c", "d"))
    assert render_linear(diamond_episode(), table) == "a>(b c)>d"
    assert render_linear(parallel([0, 1]), table) == "a|b"
    assert render_linear(serial([0, 1, 2]), table) == "a>b>c"

    table2, g = parse_linear("a>(b c)>d", table)
    assert table2 == table
    assert g.key == diamond_episode().key

    table3, h = parse_linear("x>a", table)
    assert table3.tokens == ("a", "b", "c", "d", "x")
    assert h.key == serial([4, 0]).key

    with pytest.raises(DataError):
        parse_linear("a b>c", table)


def test_episode_block_format():
    table = SymbolTable(("a", "b", "c", "d"))
    text = format_episodes([(diamond_episode(), 7), (serial([2, 0]), None)], table)
    assert text.startswith("episode 1\nnodes 0:a 1:b 2:c 3:d\nedges 0>1 0>2 1>3 2>3\nsupport 7\n\n")

    parsed_table, parsed = parse_episodes(text, table)
    assert parsed_table == table
    assert [(g.key, sup) for g, sup in parsed] == [(diamond_episode().key, 7), (serial([2, 0]).key, None)]


@pytest.mark.parametrize(
    "text, line",
    [
        ("episode 1\nnodes 0:a 1:z\n", 2),
        ("nodes 0:a\n", 1),
        ("episode 1\nnodes 0:a 1:b\nedges 0-1\n", 3),
        ("episode 1\nnodes 0:a\nsupport x\n", 3),
        ("episode 1\nnodes 0:a 1:b\nedges 0>1 1>0\n", 1),
    ],
)
def test_episode_block_errors_carry_line(text, line):
    table = SymbolTable(("a", "b"))
    with pytest.raises(DataError) as info:
        parse_episodes(text, table, source="eps.txt")
    assert info.value.line == line
    assert str(info.value).startswith(f"eps.txt:{line}:")


def test_episode_block_extend():
    table, parsed = parse_episodes("episode 1\nnodes 0:q 1:a\nedges 0>1\n", SymbolTable(("a",)), extend=True)
    assert table.tokens == ("a", "q")
    assert parsed[0][0].labels == (1, 0)


def test_episode_json():
    table, _ = intern(["a", "b", "c", "d"])
    text = episode_to_json(diamond_episode(), table, support=3)
    record = json.loads(text)
    assert record["labels"] == ["a", "b", "c", "d"]
    assert record["support"] == 3
    assert episode_from_json(text, table).key == diamond_episode().key
    with pytest.raises(DataError):
        episode_from_json('{"labels": ["a"]}', table)
