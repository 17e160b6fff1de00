"""Shared episode and model builders for the tests."""

from fractions import Fraction

import numpy as np

from scripts.episode_tools import Episode, serial
from scripts.seq_tools import ProbabilityModel


def fork_episode() -> Episode:
    """{a, b} -> c over labels a=0, b=1, c=2."""
    return Episode((0, 1, 2), frozenset({(0, 2), (1, 2)}))


def diamond_episode() -> Episode:
    """a -> {b, c} -> d over labels a=0, b=1, c=2, d=3."""
    return Episode((0, 1, 2, 3), frozenset({(0, 1), (0, 2), (1, 3), (2, 3)}))


def fork_model() -> ProbabilityModel:
    return ProbabilityModel(np.array([0.3, 0.2, 0.5]))


def panel():
    """(name, episode, model) used by the oracle cross-checks."""
    return [
        ("serial", serial([0, 1, 2]), ProbabilityModel(np.array([0.4, 0.35, 0.25]))),
        ("parallel", Episode((0, 1)), ProbabilityModel(np.array([0.3, 0.3, 0.4]))),
        ("diamond", diamond_episode(), ProbabilityModel(np.array([0.3, 0.25, 0.25, 0.2]))),
        ("fork", fork_episode(), fork_model()),
        ("binary_serial", serial([0, 1]), ProbabilityModel(np.array([0.5, 0.5]))),
    ]


def random_episode(rng: np.random.Generator, max_nodes: int, alphabet: int, edge_prob: float = 0.4) -> Episode:
    k = int(rng.integers(1, max_nodes + 1))
    labels = tuple(int(a) for a in rng.integers(0, alphabet, size=k))
    edges = frozenset((u, v) for u in range(k) for v in range(u + 1, k) if rng.random() < edge_prob)
    return Episode(labels, edges)


def frac(x: str) -> float:
    return float(Fraction(x))
