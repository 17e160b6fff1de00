"""
Oracle Tools

Independent validators for the exact machinery, deliberately slow:
- pgreedy_exhaustive: enumerate every sequence of a given length
- minimal_windows_definition: minimal windows straight from the definition
- monte_carlo_statistics: sampled X1, Y1, Z1 and the cross-sums, located by a
  forward dynamic program over prefix node subsets (no backward machines)
"""

import itertools
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from joblib import Parallel, delayed

from scripts.episode_tools import Episode, covers_bruteforce, prefix_subsets
from scripts.errors import ParameterError, SizeGuardError
from scripts.fsm_tools import Machine
from scripts.schema import MonteCarloReport
from scripts.seq_tools import EventSequence, ProbabilityModel

log = structlog.get_logger(__name__)

EXHAUSTIVE_GUARD = 10 ** 7
SHARD_SIZE = 50_000
RHO_HORIZON_TOLERANCE = 1e-12
TAIL_TOLERANCE = 1e-9
CROSS_SUMS = {
    "f000": (0, 0, 0),
    "f110": (1, 1, 0),
    "f011": (0, 1, 1),
    "f121": (1, 2, 1),
}


# =============================================================================
# EXHAUSTIVE PGREEDY
# =============================================================================

def _walk(m: Machine, x: int, symbols: Sequence[int]) -> int:
    for a in reversed(symbols):
        parent = m.explicit[x].get(a)
        if parent is None:
            parent = m.wildcard[x]
        if parent is not None:
            x = parent
    return x


def pgreedy_exhaustive(
    m: Machine,
    x: int,
    targets: Iterable[int],
    length: int,
    model: ProbabilityModel,
) -> float:
    """
    Σ over all sequences t of ``length`` symbols of Π p(t_i) [greedy(x, t) in targets].

    Raises:
        SizeGuardError: If |Σ|^length exceeds 10^7.
    """
    if length < 0:
        raise ParameterError("length must be >= 0")
    k = len(model)
    if k ** length > EXHAUSTIVE_GUARD:
        raise SizeGuardError(f"{k}^{length} sequences exceed the enumeration guard")
    targets = frozenset(targets)
    probs = model.probs
    total = 0.0
    for t in itertools.product(range(k), repeat=length):
        if _walk(m, x, t) in targets:
            total += math.prod(float(probs[a]) for a in t)
    return total


# =============================================================================
# DEFINITION ORACLE
# =============================================================================

def minimal_windows_definition(s: EventSequence, g: Episode) -> List[Tuple[int, int]]:
    """
    All (i, j), 1-based, with s[i, j] covering g while neither s[i+1, j] nor
    s[i, j-1] does.
    """
    n = len(s)
    covers: Dict[Tuple[int, int], bool] = {}

    def cov(i: int, j: int) -> bool:
        if i > j:
            return len(g) == 0
        if (i, j) not in covers:
            covers[(i, j)] = covers_bruteforce(s.window(i, j), g)
        return covers[(i, j)]

    out = []
    for j in range(1, n + 1):
        for i in range(j, 0, -1):
            if cov(i, j):
                if not cov(i + 1, j) and not cov(i, j - 1):
                    out.append((i, j))
                break
    return out


# =============================================================================
# MONTE CARLO
# =============================================================================

def _subset_transitions(g: Episode) -> Tuple[int, List[Tuple[int, int, int]]]:
    """(index of the full node set, [(subset, subset minus a sink, label), ...])."""
    subsets = prefix_subsets(g)
    index = {h: i for i, h in enumerate(subsets)}
    children = {v: {w for u, w in g.edges if u == v} for v in range(len(g))}
    moves = []
    for h, i in index.items():
        for v in sorted(h):
            if not children[v] & h:
                moves.append((i, index[h - {v}], g.labels[v]))
    return index[frozenset(range(len(g)))], moves


def _coverage_tail(g: Episode, model: ProbabilityModel, length: int) -> float:
    """
    Upper bound on P(a random sequence of ``length`` symbols does not cover g):
    the probability that one fixed linear extension is not a subsequence.
    """
    order = list(itertools.chain.from_iterable(sorted(layer) for layer in _layers(g)))
    probs = [float(model.probs[g.labels[v]]) for v in order]
    dist = np.zeros(len(probs) + 1)
    dist[0] = 1.0
    for _ in range(length):
        moved = dist[:-1] * probs
        dist[:-1] -= moved
        dist[1:] += moved
    return float(1.0 - dist[-1])


def _layers(g: Episode) -> List[List[int]]:
    remaining = set(range(len(g)))
    out = []
    while remaining:
        layer = [v for v in remaining if not (g.parents[v] & remaining)]
        out.append(layer)
        remaining -= set(layer)
    return out


class _Moments:
    """Streaming count / mean / M2, merged by the pairwise update."""

    def __init__(self, values: Optional[np.ndarray] = None):
        if values is None:
            self.count, self.mean, self.m2 = 0, 0.0, 0.0
        else:
            self.count = int(values.size)
            self.mean = float(values.mean()) if values.size else 0.0
            self.m2 = float(((values - self.mean) ** 2).sum())

    def merge(self, other: "_Moments") -> "_Moments":
        total = self.count + other.count
        if total == 0:
            return self
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total
        return self

    @property
    def standard_error(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.count - 1)) / math.sqrt(self.count)


def _shard(
    full: int,
    n_subsets: int,
    moves: List[Tuple[int, int, int]],
    probs: np.ndarray,
    rho: float,
    horizon: int,
    trials: int,
    seed: np.random.SeedSequence,
) -> Dict[str, _Moments]:
    rng = np.random.default_rng(seed)
    never = np.iinfo(np.int64).max
    # latest[:, h]: largest minimum position over embeddings of prefix h so far, 0 if none
    latest = np.zeros((trials, n_subsets), dtype=np.int64)
    latest[:, 0] = never
    y1 = np.zeros(trials, dtype=np.int64)
    sums = {name: np.zeros(trials) for name in CROSS_SUMS}

    for t in range(1, horizon + 1):
        symbol = rng.choice(len(probs), size=trials, p=probs)
        before = latest.copy()
        for h, smaller, label in moves:
            hit = symbol == label
            if hit.any():
                candidate = np.minimum(before[hit, smaller], t)
                latest[hit, h] = np.maximum(latest[hit, h], candidate)
        grew = latest[:, full] > before[:, full]
        if not grew.any():
            continue
        start = latest[:, full]
        y1[grew & (start == 1)] = t
        inner = grew & (start > 1) & (y1 > 0) & (start <= y1)
        if inner.any():
            k = start[inner].astype(np.float64)
            a = y1[inner].astype(np.float64)
            for name, (big_p, big_q, big_r) in CROSS_SUMS.items():
                sums[name][inner] += rho ** (big_p * (k - 1) + big_q * (a - k + 1) + big_r * (t - a))

    x1 = (y1 > 0).astype(np.float64)
    length = y1.astype(np.float64)
    z1 = x1 * rho ** length
    samples = {
        "p": x1,
        "v": length,
        "q": z1,
        "z2": z1 * z1,
        "w": length * z1,
        **sums,
    }
    return {name: _Moments(values) for name, values in samples.items()}


def monte_carlo_statistics(
    g: Episode,
    model: ProbabilityModel,
    rho: float,
    horizon: int,
    trials: int,
    seed: int,
    n_jobs: int = 1,
) -> Dict[str, MonteCarloReport]:
    """
    Sampled estimates of p, q, v, w, z2 (from the window starting at 1) and
    of the cross-sums f000, f110, f011, f121, each with its standard error.

    Trials run in shards of 50 000 seeded by SeedSequence(seed).spawn, so the
    result does not depend on ``n_jobs``.

    Raises:
        ParameterError: If rho^horizon >= 1e-12 or the coverage tail at
            horizon / 2 is above 1e-9.
    """
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if rho ** horizon >= RHO_HORIZON_TOLERANCE:
        raise ParameterError(f"horizon {horizon} too short: rho^horizon = {rho ** horizon:.3g}")
    tail = _coverage_tail(g, model, horizon // 2)
    if tail >= TAIL_TOLERANCE:
        raise ParameterError(f"horizon {horizon} too short: coverage tail {tail:.3g}")

    full, moves = _subset_transitions(g)
    n_subsets = len(prefix_subsets(g))
    sizes = [SHARD_SIZE] * (trials // SHARD_SIZE)
    if trials % SHARD_SIZE:
        sizes.append(trials % SHARD_SIZE)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    shards = Parallel(n_jobs=n_jobs)(
        delayed(_shard)(full, n_subsets, moves, model.probs, rho, horizon, size, child)
        for size, child in zip(sizes, seeds)
    )
    merged: Dict[str, _Moments] = {}
    for shard in shards:
        for name, acc in shard.items():
            merged.setdefault(name, _Moments()).merge(acc)

    log.info("oracle.monte_carlo", episode_nodes=len(g), trials=trials, shards=len(sizes), horizon=horizon)
    return {
        name: MonteCarloReport(
            name=name,
            estimate=acc.mean,
            standard_error=acc.standard_error,
            trials=acc.count,
            seed=seed,
        )
        for name, acc in merged.items()
    }
