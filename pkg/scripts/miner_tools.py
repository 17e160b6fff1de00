"""
Miner Tools

Candidate generation for ranking, in two phases:
- mine_parallel: level-wise Apriori over label multisets, support being the
  number of disjoint minimal windows no longer than ``max_window``
- refine_orders: breadth-first edge addition on each frequent parallel
  episode, keeping refinements that stay frequent
followed by a closedness filter relative to the explored set.
"""

import itertools
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import structlog
from joblib import Parallel, delayed

from scripts.episode_tools import (
    CanonicalKey,
    Episode,
    classify,
    induced,
    is_strict,
    is_subepisode,
    parallel,
    render_linear,
    transitive_closure,
)
from scripts.errors import SizeGuardError, StateLimitError
from scripts.fsm_tools import DEFAULT_STATE_CAP, MachineCache, MinimalWindowMachine
from scripts.scan_tools import PositionIndex, disjoint_support, scan
from scripts.schema import MinerConfig
from scripts.seq_tools import EventSequence

log = structlog.get_logger(__name__)

Candidate = Tuple[Episode, int]


# =============================================================================
# SUPPORT
# =============================================================================

def _window_support(
    s: EventSequence,
    mw: Optional[MinimalWindowMachine],
    max_window: int,
    index: Optional[PositionIndex] = None,
) -> int:
    if mw is None:
        return 0
    return disjoint_support(scan(s, mw, max_window, index).windows)


def _machine_or_none(machines: MachineCache, g: Episode) -> Optional[MinimalWindowMachine]:
    try:
        return machines.window(g)
    except StateLimitError as e:
        log.warning("miner.state_cap", episode=render_linear(g), error=str(e))
        return None


def episode_support(
    s: EventSequence,
    g: Episode,
    max_window: int,
    index: Optional[PositionIndex] = None,
    state_cap: int = DEFAULT_STATE_CAP,
    machines: Optional[MachineCache] = None,
) -> int:
    """
    Disjoint minimal windows of ``g`` no longer than ``max_window``; 0 when
    the window machine of ``g`` exceeds the state cap.
    """
    if machines is None:
        machines = MachineCache(state_cap)
    return _window_support(s, _machine_or_none(machines, g), max_window, index)


def _supports(
    s: EventSequence,
    episodes: Sequence[Episode],
    cfg: MinerConfig,
    n_jobs: int,
    index: Optional[PositionIndex],
    machines: MachineCache,
) -> List[int]:
    # machines are built here from the shared cache; workers only scan
    mws = [_machine_or_none(machines, g) for g in episodes]
    if n_jobs == 1 or len(mws) < 2:
        return [_window_support(s, mw, cfg.max_window, index) for mw in mws]
    return Parallel(n_jobs=n_jobs)(
        delayed(_window_support)(s, mw, cfg.max_window) for mw in mws
    )


# =============================================================================
# PARALLEL PHASE
# =============================================================================

def _cooccurring_pairs(s: EventSequence, frequent: np.ndarray, cfg: MinerConfig) -> Set[Tuple[int, int]]:
    """Label pairs seen together within max_window at least min_support times."""
    seq = s.symbols
    width = s.alphabet_size
    keys = []
    for offset in range(1, min(cfg.max_window, len(seq))):
        left, right = seq[:-offset], seq[offset:]
        mask = frequent[left] & frequent[right]
        lo = np.minimum(left[mask], right[mask])
        hi = np.maximum(left[mask], right[mask])
        keys.append(lo * width + hi)
    if not keys:
        return set()
    values, counts = np.unique(np.concatenate(keys), return_counts=True)
    keep = values[counts >= cfg.min_support]
    return {(int(k // width), int(k % width)) for k in keep}


def _apriori_join(level: Iterable[Tuple[int, ...]]) -> List[Tuple[int, ...]]:
    """Sorted-multiset candidates whose every sub-multiset is in ``level``."""
    level = set(level)
    by_prefix: Dict[Tuple[int, ...], List[int]] = defaultdict(list)
    for items in level:
        by_prefix[items[:-1]].append(items[-1])

    out = []
    for prefix, lasts in by_prefix.items():
        lasts.sort()
        for i, x in enumerate(lasts):
            for y in lasts[i:]:
                candidate = prefix + (x, y)
                subs = {candidate[:j] + candidate[j + 1:] for j in range(len(candidate))}
                if subs <= level:
                    out.append(candidate)
    return sorted(out)


def mine_parallel(
    s: EventSequence,
    cfg: MinerConfig,
    n_jobs: int = 1,
    machines: Optional[MachineCache] = None,
) -> List[Candidate]:
    """
    All parallel episodes (label multisets) with at least ``min_support``
    disjoint minimal windows, up to ``max_nodes`` nodes.
    """
    if machines is None:
        machines = MachineCache(cfg.state_cap)
    index = PositionIndex(s)
    counts = np.bincount(s.symbols, minlength=s.alphabet_size)
    frequent_mask = counts >= cfg.min_support

    result: List[Candidate] = []
    level: Dict[Tuple[int, ...], int] = {
        (int(a),): int(counts[a]) for a in np.flatnonzero(frequent_mask)
    }
    result.extend((parallel(items), sup) for items, sup in sorted(level.items()))
    log.info("miner.level_done", size=1, frequent=len(level))

    size = 1
    while level and size < cfg.max_nodes:
        size += 1
        if size == 2:
            pairs = _cooccurring_pairs(s, frequent_mask, cfg)
            candidates = [c for c in _apriori_join(level) if c in pairs]
        else:
            candidates = _apriori_join(level)
        supports = _supports(s, [parallel(c) for c in candidates], cfg, n_jobs, index, machines)
        level = {c: sup for c, sup in zip(candidates, supports) if sup >= cfg.min_support}
        result.extend((parallel(items), sup) for items, sup in sorted(level.items()))
        log.info("miner.level_done", size=size, candidates=len(candidates), frequent=len(level))

    return result


# =============================================================================
# ORDER REFINEMENT
# =============================================================================

def refine_orders(
    start: Episode,
    s: EventSequence,
    cfg: MinerConfig,
    support: Optional[int] = None,
    known_frequent: Optional[Set[CanonicalKey]] = None,
    n_jobs: int = 1,
    index: Optional[PositionIndex] = None,
    machines: Optional[MachineCache] = None,
) -> List[Candidate]:
    """
    Strict, frequent refinements of ``start`` (itself included when strict).

    Each step adds one ordered pair of incomparable nodes and re-closes
    transitively. With ``known_frequent`` (keys of every frequent episode on
    fewer nodes) a refinement is only counted when all its one-node-smaller
    induced sub-episodes are frequent.

    Args:
        start: Frequent episode, usually parallel.
        s: Sequence to count on.
        cfg: Miner configuration.
        support: Support of ``start`` when already known.
        known_frequent: Optional pruning set, updated with new frequent keys.
        n_jobs: joblib workers for support counting.
        index: Position index of ``s``.
        machines: Window machines shared with other calls.
    """
    start = transitive_closure(start)
    if index is None:
        index = PositionIndex(s)
    if machines is None:
        machines = MachineCache(cfg.state_cap)
    if support is None:
        support = episode_support(s, start, cfg.max_window, index, machines=machines)
    if support < cfg.min_support:
        return []

    k = len(start)
    seen = {start.key}
    if known_frequent is not None:
        known_frequent.add(start.key)
    emitted: List[Candidate] = [(start, support)] if is_strict(start) else []
    frontier: List[Candidate] = [(start, support)]

    while frontier:
        children: List[Episode] = []
        parents: List[int] = []
        for g, sup in frontier:
            closure = g.closure_edges
            for u, v in itertools.permutations(range(k), 2):
                if (u, v) in closure or (v, u) in closure:
                    continue
                child = transitive_closure(Episode(g.labels, closure | {(u, v)}))
                if child.key in seen:
                    continue
                seen.add(child.key)
                if known_frequent is not None and k > 1 and not all(
                    induced(child, [w for w in range(k) if w != drop]).key in known_frequent
                    for drop in range(k)
                ):
                    continue
                children.append(child)
                parents.append(sup)

        supports = _supports(s, children, cfg, n_jobs, index, machines)
        frontier = []
        for child, sup, parent_sup in zip(children, supports, parents):
            if sup > parent_sup:
                log.warning(
                    "miner.support_not_monotone",
                    episode=render_linear(child), support=sup, parent_support=parent_sup,
                )
            if sup < cfg.min_support:
                continue
            frontier.append((child, sup))
            if known_frequent is not None:
                known_frequent.add(child.key)
            if is_strict(child):
                emitted.append((child, sup))

    return emitted


# =============================================================================
# CLOSEDNESS
# =============================================================================

def closedness_filter(candidates: Sequence[Candidate], max_nodes: int = 8) -> List[Candidate]:
    """
    Drop every candidate that has a super-episode with the same support in
    ``candidates``. Closedness is relative to this list only.
    """
    by_support: Dict[int, List[int]] = defaultdict(list)
    for i, (_, sup) in enumerate(candidates):
        by_support[sup].append(i)

    drop = set()
    for members in by_support.values():
        for i in members:
            small = candidates[i][0]
            for j in members:
                if i == j:
                    continue
                big = candidates[j][0]
                if len(big) < len(small):
                    continue
                if len(big) == len(small) and len(big.closure_edges) <= len(small.closure_edges):
                    continue
                try:
                    contained = is_subepisode(small, big, max_nodes=max_nodes)
                except SizeGuardError:
                    contained = False
                if contained:
                    drop.add(i)
                    break
    return [c for i, c in enumerate(candidates) if i not in drop]


# =============================================================================
# FULL MINER
# =============================================================================

def mine(s: EventSequence, cfg: MinerConfig, n_jobs: int = 1) -> List[Candidate]:
    """
    Frequent closed strict episodes: parallel phase, order refinement,
    deduplication, closedness filter, class filter; sorted by support
    (descending) then canonical key.
    """
    index = PositionIndex(s)
    machines = MachineCache(cfg.state_cap)
    parallels = sorted(mine_parallel(s, cfg, n_jobs, machines), key=lambda c: (len(c[0]), c[0].key))

    known: Set[CanonicalKey] = set()
    found: Dict[CanonicalKey, Candidate] = {}
    for g, sup in parallels:
        for child, child_sup in refine_orders(g, s, cfg, sup, known, n_jobs, index, machines):
            found.setdefault(child.key, (child, child_sup))

    closed = closedness_filter(list(found.values()))
    kept = [(g, sup) for g, sup in closed if classify(g) in cfg.episode_classes]
    kept.sort(key=lambda c: (-c[1], c[0].key))
    log.info(
        "miner.done",
        explored=len(found), closed=len(closed), emitted=len(kept), machines_built=machines.builds,
    )
    return kept
