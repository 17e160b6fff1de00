"""
Scan Tools

Minimal windows of an episode in a concrete sequence, the observed average
window weight r, and the disjoint-window support used by the miner.

The scanner walks greedy on MW(G) backwards from every end position at once
(numpy over the surviving walks); a walk stops when it lands in Ω (window
found), in ψ (no window ends here) or when it exceeds ``max_len``.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from scripts.errors import ParameterError
from scripts.fsm_tools import MinimalWindowMachine
from scripts.seq_tools import EventSequence

log = structlog.get_logger(__name__)

Window = Tuple[int, int]  # (start, end), 1-based inclusive
WindowList = List[Window]


@dataclass(frozen=True)
class ScanResult:
    windows: WindowList
    truncated: int  # walks cut off by max_len


class PositionIndex:
    """0-based positions of every symbol, built once per sequence."""

    def __init__(self, s: EventSequence):
        self.order = np.argsort(s.symbols, kind="stable")
        self.bounds = np.searchsorted(s.symbols[self.order], np.arange(s.alphabet_size + 1))

    def of(self, symbol: int) -> np.ndarray:
        if symbol + 1 >= len(self.bounds):
            return np.empty(0, dtype=np.int64)
        return self.order[self.bounds[symbol]:self.bounds[symbol + 1]]


def scan(
    s: EventSequence,
    mw: MinimalWindowMachine,
    max_len: int,
    index: Optional[PositionIndex] = None,
) -> ScanResult:
    """Minimal windows of length <= max_len plus the truncated-walk count."""
    if max_len < 1:
        raise ParameterError("max_len must be >= 1")
    m = mw.machine
    seq = s.symbols
    n_states = len(m)

    labels = sorted({a for x in range(n_states) for a in m.explicit[x] if a < s.alphabet_size})
    other = len(labels)
    class_of = np.full(s.alphabet_size, other, dtype=np.int64)
    class_of[np.asarray(labels, dtype=np.int64)] = np.arange(other)

    table = np.empty((n_states, other + 1), dtype=np.int64)
    for x in range(n_states):
        wild = m.wildcard[x]
        table[x, :] = x if wild is None else wild
        for col, a in enumerate(labels):
            parent = m.explicit[x].get(a)
            if parent is not None:
                table[x, col] = parent
    in_omega = np.zeros(n_states, dtype=bool)
    in_omega[np.asarray(sorted(mw.omega), dtype=np.int64)] = True

    if m.wildcard[mw.alpha] not in (None, mw.psi):
        ends = np.arange(len(s), dtype=np.int64)
    else:
        if index is None:
            index = PositionIndex(s)
        entry = [a for a, parent in m.explicit[mw.alpha].items() if parent != mw.psi and a < s.alphabet_size]
        parts = [index.of(a) for a in entry]
        ends = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)

    state = np.full(ends.size, mw.alpha, dtype=np.int64)
    found_start, found_end = [], []
    for offset in range(max_len):
        if ends.size == 0:
            break
        pos = ends - offset
        state = table[state, class_of[seq[pos]]]
        hit = in_omega[state]
        if hit.any():
            found_start.append(pos[hit])
            found_end.append(ends[hit])
        keep = ~hit & (state != mw.psi) & (pos > 0)
        ends, state = ends[keep], state[keep]

    truncated = int(ends.size)
    if found_end:
        starts = np.concatenate(found_start)
        stops = np.concatenate(found_end)
        order = np.argsort(stops, kind="stable")
        windows = list(zip((starts[order] + 1).tolist(), (stops[order] + 1).tolist()))
    else:
        windows = []
    if truncated:
        log.debug("scan.truncated", walks=truncated, max_len=max_len)
    return ScanResult(windows, truncated)


def minimal_windows(s: EventSequence, mw: MinimalWindowMachine, max_len: int) -> WindowList:
    """All minimal windows of length <= max_len, sorted by end."""
    return scan(s, mw, max_len).windows


def observed_statistic(windows: Sequence[Window], rho: float) -> Tuple[Optional[float], int]:
    """(r, n): mean of rho^length over the windows, and their count; r is None when n = 0."""
    n = len(windows)
    if n == 0:
        return None, 0
    lengths = np.array([end - start + 1 for start, end in windows], dtype=np.float64)
    return float(np.mean(rho ** lengths)), n


def disjoint_support(windows: Sequence[Window]) -> int:
    """Maximum number of pairwise non-overlapping windows (earliest end first)."""
    count = 0
    last_end = 0
    for start, end in sorted(windows, key=lambda w: w[1]):
        if start > last_end:
            count += 1
            last_end = end
    return count


def write_windows_csv(path: Union[str, Path], windows: Sequence[Window]) -> None:
    frame = pd.DataFrame(list(windows), columns=["start", "end"])
    frame.to_csv(path, index=False)
