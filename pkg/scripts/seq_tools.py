"""
Event Sequence Tools

Sequence representation and everything that produces sequences:
- Interning tokens into dense symbol ids (and rendering them back)
- Reading/writing sequence files and probability-model CSVs
- Estimating the independence model from a training sequence
- Splitting into training and testing parts
- Synthetic generators (independent uniform, planted serial patterns)

Positions are 1-based at every public interface; arrays are 0-based inside.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from scripts.episode_tools import Episode, serial
from scripts.errors import DataError, ParameterError

log = structlog.get_logger(__name__)

PathLike = Union[str, Path]

TOKENS_PER_LINE = 20
PROBABILITY_TOLERANCE = 1e-12
MAX_PLACEMENT_ATTEMPTS = 10_000


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True)
class SymbolTable:
    """Bijection between tokens and dense ids 0..|Σ|-1."""

    tokens: Tuple[str, ...]
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise DataError("symbol table has duplicate tokens")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise DataError(f"unknown token {token!r}")

    def token_of(self, symbol: int) -> str:
        return self.tokens[symbol]


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Immutable sequence of symbol ids over an alphabet of ``alphabet_size``."""

    symbols: np.ndarray
    alphabet_size: int

    def __post_init__(self):
        arr = np.asarray(self.symbols, dtype=np.int64).copy()
        if arr.ndim != 1:
            raise ParameterError("sequence must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= self.alphabet_size):
            raise DataError("symbol id outside the alphabet")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventSequence):
            return NotImplemented
        return self.alphabet_size == other.alphabet_size and np.array_equal(self.symbols, other.symbols)

    def __hash__(self) -> int:
        return hash((self.alphabet_size, self.symbols.tobytes()))

    def at(self, i: int) -> int:
        """Symbol at 1-based position ``i``."""
        if not 1 <= i <= len(self):
            raise IndexError(f"position {i} outside 1..{len(self)}")
        return int(self.symbols[i - 1])

    def window(self, i: int, j: int) -> "EventSequence":
        """The subsequence s[i, j] (1-based, inclusive); empty when j < i."""
        i = max(i, 1)
        j = min(j, len(self))
        return EventSequence(self.symbols[i - 1:max(j, i - 1)], self.alphabet_size)

    def tolist(self) -> List[int]:
        return self.symbols.tolist()


@dataclass(frozen=True, eq=False)
class ProbabilityModel:
    """Independence model: one strictly positive probability per symbol."""

    probs: np.ndarray
    smoothing: Optional[float] = None

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64).copy()
        if arr.ndim != 1 or arr.size == 0:
            raise ParameterError("probability model needs at least one symbol")
        if np.any(arr <= 0.0):
            bad = int(np.flatnonzero(arr <= 0.0)[0])
            raise DataError(f"symbol {bad} has non-positive probability")
        if abs(arr.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise DataError(f"probabilities sum to {arr.sum()!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return int(self.probs.size)

    def p(self, symbol: int) -> float:
        return float(self.probs[symbol])


# =============================================================================
# INTERNING
# =============================================================================

def intern(tokens: Sequence[str], table: Optional[SymbolTable] = None) -> Tuple[SymbolTable, EventSequence]:
    """
    Map tokens to dense ids in first-appearance order.

    Args:
        tokens: Ordered token list (non-empty).
        table: Existing table to extend; unseen tokens are appended.

    Returns:
        tuple: (SymbolTable, EventSequence).

    Raises:
        DataError: If ``tokens`` is empty.
    """
    if len(tokens) == 0:
        raise DataError("cannot intern an empty token list")

    index = dict(table.index) if table is not None else {}
    order = list(table.tokens) if table is not None else []
    ids = np.empty(len(tokens), dtype=np.int64)
    for pos, tok in enumerate(tokens):
        sym = index.get(tok)
        if sym is None:
            sym = len(order)
            index[tok] = sym
            order.append(tok)
        ids[pos] = sym

    new_table = SymbolTable(tuple(order))
    return new_table, EventSequence(ids, len(new_table))


def render(table: SymbolTable, s: EventSequence) -> List[str]:
    """Inverse of ``intern``."""
    return [table.tokens[sym] for sym in s.symbols.tolist()]


def extend_table(table: SymbolTable, tokens: Iterable[str]) -> SymbolTable:
    """Append tokens not yet in ``table``."""
    order = list(table.tokens)
    seen = set(order)
    for tok in tokens:
        if tok not in seen:
            seen.add(tok)
            order.append(tok)
    return SymbolTable(tuple(order))


def rebase(s: EventSequence, table: SymbolTable) -> EventSequence:
    """Reinterpret ``s`` over a larger table that extends its own."""
    if len(table) < s.alphabet_size:
        raise ParameterError("table is smaller than the sequence alphabet")
    return EventSequence(s.symbols, len(table))


def synthetic_table(alphabet: int) -> SymbolTable:
    """Tokens ``e0 .. e{n-1}`` for generated data."""
    return SymbolTable(tuple(f"e{i}" for i in range(alphabet)))


# =============================================================================
# FILES
# =============================================================================

def read_tokens(path: PathLike) -> List[str]:
    """
    Read a sequence file: UTF-8, whitespace-separated tokens, ``#`` comments.

    Raises:
        DataError: Unreadable file, bad encoding (with line number) or no tokens.
    """
    path = Path(path)
    tokens: List[str] = []
    line_no = 0
    try:
        with path.open("rb") as fh:
            for line_no, raw in enumerate(fh, start=1):
                stripped = raw.decode("utf-8").strip()
                if not stripped or stripped.startswith("#"):
                    continue
                tokens.extend(stripped.split())
    except UnicodeDecodeError as e:
        raise DataError(f"invalid UTF-8: {e.reason}", path=str(path), line=line_no)
    except OSError as e:
        raise DataError(f"cannot read sequence: {e.strerror}", path=str(path))

    if not tokens:
        raise DataError("sequence file has no tokens", path=str(path))
    return tokens


def read_sequence(path: PathLike, table: Optional[SymbolTable] = None) -> Tuple[SymbolTable, EventSequence]:
    """Read and intern a sequence file, optionally extending ``table``."""
    tokens = read_tokens(path)
    table, seq = intern(tokens, table)
    log.debug("seq.read", path=str(path), length=len(seq), alphabet=len(table))
    return table, seq


def write_sequence(path: PathLike, table: SymbolTable, s: EventSequence) -> None:
    tokens = render(table, s)
    lines = [
        " ".join(tokens[i:i + TOKENS_PER_LINE])
        for i in range(0, len(tokens), TOKENS_PER_LINE)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_probability_model(path: PathLike, table: SymbolTable, model: ProbabilityModel) -> None:
    frame = pd.DataFrame({"token": list(table.tokens), "probability": model.probs})
    frame.to_csv(path, index=False, float_format="%.17g")


def read_probability_model(path: PathLike, table: SymbolTable) -> ProbabilityModel:
    """
    Load a ``token,probability`` CSV for the tokens of ``table``.

    Tokens in the file but not in the table are ignored; every table token
    must be present. Probabilities are renormalised over the table when they
    sum to one within 1e-6.
    """
    try:
        frame = pd.read_csv(path, dtype={"token": str}, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read probability model: {e}", path=str(path))

    if list(frame.columns) != ["token", "probability"]:
        raise DataError("expected header 'token,probability'", path=str(path), line=1)

    lookup = {}
    for row_no, (tok, prob) in enumerate(zip(frame["token"], frame["probability"]), start=2):
        try:
            lookup[tok] = float(prob)
        except (TypeError, ValueError):
            raise DataError(f"bad probability {prob!r}", path=str(path), line=row_no)

    missing = [tok for tok in table.tokens if tok not in lookup]
    if missing:
        raise DataError(f"no probability for token {missing[0]!r}", path=str(path))

    probs = np.array([lookup[tok] for tok in table.tokens], dtype=np.float64)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise DataError(f"probabilities sum to {total!r}", path=str(path))
    return ProbabilityModel(probs / total)


# =============================================================================
# MODEL AND SPLIT
# =============================================================================

def split(s: EventSequence, fraction: float) -> Tuple[EventSequence, EventSequence]:
    """Train = s[1, floor(fraction*L)], test = the rest."""
    if not 0.0 < fraction < 1.0:
        raise ParameterError(f"split fraction must lie in (0, 1), got {fraction}")
    cut = math.floor(fraction * len(s))
    return (
        EventSequence(s.symbols[:cut], s.alphabet_size),
        EventSequence(s.symbols[cut:], s.alphabet_size),
    )


def estimate_probabilities(s: EventSequence, table: SymbolTable, smoothing: float = 1.0) -> ProbabilityModel:
    """
    p(a) = (count(a) + smoothing) / (L + smoothing * |Σ|).

    Raises:
        ParameterError: If smoothing is negative.
        DataError: If a symbol gets probability zero (named in the message).
    """
    if smoothing < 0:
        raise ParameterError(f"smoothing must be >= 0, got {smoothing}")
    if len(table) == 0:
        raise DataError("empty symbol table")
    if s.alphabet_size > len(table):
        raise ParameterError("sequence uses symbols beyond the table")

    counts = np.bincount(s.symbols, minlength=len(table)).astype(np.float64)
    if smoothing == 0:
        absent = np.flatnonzero(counts == 0)
        if absent.size:
            raise DataError(
                f"symbol {table.tokens[int(absent[0])]!r} never occurs and smoothing is 0"
            )
    probs = (counts + smoothing) / (len(s) + smoothing * len(table))
    return ProbabilityModel(probs, smoothing=smoothing)


def uniform_model(alphabet: int) -> ProbabilityModel:
    """The generating model of ``generate_independent``."""
    if alphabet < 1:
        raise ParameterError("alphabet must be >= 1")
    return ProbabilityModel(np.full(alphabet, 1.0 / alphabet))


# =============================================================================
# GENERATORS
# =============================================================================

def generate_independent(alphabet: int, length: int, seed: int) -> EventSequence:
    """I.i.d. uniform symbols, reproducible from ``seed``."""
    if alphabet < 1:
        raise ParameterError("alphabet must be >= 1")
    if length < 0:
        raise ParameterError("length must be >= 0")
    rng = np.random.default_rng(seed)
    return EventSequence(rng.integers(0, alphabet, size=length), alphabet)


def generate_planted(
    alphabet: int,
    length: int,
    n_patterns: int,
    pattern_len: int,
    occurrences: int,
    gap_prob: float,
    seed: int,
) -> Tuple[EventSequence, List[Episode]]:
    """
    Uniform background with serial patterns planted at non-overlapping anchors.

    Each occurrence is the pattern with, between consecutive events, one random
    gap symbol inserted with probability ``gap_prob``. Occurrences overwrite the
    background, so the sequence keeps ``length`` events.

    ``occurrences`` is a lower bound on a pattern's support, not its count:
    background and gap symbols may complete further windows of a pattern,
    often so on small alphabets.

    Returns:
        tuple: (sequence, planted serial episodes).

    Raises:
        ParameterError: Bad parameters or no room for the occurrences.
    """
    if alphabet < 1 or length < 0:
        raise ParameterError("alphabet must be >= 1 and length >= 0")
    if not 1 <= pattern_len <= alphabet:
        raise ParameterError("pattern_len must lie in 1..alphabet (labels are unique per pattern)")
    if not 0.0 <= gap_prob <= 1.0:
        raise ParameterError("gap_prob must lie in [0, 1]")
    if n_patterns < 0 or occurrences < 0:
        raise ParameterError("n_patterns and occurrences must be >= 0")

    rng = np.random.default_rng(seed)
    symbols = rng.integers(0, alphabet, size=length)
    patterns = [rng.choice(alphabet, size=pattern_len, replace=False) for _ in range(n_patterns)]

    blocks = []
    for pattern in patterns:
        for _ in range(occurrences):
            block = [int(pattern[0])]
            for sym in pattern[1:]:
                if rng.random() < gap_prob:
                    block.append(int(rng.integers(0, alphabet)))
                block.append(int(sym))
            blocks.append(block)

    if sum(len(b) for b in blocks) > length:
        raise ParameterError("insufficient room for the requested occurrences")

    occupied = np.zeros(length, dtype=bool)
    for block_no in rng.permutation(len(blocks)):
        block = blocks[block_no]
        span = len(block)
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            anchor = int(rng.integers(0, length - span + 1))
            if not occupied[anchor:anchor + span].any():
                break
        else:
            raise ParameterError("insufficient room for the requested occurrences")
        occupied[anchor:anchor + span] = True
        symbols[anchor:anchor + span] = block

    log.debug("seq.planted", patterns=n_patterns, occurrences=occurrences, filled=int(occupied.sum()))
    planted = [serial([int(a) for a in pattern]) for pattern in patterns]
    return EventSequence(symbols, alphabet), planted
