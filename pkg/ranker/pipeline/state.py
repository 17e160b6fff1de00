"""State modules for the ranking and simulation workflows."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from scripts.config import RankerSettings
from scripts.episode_tools import Episode
from scripts.schema import RankedRecord
from scripts.seq_tools import EventSequence, ProbabilityModel, SymbolTable


@dataclass
class PipelineState:
    """split -> mine -> rank over one input sequence."""

    input_path: Optional[str] = None
    settings: Optional[RankerSettings] = None
    table: Optional[SymbolTable] = None
    sequence: Optional[EventSequence] = None
    train: Optional[EventSequence] = None
    test: Optional[EventSequence] = None
    model: Optional[ProbabilityModel] = None
    episodes: List[Tuple[Episode, Optional[int]]] = field(default_factory=list)
    records: List[RankedRecord] = field(default_factory=list)


@dataclass
class SimulationState:
    """generate -> mine (train) -> rank (test) -> empirical CDF of p-values."""

    alphabet: int = 100
    train_len: int = 10_000
    test_len: int = 1_000_000
    seed: int = 0
    true_probabilities: bool = True
    settings: Optional[RankerSettings] = None
    table: Optional[SymbolTable] = None
    train: Optional[EventSequence] = None
    test: Optional[EventSequence] = None
    model: Optional[ProbabilityModel] = None
    episodes: List[Tuple[Episode, Optional[int]]] = field(default_factory=list)
    records: List[RankedRecord] = field(default_factory=list)
    p_values: List[float] = field(default_factory=list)
    ks_distance: Optional[float] = None
