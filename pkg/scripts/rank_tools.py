"""
Rank Tools

Scores a batch of episodes against a test sequence:
statistics under the model, minimal windows in the test data, r, Z-score and
p-value per episode. Failures are recorded on the record, never raised, so
one pathological episode cannot stop a batch.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed, effective_n_jobs
from scipy import stats as sps

from scripts.config import RankerSettings
from scripts.episode_tools import Episode, classify, render_linear
from scripts.errors import DataError, EpirankError
from scripts.fsm_tools import MachineCache, machine_sizes
from scripts.log_utils import configure_logging
from scripts.scan_tools import PositionIndex, WindowList, observed_statistic, scan
from scripts.schema import EpisodeDiagnostics, RankedRecord, RecordFlag
from scripts.seq_tools import (
    EventSequence,
    ProbabilityModel,
    SymbolTable,
    estimate_probabilities,
    rebase,
    synthetic_table,
)
from scripts.stats_tools import compute_statistics, p_value, score

log = structlog.get_logger(__name__)

RankInput = Tuple[Episode, Optional[int]]  # (episode, training support)

CSV_FLOAT_COLUMNS = ("r", "mu", "sigma", "score", "p_value")
CHUNKS_PER_WORKER = 4


@dataclass
class EpisodeOutcome:
    record: RankedRecord
    diagnostics: Optional[EpisodeDiagnostics] = None
    windows: WindowList = field(default_factory=list)


# =============================================================================
# PER EPISODE
# =============================================================================

def rank_episode(
    episode_id: int,
    g: Episode,
    support: Optional[int],
    test: EventSequence,
    model: ProbabilityModel,
    settings: RankerSettings,
    table: Optional[SymbolTable] = None,
    index: Optional[PositionIndex] = None,
    details: bool = False,
    machines: Optional[MachineCache] = None,
) -> EpisodeOutcome:
    """Score one episode; any library error becomes the ``error`` flag."""
    text = render_linear(g, table)
    record = RankedRecord(
        episode_id=episode_id,
        episode=text,
        episode_class=classify(g),
        nodes=len(g),
        support=support,
    )
    try:
        if machines is None:
            machines = MachineCache(settings.state_cap)
        mw = machines.window(g)
        statistics = compute_statistics(mw, settings.rho, model, machines.cross(g))
        result = scan(test, mw, settings.scan_max_len, index)
    except (EpirankError, ArithmeticError, ValueError) as e:
        log.warning("rank.episode_failed", episode_id=episode_id, episode=text, error=str(e))
        record.flags = [RecordFlag.ERROR, RecordFlag.UNSCORABLE]
        return EpisodeOutcome(record)

    r, n = observed_statistic(result.windows, settings.rho)
    z = score(statistics, r, n, len(test))
    statistics = statistics.model_copy(update=dict(r=r, n=n, score=z))

    flags = []
    if z is None:
        flags.append(RecordFlag.UNSCORABLE)
    if result.truncated:
        flags.append(RecordFlag.TRUNCATED)
    if statistics.sigma_clamped:
        log.warning("rank.sigma_clamped", episode_id=episode_id, episode=text)
        flags.append(RecordFlag.SIGMA_CLAMPED)

    record.n = n
    record.r = r
    record.mu = statistics.mu
    record.sigma = math.sqrt(statistics.sigma2) if statistics.sigma2 is not None else None
    record.score = z
    record.p_value = p_value(z) if z is not None else None
    record.flags = flags

    outcome = EpisodeOutcome(record)
    if details:
        outcome.windows = result.windows
        outcome.diagnostics = EpisodeDiagnostics(
            episode_id=episode_id,
            episode=text,
            statistics=statistics,
            sizes=machine_sizes(g, settings.state_cap),
        )
    return outcome


def _rank_chunk(
    items: Sequence[Tuple[int, Episode, Optional[int]]],
    test: EventSequence,
    model: ProbabilityModel,
    settings: RankerSettings,
    table: Optional[SymbolTable],
    details: bool,
) -> List[EpisodeOutcome]:
    # worker processes start with structlog defaults (stdout)
    configure_logging(settings.log_level, settings.log_json)
    index = PositionIndex(test)
    machines = MachineCache(settings.state_cap)
    return [
        rank_episode(i, g, sup, test, model, settings, table, index, details, machines)
        for i, g, sup in items
    ]


# =============================================================================
# BATCH
# =============================================================================

def _sort_key(record: RankedRecord):
    if record.score is None:
        return (1, 0.0, record.episode_id)
    return (0, -record.score, record.episode_id)


def rank_episodes_detailed(
    train: EventSequence,
    test: EventSequence,
    episodes: Sequence[RankInput],
    settings: RankerSettings,
    model: Optional[ProbabilityModel] = None,
    table: Optional[SymbolTable] = None,
    details: bool = False,
) -> List[EpisodeOutcome]:
    """
    Rank every non-singleton episode of ``episodes`` (ids are 1-based input
    positions). The model is estimated on ``train`` unless given.

    Returns outcomes sorted by score (descending), unscorable ones last.

    Raises:
        DataError: If an episode label lies outside the symbol table.
    """
    alphabet = max(train.alphabet_size, test.alphabet_size, len(table) if table else 0)
    if table is None:
        table = synthetic_table(alphabet)
    train, test = rebase(train, table), rebase(test, table)
    if model is None:
        model = estimate_probabilities(train, table, settings.smoothing)
    if len(model) < len(table):
        raise DataError(f"probability model covers {len(model)} symbols, table has {len(table)}")

    items = []
    for i, (g, support) in enumerate(episodes, start=1):
        bad = [a for a in g.labels if a >= len(table)]
        if bad:
            raise DataError(f"episode {i} uses unknown symbol id {bad[0]}")
        if len(g) < 2:
            log.debug("rank.singleton_skipped", episode_id=i)
            continue
        items.append((i, g, support))

    n_jobs = effective_n_jobs(settings.n_jobs)
    if n_jobs == 1 or len(items) < 2:
        outcomes = _rank_chunk(items, test, model, settings, table, details)
    else:
        chunks = [list(c) for c in np.array_split(np.arange(len(items)), n_jobs * CHUNKS_PER_WORKER) if c.size]
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_rank_chunk)([items[j] for j in chunk], test, model, settings, table, details)
            for chunk in chunks
        )
        outcomes = [o for part in parts for o in part]

    outcomes.sort(key=lambda o: _sort_key(o.record))
    log.info(
        "rank.done",
        episodes=len(items),
        scorable=sum(o.record.scorable for o in outcomes),
        test_length=len(test),
    )
    return outcomes


def rank_episodes(
    train: EventSequence,
    test: EventSequence,
    episodes: Sequence[RankInput],
    settings: RankerSettings,
    model: Optional[ProbabilityModel] = None,
    table: Optional[SymbolTable] = None,
) -> List[RankedRecord]:
    """Sorted ranked records; see ``rank_episodes_detailed``."""
    return [o.record for o in rank_episodes_detailed(train, test, episodes, settings, model, table)]


# =============================================================================
# REPORTS
# =============================================================================

def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6g}"


def ranked_frame(records: Sequence[RankedRecord]) -> pd.DataFrame:
    """Records as a table, columns in declaration order, floats at 6 significant digits."""
    columns = list(RankedRecord.model_fields)
    rows = []
    for record in records:
        row = record.model_dump()
        for name in CSV_FLOAT_COLUMNS:
            row[name] = _fmt(row[name])
        row["support"] = "" if row["support"] is None else row["support"]
        row["flags"] = ";".join(row["flags"])
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def write_ranked_csv(path: Union[str, Path, IO[str]], records: Sequence[RankedRecord]) -> None:
    ranked_frame(records).to_csv(path, index=False)


def empirical_cdf(p_values: Sequence[float]) -> pd.DataFrame:
    """Sorted p-values with their cumulative proportion i / n."""
    values = np.sort(np.asarray(p_values, dtype=np.float64))
    n = values.size
    return pd.DataFrame({
        "p_value": values,
        "cumulative": np.arange(1, n + 1) / n if n else np.empty(0),
    })


def ks_distance(p_values: Sequence[float]) -> float:
    """Kolmogorov-Smirnov distance between the p-values and Uniform(0, 1)."""
    values = np.asarray(p_values, dtype=np.float64)
    if values.size == 0:
        return float("nan")
    return float(sps.kstest(values, "uniform").statistic)


def write_diagnostics(directory: Union[str, Path], diagnostics: Sequence[EpisodeDiagnostics]) -> List[Path]:
    """One ``episode_<id>.json`` per episode."""
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for diag in diagnostics:
        path = out_dir / f"episode_{diag.episode_id:05d}.json"
        path.write_text(diag.model_dump_json(indent=2), encoding="utf-8")
        written.append(path)
    return written
