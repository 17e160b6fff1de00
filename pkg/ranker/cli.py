"""
Command-line interface.

Commands: split, mine, rank, gen-ind, gen-plant, simulate-normality,
inspect, run. Exit codes: 0 success, 1 usage or parameter error, 2 data or
other library error.
"""

import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click
import structlog
import typer
from dotenv import load_dotenv
from tabulate import tabulate

from scripts.config import RankerSettings, load_settings
from scripts.dot_utils import write_dot
from scripts.episode_tools import format_episodes, parse_linear, read_episodes, render_linear, write_episodes
from scripts.errors import EpirankError, ParameterError
from scripts.fsm_tools import build_cross_join, build_episode_machine, build_minimal_window_machine
from scripts.log_utils import configure_logging
from scripts.miner_tools import mine
from scripts.rank_tools import empirical_cdf, rank_episodes_detailed, write_diagnostics, write_ranked_csv
from scripts.scan_tools import write_windows_csv
from scripts.schema import EpisodeClass
from scripts.seq_tools import (
    SymbolTable,
    generate_independent,
    generate_planted,
    read_probability_model,
    read_sequence,
    split,
    synthetic_table,
    write_sequence,
)

log = structlog.get_logger(__name__)

app = typer.Typer(
    name="epirank",
    help="Mine episodes from event sequences and rank them by window compactness.",
    add_completion=False,
    no_args_is_help=True,
)

ConfigOption = typer.Option(None, "--config", "-c", help="YAML settings file")
WorkersOption = typer.Option(None, "--workers", "-j", min=1, help="Parallel workers (default: all CPUs)")


def _settings(config: Optional[Path], **overrides) -> RankerSettings:
    settings = load_settings(config, **overrides)
    configure_logging(settings.log_level, settings.log_json)
    return settings


def _open_out(path: Optional[Path]):
    return sys.stdout if path is None or str(path) == "-" else path


@app.callback()
def _startup(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR"),
    log_json: bool = typer.Option(False, "--log-json", help="JSON log lines on stderr"),
):
    load_dotenv()
    settings = load_settings(log_level=log_level, log_json=log_json or None)
    configure_logging(settings.log_level, settings.log_json)


# =============================================================================
# DATA COMMANDS
# =============================================================================

@app.command("split")
def split_command(
    input: Path = typer.Argument(..., help="Sequence file"),
    train_out: Path = typer.Option(..., "--train-out", help="Training half"),
    test_out: Path = typer.Option(..., "--test-out", help="Test half"),
    fraction: Optional[float] = typer.Option(None, "--fraction", help="Training share (default 0.5)"),
    config: Optional[Path] = ConfigOption,
):
    """Split a sequence into train = s[1, floor(fraction L)] and test = the rest."""
    settings = _settings(config, split_fraction=fraction)
    table, seq = read_sequence(input)
    train, test = split(seq, settings.split_fraction)
    write_sequence(train_out, table, train)
    write_sequence(test_out, table, test)
    log.info("cli.split", train=len(train), test=len(test))


@app.command("gen-ind")
def gen_ind_command(
    out: Path = typer.Option(..., "--out", "-o", help="Sequence file to write"),
    alphabet: int = typer.Option(1000, "--alphabet", min=1),
    length: int = typer.Option(40_000, "--length", min=0),
    seed: int = typer.Option(0, "--seed"),
):
    """Independent uniform events (the Ind configuration by default)."""
    seq = generate_independent(alphabet, length, seed)
    write_sequence(out, synthetic_table(alphabet), seq)


@app.command("gen-plant")
def gen_plant_command(
    out: Path = typer.Option(..., "--out", "-o", help="Sequence file to write"),
    planted_out: Optional[Path] = typer.Option(None, "--planted-out", help="Episode file of the planted patterns"),
    alphabet: int = typer.Option(1000, "--alphabet", min=1),
    length: int = typer.Option(40_000, "--length", min=0),
    patterns: int = typer.Option(5, "--patterns", min=0),
    pattern_len: int = typer.Option(5, "--pattern-len", min=1),
    occurrences: int = typer.Option(100, "--occurrences", min=0),
    gap_prob: float = typer.Option(0.1, "--gap-prob", min=0.0, max=1.0),
    seed: int = typer.Option(0, "--seed"),
):
    """Uniform background with planted serial patterns (the Plant configuration by default)."""
    seq, planted = generate_planted(alphabet, length, patterns, pattern_len, occurrences, gap_prob, seed)
    table = synthetic_table(alphabet)
    write_sequence(out, table, seq)
    if planted_out is not None:
        write_episodes(planted_out, [(g, None) for g in planted], table)


# =============================================================================
# MINING AND RANKING
# =============================================================================

@app.command("mine")
def mine_command(
    input: Path = typer.Argument(..., help="Training sequence file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Episode file (default stdout)"),
    min_support: Optional[int] = typer.Option(None, "--min-support", help="Disjoint minimal windows required"),
    max_window: Optional[int] = typer.Option(None, "--max-window", help="Longest window counted"),
    max_nodes: Optional[int] = typer.Option(None, "--max-nodes", help="Largest episode"),
    classes: Optional[List[EpisodeClass]] = typer.Option(None, "--class", help="Episode classes to keep (repeatable)"),
    config: Optional[Path] = ConfigOption,
    workers: Optional[int] = WorkersOption,
):
    """Frequent closed strict episodes of a sequence, with their supports."""
    settings = _settings(
        config,
        min_support=min_support,
        max_window=max_window,
        max_nodes=max_nodes,
        episode_classes=set(classes) if classes else None,
        workers=workers,
    )
    table, seq = read_sequence(input)
    episodes = mine(seq, settings.miner_config(), n_jobs=settings.n_jobs)
    if out is None:
        sys.stdout.write(format_episodes(episodes, table))
    else:
        write_episodes(out, episodes, table)
    log.info("cli.mine", episodes=len(episodes))


@app.command("rank")
def rank_command(
    train: Path = typer.Argument(..., help="Training sequence file"),
    test: Path = typer.Argument(..., help="Test sequence file"),
    episodes: Path = typer.Argument(..., help="Episode file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Ranked CSV (default stdout)"),
    rho: Optional[float] = typer.Option(None, "--rho", help="Window weight decay (default 0.5)"),
    probabilities: Optional[Path] = typer.Option(None, "--probabilities", help="token,probability CSV instead of estimating"),
    dump_dir: Optional[Path] = typer.Option(None, "--dump-dir", help="Per-episode diagnostics JSON"),
    windows_dir: Optional[Path] = typer.Option(None, "--windows-dir", help="Per-episode window CSVs"),
    config: Optional[Path] = ConfigOption,
    workers: Optional[int] = WorkersOption,
):
    """Score episodes on the test sequence against the model estimated on the training one."""
    settings = _settings(config, rho=rho, workers=workers)
    table, train_seq = read_sequence(train)
    table, test_seq = read_sequence(test, table)
    _, items = read_episodes(episodes, table)
    model = read_probability_model(probabilities, table) if probabilities is not None else None

    details = dump_dir is not None or windows_dir is not None
    outcomes = rank_episodes_detailed(train_seq, test_seq, items, settings, model, table, details=details)
    write_ranked_csv(_open_out(out), [o.record for o in outcomes])

    if dump_dir is not None:
        write_diagnostics(dump_dir, [o.diagnostics for o in outcomes if o.diagnostics is not None])
    if windows_dir is not None:
        windows_dir.mkdir(parents=True, exist_ok=True)
        for o in outcomes:
            if o.diagnostics is not None:
                write_windows_csv(windows_dir / f"episode_{o.record.episode_id:05d}.csv", o.windows)


@app.command("run")
def run_command(
    input: Path = typer.Argument(..., help="Sequence file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Ranked CSV (default stdout)"),
    episodes_out: Optional[Path] = typer.Option(None, "--episodes-out", help="Also write the mined episodes"),
    config: Optional[Path] = ConfigOption,
    workers: Optional[int] = WorkersOption,
):
    """split -> mine (train) -> rank (test) in one go."""
    from ranker.pipeline import ranking_pipeline

    settings = _settings(config, workers=workers)
    result = ranking_pipeline.invoke({"input_path": str(input), "settings": settings})
    write_ranked_csv(_open_out(out), result["records"])
    if episodes_out is not None:
        write_episodes(episodes_out, result["episodes"], result["table"])


@app.command("simulate-normality")
def simulate_normality_command(
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="CSV of p_value,cumulative (default stdout)"),
    alphabet: int = typer.Option(100, "--alphabet", min=1),
    train_len: int = typer.Option(10_000, "--train-len", min=1),
    test_len: int = typer.Option(1_000_000, "--test-len", min=1),
    threshold: int = typer.Option(12, "--threshold", min=1, help="Mining support threshold"),
    rho: Optional[float] = typer.Option(None, "--rho"),
    seed: int = typer.Option(0, "--seed"),
    true_probabilities: bool = typer.Option(
        True, "--true-probabilities/--estimated",
        help="Score with the generating uniform model or with probabilities estimated on train",
    ),
    config: Optional[Path] = ConfigOption,
    workers: Optional[int] = WorkersOption,
):
    """Empirical CDF of Phi(-score) for episodes mined from independent data."""
    from ranker.pipeline import normality_simulation

    settings = _settings(config, rho=rho, min_support=threshold, workers=workers)
    result = normality_simulation.invoke({
        "alphabet": alphabet,
        "train_len": train_len,
        "test_len": test_len,
        "seed": seed,
        "true_probabilities": true_probabilities,
        "settings": settings,
    })
    empirical_cdf(result["p_values"]).to_csv(_open_out(out), index=False, float_format="%.6g")
    log.info("cli.simulate_normality", scored=len(result["p_values"]), ks_distance=result["ks_distance"])


# =============================================================================
# INSPECTION
# =============================================================================

@app.command("inspect")
def inspect_command(
    episode: str = typer.Argument(..., help="Episode file, or linear text such as 'a>(b c)>d'"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir", help="Write DOT renderings here"),
    config: Optional[Path] = ConfigOption,
):
    """Machine sizes for each episode, optionally with DOT files."""
    settings = _settings(config)
    table = SymbolTable(())
    path = Path(episode)
    if path.is_file():
        table, items = read_episodes(path, table, extend=True)
        episodes = [g for g, _ in items]
    else:
        table, g = parse_linear(episode, table)
        episodes = [g]

    rows = []
    for number, g in enumerate(episodes, start=1):
        em = build_episode_machine(g, settings.state_cap)
        mw = build_minimal_window_machine(g, settings.state_cap)
        cross = build_cross_join(mw, settings.state_cap)
        machines = [("episode", em), ("simple", mw.simple), ("window", mw.machine)]
        if cross is not None:
            machines.append(("cross", cross.machine))
        text = render_linear(g, table)
        for name, m in machines:
            rows.append([number, text, name, len(m), m.n_edges])
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            for name, m in machines:
                write_dot(out_dir / f"episode_{number:05d}_{name}.dot", m, table, name=f"{name} {text}")

    typer.echo(tabulate(rows, headers=["id", "episode", "machine", "states", "edges"]))


# =============================================================================
# ENTRY POINT
# =============================================================================

def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    command = typer.main.get_command(app)
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        command.main(args=args, prog_name="epirank", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 1
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        return 1
    except ParameterError as e:
        log.error("cli.parameter_error", error=str(e))
        return 1
    except EpirankError as e:
        log.error("cli.data_error", error=str(e))
        return 2
    return 0
