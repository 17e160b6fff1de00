import json

import numpy as np
import pytest
import yaml

from ranker.cli import main
from scripts.episode_tools import read_episodes
from scripts.seq_tools import ProbabilityModel, read_sequence, write_probability_model

EXAMPLE = "a b c a c b c a b a b c a b\n"
HEADER = "episode_id,episode,episode_class,nodes,support,n,r,mu,sigma,score,p_value,flags"


@pytest.fixture
def example_file(tmp_path):
    path = tmp_path / "example.txt"
    path.write_text(EXAMPLE, encoding="utf-8")
    return path


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "settings.yaml"
    path.write_text(yaml.safe_dump({"min_support": 5, "max_window": 15, "max_nodes": 2, "workers": 1}), encoding="utf-8")
    return path


def test_gen_ind(tmp_path):
    out = tmp_path / "ind.txt"
    assert main(["gen-ind", "--out", str(out), "--alphabet", "5", "--length", "100", "--seed", "1"]) == 0
    table, seq = read_sequence(out)
    assert len(seq) == 100
    assert len(table) <= 5
    assert all(token.startswith("e") for token in table.tokens)


def test_gen_plant_writes_planted_episodes(tmp_path):
    out, planted = tmp_path / "plant.txt", tmp_path / "planted.txt"
    code = main([
        "gen-plant", "--out", str(out), "--planted-out", str(planted),
        "--alphabet", "50", "--length", "1000", "--patterns", "2", "--pattern-len", "3",
        "--occurrences", "10", "--gap-prob", "0", "--seed", "2",
    ])
    assert code == 0
    table, seq = read_sequence(out)
    assert len(seq) == 1000
    _, items = read_episodes(planted, table, extend=True)
    assert [len(g) for g, _ in items] == [3, 3]


def test_split(tmp_path, example_file):
    train, test = tmp_path / "train.txt", tmp_path / "test.txt"
    assert main(["split", str(example_file), "--train-out", str(train), "--test-out", str(test)]) == 0
    _, train_seq = read_sequence(train)
    _, test_seq = read_sequence(test)
    assert (len(train_seq), len(test_seq)) == (7, 7)


def test_mine(tmp_path, small_config):
    seq = tmp_path / "ab.txt"
    seq.write_text("a b " * 10, encoding="utf-8")
    out = tmp_path / "episodes.txt"
    assert main(["mine", str(seq), "--out", str(out), "--config", str(small_config)]) == 0
    table, _ = read_sequence(seq)
    _, items = read_episodes(out, table)
    assert [sup for _, sup in items] == [10, 9, 5, 5]


def test_mine_class_option(tmp_path, small_config):
    seq = tmp_path / "ab.txt"
    seq.write_text("a b " * 10, encoding="utf-8")
    out = tmp_path / "episodes.txt"
    assert main(["mine", str(seq), "-o", str(out), "-c", str(small_config), "--class", "parallel"]) == 0
    assert out.read_text(encoding="utf-8") == ""


def test_rank_with_outputs(tmp_path, example_file):
    table, _ = read_sequence(example_file)
    episodes = tmp_path / "episodes.txt"
    episodes.write_text(
        "episode 1\nnodes 0:a 1:b\nedges 0>1\nsupport 4\n\nepisode 2\nnodes 0:c\n",
        encoding="utf-8",
    )
    probabilities = tmp_path / "model.csv"
    write_probability_model(probabilities, table, ProbabilityModel(np.array([0.5, 0.25, 0.25])))
    out, dump, windows = tmp_path / "ranked.csv", tmp_path / "dump", tmp_path / "windows"

    code = main([
        "rank", str(example_file), str(example_file), str(episodes),
        "--out", str(out), "--probabilities", str(probabilities),
        "--dump-dir", str(dump), "--windows-dir", str(windows), "--workers", "1",
    ])
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 2
    assert lines[1].startswith("1,a>b,serial,2,4,5,0.225,0.214286,")

    record = json.loads((dump / "episode_00001.json").read_text(encoding="utf-8"))
    assert record["statistics"]["n"] == 5
    assert (windows / "episode_00001.csv").read_text(encoding="utf-8") == "start,end\n1,2\n4,6\n8,9\n10,11\n13,14\n"


def test_rank_to_stdout(tmp_path, example_file, capsys):
    episodes = tmp_path / "episodes.txt"
    episodes.write_text("episode 1\nnodes 0:a 1:b\nedges 0>1\n", encoding="utf-8")
    assert main(["rank", str(example_file), str(example_file), str(episodes)]) == 0
    assert capsys.readouterr().out.splitlines()[0] == HEADER


def test_inspect_writes_dot_files(tmp_path, capsys):
    out_dir = tmp_path / "dot"
    assert main(["inspect", "a>(b c)>d", "--out-dir", str(out_dir)]) == 0
    printed = capsys.readouterr().out
    assert "window" in printed and "a>(b c)>d" in printed
    for name in ("episode", "simple", "window"):
        text = (out_dir / f"episode_00001_{name}.dot").read_text(encoding="utf-8")
        assert text.startswith("digraph")
        assert "rankdir=LR;" in text


def test_run(tmp_path):
    seq = tmp_path / "ab.txt"
    seq.write_text("a b " * 20, encoding="utf-8")
    config = tmp_path / "run.yaml"
    config.write_text(yaml.safe_dump({"min_support": 5, "max_window": 15, "max_nodes": 2}), encoding="utf-8")
    out, episodes = tmp_path / "ranked.csv", tmp_path / "episodes.txt"
    assert main(["run", str(seq), "-o", str(out), "--episodes-out", str(episodes), "-c", str(config), "-j", "1"]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == HEADER
    assert {line.split(",")[1] for line in lines[1:]} == {"a>b", "b>a", "a>a", "b>b"}
    table, _ = read_sequence(seq)
    _, items = read_episodes(episodes, table)
    assert len(items) == 4


def test_simulate_normality(tmp_path):
    config = tmp_path / "sim.yaml"
    config.write_text(yaml.safe_dump({"max_window": 5, "max_nodes": 2}), encoding="utf-8")
    out = tmp_path / "ecdf.csv"
    args = [
        "simulate-normality", "-o", str(out), "-c", str(config), "-j", "1",
        "--alphabet", "5", "--train-len", "500", "--test-len", "2000", "--threshold", "20", "--seed", "3",
    ]
    assert main(args) == 0
    first = out.read_text(encoding="utf-8")
    assert first.splitlines()[0] == "p_value,cumulative"
    assert len(first.splitlines()) > 1

    assert main(args) == 0
    assert out.read_text(encoding="utf-8") == first


# =============================================================================
# EXIT CODES
# =============================================================================

def test_exit_codes(tmp_path, example_file):
    missing = tmp_path / "missing.txt"
    episodes = tmp_path / "episodes.txt"
    episodes.write_text("episode 1\nnodes 0:a 1:b\nedges 0>1\n", encoding="utf-8")
    train, test = tmp_path / "train.txt", tmp_path / "test.txt"

    assert main(["rank", str(example_file), str(example_file), str(episodes), "--rho", "2"]) == 1
    assert main(["rank", str(missing), str(example_file), str(episodes)]) == 2
    assert main(["split", str(example_file), "--train-out", str(train), "--test-out", str(test), "--fraction", "1.5"]) == 1
    assert main(["mine", str(example_file), "--no-such-option"]) == 1
    assert main(["inspect", "a b>c"]) == 2
