"""Workflow graphs: the split/mine/rank pipeline and the normality simulation."""

from typing import Any, Dict, Union

import numpy as np
import structlog
from langgraph.graph import StateGraph

from ranker.pipeline.state import PipelineState, SimulationState
from scripts.config import RankerSettings
from scripts.errors import ParameterError
from scripts.miner_tools import mine
from scripts.rank_tools import ks_distance, rank_episodes
from scripts.seq_tools import (
    generate_independent,
    read_sequence,
    split,
    synthetic_table,
    uniform_model,
)

log = structlog.get_logger(__name__)

AnyState = Union[PipelineState, SimulationState]


def _settings(state: AnyState) -> RankerSettings:
    return state.settings if state.settings is not None else RankerSettings()


def load_node(state: PipelineState) -> Dict[str, Any]:
    """Read the input sequence unless one was handed in."""
    if state.sequence is not None:
        return {"settings": _settings(state)}
    if state.input_path is None:
        raise ParameterError("pipeline needs input_path or sequence")
    table, sequence = read_sequence(state.input_path)
    return {"settings": _settings(state), "table": table, "sequence": sequence}


def split_node(state: PipelineState) -> Dict[str, Any]:
    train, test = split(state.sequence, state.settings.split_fraction)
    log.info("pipeline.split", train=len(train), test=len(test))
    return {"train": train, "test": test}


def generate_node(state: SimulationState) -> Dict[str, Any]:
    """Independent uniform train and test sequences from one root seed."""
    train_seed, test_seed = np.random.SeedSequence(state.seed).spawn(2)
    train = generate_independent(state.alphabet, state.train_len, int(train_seed.generate_state(1)[0]))
    test = generate_independent(state.alphabet, state.test_len, int(test_seed.generate_state(1)[0]))
    model = uniform_model(state.alphabet) if state.true_probabilities else None
    return {
        "settings": _settings(state),
        "table": synthetic_table(state.alphabet),
        "train": train,
        "test": test,
        "model": model,
    }


def mine_node(state: AnyState) -> Dict[str, Any]:
    settings = state.settings
    episodes = mine(state.train, settings.miner_config(), n_jobs=settings.n_jobs)
    return {"episodes": episodes}


def rank_node(state: AnyState) -> Dict[str, Any]:
    records = rank_episodes(
        state.train, state.test, state.episodes, state.settings,
        model=state.model, table=state.table,
    )
    return {"records": records}


def ecdf_node(state: SimulationState) -> Dict[str, Any]:
    p_values = sorted(r.p_value for r in state.records if r.p_value is not None)
    distance = ks_distance(p_values) if p_values else None
    log.info("simulation.done", scored=len(p_values), ks_distance=distance)
    return {"p_values": p_values, "ks_distance": distance}


# Ranking pipeline
pipeline_workflow = StateGraph(PipelineState)
pipeline_workflow.add_node("load", load_node)
pipeline_workflow.add_node("split", split_node)
pipeline_workflow.add_node("mine", mine_node)
pipeline_workflow.add_node("rank", rank_node)
pipeline_workflow.add_edge("__start__", "load")
pipeline_workflow.add_edge("load", "split")
pipeline_workflow.add_edge("split", "mine")
pipeline_workflow.add_edge("mine", "rank")
pipeline_workflow.add_edge("rank", "__end__")

ranking_pipeline = pipeline_workflow.compile()
ranking_pipeline.name = "Episode Ranking Pipeline"

# Normality simulation
simulation_workflow = StateGraph(SimulationState)
simulation_workflow.add_node("generate", generate_node)
simulation_workflow.add_node("mine", mine_node)
simulation_workflow.add_node("rank", rank_node)
simulation_workflow.add_node("ecdf", ecdf_node)
simulation_workflow.add_edge("__start__", "generate")
simulation_workflow.add_edge("generate", "mine")
simulation_workflow.add_edge("mine", "rank")
simulation_workflow.add_edge("rank", "ecdf")
simulation_workflow.add_edge("ecdf", "__end__")

normality_simulation = simulation_workflow.compile()
normality_simulation.name = "Normality Simulation"
