"""
Ranking Pipeline Package

LangGraph workflows over dataclass state.

Components:
- PipelineState / ranking_pipeline: load -> split -> mine -> rank
- SimulationState / normality_simulation: generate -> mine -> rank -> ecdf

Usage:
    from ranker.pipeline import ranking_pipeline
    from scripts.config import load_settings

    result = ranking_pipeline.invoke({
        "input_path": "corpus.txt",
        "settings": load_settings(min_support=5),
    })
    records = result["records"]

Author: epirank
"""

from .state import PipelineState, SimulationState
from .graph import (
    normality_simulation,
    pipeline_workflow,
    ranking_pipeline,
    simulation_workflow,
)

__all__ = [
    # State
    "PipelineState",
    "SimulationState",

    # Graphs
    "ranking_pipeline",
    "normality_simulation",
    "pipeline_workflow",
    "simulation_workflow",
]
