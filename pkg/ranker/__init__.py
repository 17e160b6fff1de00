"""
epirank Runnable Package

Workflows and the command line on top of the ``scripts`` library.

Available entry points:
- ranking_pipeline: split -> mine -> rank over one sequence
- normality_simulation: independent data -> mine -> rank -> p-value CDF
- main: the ``epirank`` command line (``python -m ranker``)

Usage:
    from ranker import ranking_pipeline
    from ranker.cli import main

    main(["mine", "train.txt", "--out", "episodes.txt"])

Author: epirank
"""

__all__ = [
    # Workflows
    "ranking_pipeline",
    "normality_simulation",

    # Command line
    "main",
]


def __getattr__(name):
    """Lazy load graphs and the CLI to keep ``import ranker`` cheap."""
    if name == "ranking_pipeline":
        from .pipeline import ranking_pipeline
        return ranking_pipeline
    elif name == "normality_simulation":
        from .pipeline import normality_simulation
        return normality_simulation
    elif name == "main":
        from .cli import main
        return main
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
