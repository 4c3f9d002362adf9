"""Access to the bundled example graph.

The package ships one worked decomposition: a 24-node graph with a mission,
nine functions, fourteen directives, one refinement chain and three shared
directives.  It doubles as documentation of the file format and as the
reference input for the regression suite.
"""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path

from .graph import FDGraph, parse_graph


def fig2_text() -> str:
    return files("capslice").joinpath("data/fig2.json").read_text(encoding="utf-8")


def fig2_path() -> Path:
    """Filesystem path of the bundled graph (for CLI experimentation)."""
    return Path(str(files("capslice").joinpath("data/fig2.json")))


def load_fig2() -> FDGraph:
    return parse_graph(fig2_text())
