"""
GraphViz rendering of machines.

Deterministic: nodes in id order, edges in (parent, child, label) order.
One line per node and one line per edge; WILDCARD edges are labelled ``*``.
"""

from pathlib import Path
from typing import Any, Optional, Union

from scripts.fsm_tools import WILDCARD, Machine
from scripts.seq_tools import SymbolTable


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', r"\"")


def _gvquote(*lines: str) -> str:
    # GraphViz reads an unescaped \n inside a quoted label as a line break
    return '"{}"'.format("\\n".join(_escape(s) for s in lines))


def describe_payload(payload: Any) -> str:
    """Compact provenance text: node subsets as {0,1}, pairs as (x, y)."""
    if isinstance(payload, frozenset):
        parts = sorted(describe_payload(p) for p in payload)
        return "{" + ",".join(parts) + "}"
    if isinstance(payload, tuple):
        return "(" + ", ".join(describe_payload(p) for p in payload) + ")"
    return str(payload)


def _edge_label(a: int, table: Optional[SymbolTable]) -> str:
    if a == WILDCARD:
        return "*"
    if table is not None and 0 <= a < len(table):
        return table.tokens[a]
    return str(a)


def to_dot(m: Machine, table: Optional[SymbolTable] = None, name: str = "machine") -> str:
    lines = [f"digraph {_gvquote(name)} {{", "\trankdir=LR;"]
    for x, payload in enumerate(m.payloads):
        shape = "doublecircle" if x in m.sinks else ("box" if x == m.source else "circle")
        lines.append(f"\tx{x} [shape={shape}, label={_gvquote(f'x{x}', describe_payload(payload))}];")
    for parent, child, a in sorted(m.edges):
        lines.append(f"\tx{parent} -> x{child} [label={_gvquote(_edge_label(a, table))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(path: Union[str, Path], m: Machine, table: Optional[SymbolTable] = None, name: str = "machine") -> None:
    Path(path).write_text(to_dot(m, table, name), encoding="utf-8")
