"""
Episode Tools

Episodes are labelled DAGs over symbol ids. This module provides:
- The immutable Episode type and serial/parallel constructors
- Prefix episodes (downward-closed node subsets), sinks and sink removal
- Strictness, classification and canonical keys (modulo transitive closure)
- Super-episode containment and a brute-force coverage oracle
- Text renderings and the episode file / JSON formats
"""

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
from networkx.algorithms.isomorphism import DiGraphMatcher

from scripts.errors import DataError, ParameterError, SizeGuardError, StateLimitError
from scripts.schema import EpisodeClass

if TYPE_CHECKING:
    from scripts.seq_tools import EventSequence, SymbolTable

Edge = Tuple[int, int]
CanonicalKey = Tuple[Tuple[int, ...], Tuple[Edge, ...]]

COVER_GUARD = 8
SUBEPISODE_GUARD = 8
CANONICAL_PERMUTATION_LIMIT = 10


# =============================================================================
# EPISODE TYPE
# =============================================================================

@dataclass(frozen=True)
class Episode:
    """
    Labelled DAG: node ``i`` carries ``labels[i]``; ``edges`` holds (from, to) pairs.

    Equality is structural on the given edges; use ``canonical_key`` to compare
    episodes modulo relabelling and transitive closure.
    """

    labels: Tuple[int, ...]
    edges: FrozenSet[Edge] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(a) for a in self.labels))
        object.__setattr__(self, "edges", frozenset((int(u), int(v)) for u, v in self.edges))
        k = len(self.labels)
        for u, v in self.edges:
            if not (0 <= u < k and 0 <= v < k):
                raise ParameterError(f"edge {u}>{v} refers to a missing node")
            if u == v:
                raise ParameterError(f"self-loop on node {u}")
        if self.edges and not nx.is_directed_acyclic_graph(self.graph):
            raise ParameterError("episode graph has a cycle")

    def __len__(self) -> int:
        return len(self.labels)

    @cached_property
    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from((v, {"label": a}) for v, a in enumerate(self.labels))
        g.add_edges_from(sorted(self.edges))
        return g

    @cached_property
    def parents(self) -> Tuple[FrozenSet[int], ...]:
        acc: List[set] = [set() for _ in self.labels]
        for u, v in self.edges:
            acc[v].add(u)
        return tuple(frozenset(p) for p in acc)

    @cached_property
    def closure_edges(self) -> FrozenSet[Edge]:
        if not self.edges:
            return frozenset()
        return frozenset(nx.transitive_closure_dag(self.graph).edges())

    @cached_property
    def key(self) -> CanonicalKey:
        return canonical_key(self)


def serial(labels: Sequence[int]) -> Episode:
    """a1 -> a2 -> ... -> ak."""
    return Episode(tuple(labels), frozenset((i, i + 1) for i in range(len(labels) - 1)))


def parallel(labels: Sequence[int]) -> Episode:
    """Unordered labels."""
    return Episode(tuple(labels), frozenset())


def transitive_closure(g: Episode) -> Episode:
    return Episode(g.labels, g.closure_edges)


def induced(g: Episode, nodes: Iterable[int]) -> Episode:
    """Sub-episode on ``nodes``, renumbered in increasing node order."""
    keep = sorted(set(nodes))
    remap = {v: i for i, v in enumerate(keep)}
    return Episode(
        tuple(g.labels[v] for v in keep),
        frozenset((remap[u], remap[v]) for u, v in g.edges if u in remap and v in remap),
    )


# =============================================================================
# PREFIXES
# =============================================================================

def sinks(g: Episode) -> FrozenSet[int]:
    """Nodes without outgoing edges."""
    has_child = {u for u, _ in g.edges}
    return frozenset(v for v in range(len(g)) if v not in has_child)


def remove_sink(g: Episode, v: int) -> Episode:
    """G - v for a sink v."""
    if v not in sinks(g):
        raise ParameterError(f"node {v} is not a sink")
    return induced(g, (u for u in range(len(g)) if u != v))


def prefix_subsets(g: Episode, cap: Optional[int] = None) -> List[FrozenSet[int]]:
    """
    All downward-closed node subsets, ordered by size and then node tuple.

    Args:
        g: Episode.
        cap: Stop with StateLimitError once more than ``cap`` subsets exist.
    """
    parents = g.parents
    start: FrozenSet[int] = frozenset()
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for subset in frontier:
            for v in range(len(g)):
                if v not in subset and parents[v] <= subset:
                    grown = subset | {v}
                    if grown not in seen:
                        seen.add(grown)
                        nxt.append(grown)
                        if cap is not None and len(seen) > cap:
                            raise StateLimitError(
                                f"episode {render_linear(g)} has more than {cap} prefix episodes"
                            )
        frontier = nxt
    return sorted(seen, key=lambda s: (len(s), tuple(sorted(s))))


def prefix_episodes(g: Episode) -> List[Episode]:
    """pre(G), including the empty episode and G itself."""
    return [induced(g, subset) for subset in prefix_subsets(g)]


# =============================================================================
# PROPERTIES
# =============================================================================

def is_strict(g: Episode) -> bool:
    """Every pair of equal-labelled nodes is comparable in the closure."""
    closure = g.closure_edges
    by_label: Dict[int, List[int]] = {}
    for v, a in enumerate(g.labels):
        by_label.setdefault(a, []).append(v)
    for nodes in by_label.values():
        for u, v in itertools.combinations(nodes, 2):
            if (u, v) not in closure and (v, u) not in closure:
                return False
    return True


def classify(g: Episode) -> EpisodeClass:
    k = len(g)
    if k <= 1:
        return EpisodeClass.SERIAL
    if not g.edges:
        return EpisodeClass.PARALLEL
    if len(g.closure_edges) == k * (k - 1) // 2:
        return EpisodeClass.SERIAL
    return EpisodeClass.GENERAL


def _refined_colors(labels: Tuple[int, ...], edges: FrozenSet[Edge]) -> List[int]:
    k = len(labels)
    succ = [[] for _ in range(k)]
    pred = [[] for _ in range(k)]
    for u, v in edges:
        succ[u].append(v)
        pred[v].append(u)

    colors = list(labels)
    n_classes = len(set(colors))
    while True:
        sig = [
            (colors[v], tuple(sorted(colors[c] for c in succ[v])), tuple(sorted(colors[p] for p in pred[v])))
            for v in range(k)
        ]
        palette = {s: i for i, s in enumerate(sorted(set(sig)))}
        colors = [palette[s] for s in sig]
        if len(palette) == n_classes:
            return colors
        n_classes = len(palette)


def _encode(g: Episode, order: Sequence[int]) -> CanonicalKey:
    pos = {v: i for i, v in enumerate(order)}
    return (
        tuple(g.labels[v] for v in order),
        tuple(sorted((pos[u], pos[v]) for u, v in g.closure_edges)),
    )


def canonical_order(g: Episode) -> List[int]:
    """
    Node order behind ``canonical_key``.

    Colour refinement orders nodes; ties within colour classes are broken by
    trying every permutation (episodes up to 10 nodes) and keeping the
    lexicographically smallest encoding.
    """
    k = len(g)
    colors = _refined_colors(g.labels, g.closure_edges)

    classes: Dict[int, List[int]] = {}
    for v in range(k):
        classes.setdefault(colors[v], []).append(v)
    ordered = [classes[c] for c in sorted(classes)]

    if k > CANONICAL_PERMUTATION_LIMIT:
        return [v for group in ordered for v in group]

    best, best_order = None, None
    for choice in itertools.product(*(itertools.permutations(group) for group in ordered)):
        order = [v for group in choice for v in group]
        candidate = _encode(g, order)
        if best is None or candidate < best:
            best, best_order = candidate, order
    return best_order


def canonical_key(g: Episode) -> CanonicalKey:
    """Isomorphism-invariant key of the transitively closed episode."""
    return _encode(g, canonical_order(g))


def shape_of(g: Episode) -> Tuple[Episode, Tuple[int, ...]]:
    """
    Split an episode with pairwise distinct labels into its unlabelled shape
    and a label assignment.

    The shape carries labels ``0..k-1`` in canonical order of the unlabelled
    closure, so isomorphic DAGs share one shape; node ``i`` of the shape
    stands for label ``labels[i]`` of ``g``.

    Raises:
        ParameterError: ``g`` repeats a label.
    """
    if len(set(g.labels)) != len(g):
        raise ParameterError("shape_of needs pairwise distinct labels")
    k = len(g)
    order = canonical_order(Episode((0,) * k, g.closure_edges))
    pos = {v: i for i, v in enumerate(order)}
    shape = Episode(tuple(range(k)), frozenset((pos[u], pos[v]) for u, v in g.closure_edges))
    return shape, tuple(g.labels[v] for v in order)


def is_subepisode(h: Episode, g: Episode, max_nodes: int = SUBEPISODE_GUARD) -> bool:
    """
    True if ``g`` contains ``h``: an injective, label-preserving map of h's
    nodes into g's that maps every closure edge of h onto a closure edge of g.
    """
    if len(h) > len(g):
        return False
    if len(g) > max_nodes:
        raise SizeGuardError(f"super-episode test limited to {max_nodes} nodes")
    if len(h.closure_edges) > len(g.closure_edges):
        return False
    remaining = list(g.labels)
    for a in h.labels:
        if a not in remaining:
            return False
        remaining.remove(a)

    big = nx.DiGraph()
    big.add_nodes_from((v, {"label": a}) for v, a in enumerate(g.labels))
    big.add_edges_from(g.closure_edges)
    small = nx.DiGraph()
    small.add_nodes_from((v, {"label": a}) for v, a in enumerate(h.labels))
    small.add_edges_from(h.closure_edges)
    matcher = DiGraphMatcher(big, small, node_match=lambda x, y: x["label"] == y["label"])
    return matcher.subgraph_is_monomorphic()


# =============================================================================
# COVERAGE ORACLE
# =============================================================================

def covers_bruteforce(s: "EventSequence", g: Episode, max_nodes: int = COVER_GUARD) -> bool:
    """
    Exhaustive embedding search: True iff s covers g.

    Raises:
        SizeGuardError: If g has more than ``max_nodes`` nodes.
    """
    if len(g) > max_nodes:
        raise SizeGuardError(f"coverage search limited to {max_nodes} nodes, episode has {len(g)}")
    if len(g) == 0:
        return True

    positions: Dict[int, List[int]] = {}
    for pos, sym in enumerate(s.symbols.tolist()):
        positions.setdefault(sym, []).append(pos)

    order = list(nx.topological_sort(g.graph))
    parents = g.parents
    placed: Dict[int, int] = {}
    used = set()

    def assign(k: int) -> bool:
        if k == len(order):
            return True
        v = order[k]
        lo = max((placed[u] for u in parents[v]), default=-1)
        for pos in positions.get(g.labels[v], ()):
            if pos > lo and pos not in used:
                used.add(pos)
                placed[v] = pos
                if assign(k + 1):
                    return True
                used.discard(pos)
        return False

    return assign(0)


# =============================================================================
# RENDERING
# =============================================================================

def _name(a: int, table: Optional["SymbolTable"]) -> str:
    return table.tokens[a] if table is not None else str(a)


def render_linear(g: Episode, table: Optional["SymbolTable"] = None) -> str:
    """
    ``a>b|c`` style text: weakly connected components joined by ``|``; within
    a component, longest-path layers joined by ``>`` and multi-node layers in
    parentheses. Exact for layered episodes; use the JSON export otherwise.
    """
    if len(g) == 0:
        return ""
    reduced = nx.transitive_reduction(g.graph) if g.edges else g.graph
    parts = []
    for component in nx.weakly_connected_components(reduced):
        depth: Dict[int, int] = {}
        for v in nx.topological_sort(reduced.subgraph(component)):
            depth[v] = max((depth[u] + 1 for u in reduced.predecessors(v)), default=0)
        layers: Dict[int, List[str]] = {}
        for v, d in depth.items():
            layers.setdefault(d, []).append(_name(g.labels[v], table))
        rendered = []
        for d in sorted(layers):
            names = sorted(layers[d])
            rendered.append(names[0] if len(names) == 1 else "(" + " ".join(names) + ")")
        parts.append(">".join(rendered))
    return "|".join(sorted(parts))


def parse_linear(text: str, table: "SymbolTable") -> Tuple["SymbolTable", Episode]:
    """
    Parse the ``render_linear`` format; consecutive layers are fully connected.
    Unseen tokens extend ``table``.
    """
    from scripts.seq_tools import extend_table

    text = text.strip()
    if not text:
        raise DataError("empty episode text")

    layered: List[List[List[str]]] = []
    for component in text.split("|"):
        layers = []
        for layer in component.split(">"):
            layer = layer.strip()
            if layer.startswith("(") and layer.endswith(")"):
                names = layer[1:-1].split()
            else:
                names = layer.split()
            if len(names) == 0 or (len(names) > 1 and not layer.startswith("(")):
                raise DataError(f"cannot parse episode text {text!r}")
            layers.append(names)
        layered.append(layers)

    table = extend_table(table, (n for layers in layered for layer in layers for n in layer))
    labels: List[int] = []
    edges = set()
    for layers in layered:
        previous: List[int] = []
        for layer in layers:
            current = []
            for name in layer:
                current.append(len(labels))
                labels.append(table.index[name])
            edges.update((u, v) for u in previous for v in current)
            previous = current
    return table, Episode(tuple(labels), frozenset(edges))


# =============================================================================
# FILE FORMATS
# =============================================================================

def format_episodes(
    episodes: Sequence[Tuple[Episode, Optional[int]]],
    table: "SymbolTable",
) -> str:
    """Block format: ``episode i`` / ``nodes i:label ...`` / ``edges u>v ...`` / ``support n``."""
    blocks = []
    for number, (g, support) in enumerate(episodes, start=1):
        lines = [
            f"episode {number}",
            "nodes " + " ".join(f"{v}:{table.tokens[a]}" for v, a in enumerate(g.labels)),
            "edges " + " ".join(f"{u}>{v}" for u, v in sorted(g.edges)),
        ]
        if support is not None:
            lines.append(f"support {support}")
        blocks.append("\n".join(line.rstrip() for line in lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_episodes(path: Union[str, Path], episodes: Sequence[Tuple[Episode, Optional[int]]], table: "SymbolTable") -> None:
    Path(path).write_text(format_episodes(episodes, table), encoding="utf-8")


def parse_episodes(
    text: str,
    table: "SymbolTable",
    extend: bool = False,
    source: str = "<episodes>",
) -> Tuple["SymbolTable", List[Tuple[Episode, Optional[int]]]]:
    """
    Parse the block format.

    Args:
        text: File contents.
        table: Symbol table used to resolve labels.
        extend: Add unseen labels to the table instead of failing.
        source: Name used in error messages.

    Raises:
        DataError: With the 1-based line number of the offending line.
    """
    from scripts.seq_tools import SymbolTable

    order = list(table.tokens)
    index = dict(table.index)
    parsed: List[Tuple[Episode, Optional[int]]] = []
    current: Optional[dict] = None

    def finish(line_no: int):
        if current is None:
            return
        if current["labels"] is None:
            raise DataError("episode block without a nodes line", path=source, line=line_no)
        try:
            g = Episode(tuple(current["labels"]), frozenset(current["edges"]))
        except ParameterError as e:
            raise DataError(str(e), path=source, line=current["line"])
        parsed.append((g, current["support"]))

    line_no = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        fields = rest.split()
        if head == "episode":
            finish(line_no)
            current = {"labels": None, "edges": [], "support": None, "line": line_no}
            continue
        if current is None:
            raise DataError(f"expected 'episode', found {head!r}", path=source, line=line_no)
        if head == "nodes":
            labels = []
            for expected, item in enumerate(fields):
                idx, sep, token = item.partition(":")
                if not sep or not token or idx != str(expected):
                    raise DataError(f"bad node entry {item!r}", path=source, line=line_no)
                if token not in index:
                    if not extend:
                        raise DataError(f"label {token!r} not in symbol table", path=source, line=line_no)
                    index[token] = len(order)
                    order.append(token)
                labels.append(index[token])
            current["labels"] = labels
        elif head == "edges":
            for item in fields:
                u, sep, v = item.partition(">")
                if not sep or not u.isdigit() or not v.isdigit():
                    raise DataError(f"bad edge entry {item!r}", path=source, line=line_no)
                current["edges"].append((int(u), int(v)))
        elif head == "support":
            if len(fields) != 1 or not fields[0].isdigit():
                raise DataError("support must be a non-negative integer", path=source, line=line_no)
            current["support"] = int(fields[0])
        else:
            raise DataError(f"unknown record {head!r}", path=source, line=line_no)
    finish(line_no)

    return SymbolTable(tuple(order)), parsed


def read_episodes(
    path: Union[str, Path],
    table: "SymbolTable",
    extend: bool = False,
) -> Tuple["SymbolTable", List[Tuple[Episode, Optional[int]]]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read episodes: {e}", path=str(path))
    return parse_episodes(text, table, extend=extend, source=str(path))


def episode_to_json(g: Episode, table: Optional["SymbolTable"] = None, support: Optional[int] = None) -> str:
    record = {
        "nodes": list(range(len(g))),
        "labels": [_name(a, table) for a in g.labels],
        "edges": [list(e) for e in sorted(g.edges)],
    }
    if support is not None:
        record["support"] = support
    return json.dumps(record)


def episode_from_json(text: str, table: "SymbolTable") -> Episode:
    try:
        record = json.loads(text)
        labels = tuple(table.id_of(tok) for tok in record["labels"])
        edges = frozenset((int(u), int(v)) for u, v in record["edges"])
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"bad episode JSON: {e}")
    if record.get("nodes", list(range(len(labels)))) != list(range(len(labels))):
        raise DataError("episode JSON nodes must be 0..k-1")
    return Episode(labels, edges)
