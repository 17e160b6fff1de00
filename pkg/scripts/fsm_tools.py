"""
Machine Tools

Reverse-deterministic DAG automata that recognise episodes and their minimal
windows. Constructions provided:
- M_G: states are prefix episodes, edges remove one sink
- simple(M): groups states so that no state has two incoming edges with the
  same label
- step / greedy: descend to the parent matching each symbol, reading the
  sequence from the last symbol to the first
- join(M1, M2, Θ): lockstep product of two simple machines
- MW(G): the collapsed join whose greedy landing in Ω certifies a minimal
  window, plus the cross join used for cross-moments

Edges carry a symbol id or WILDCARD ("every label not otherwise present on
the child's incoming edges").
"""

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import structlog

from scripts.episode_tools import Episode, prefix_subsets, render_linear, shape_of
from scripts.errors import ParameterError, StateLimitError
from scripts.schema import MachineSizes

log = structlog.get_logger(__name__)

WILDCARD = -1
PSI = "psi"
J_TAG = "J"
T_TAG = "T"
DEFAULT_STATE_CAP = 2 ** 16

MachineEdge = Tuple[int, int, int]  # (parent, child, label)


# =============================================================================
# MACHINE TYPE
# =============================================================================

@dataclass(frozen=True, eq=False)
class Machine:
    """
    Single-source DAG automaton.

    States are dense ids ``0..n-1``; ``payloads[x]`` keeps provenance (node
    subsets, groups of states, or state pairs) for debugging and DOT output.
    """

    payloads: Tuple[Any, ...]
    edges: Tuple[MachineEdge, ...]
    source: int
    sinks: FrozenSet[int]

    incoming: Tuple[Dict[int, Tuple[int, ...]], ...] = field(init=False, repr=False)
    explicit: Tuple[Dict[int, int], ...] = field(init=False, repr=False)
    wildcard: Tuple[Optional[int], ...] = field(init=False, repr=False)
    is_simple: bool = field(init=False)
    order: Tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.payloads)
        incoming: List[Dict[int, List[int]]] = [dict() for _ in range(n)]
        graph = nx.DiGraph()
        graph.add_nodes_from(range(n))
        for parent, child, label in self.edges:
            incoming[child].setdefault(label, []).append(parent)
            graph.add_edge(parent, child)

        if not nx.is_directed_acyclic_graph(graph):
            raise ParameterError("machine graph has a cycle")
        roots = [x for x in range(n) if not incoming[x]]
        if roots != [self.source]:
            raise ParameterError(f"machine must have exactly one source, found {roots}")

        simple = all(len(parents) == 1 for inc in incoming for parents in inc.values())
        explicit = tuple(
            {a: ps[0] for a, ps in inc.items() if a != WILDCARD} for inc in incoming
        )
        wildcard = tuple(inc[WILDCARD][0] if WILDCARD in inc else None for inc in incoming)

        object.__setattr__(self, "incoming", tuple({a: tuple(ps) for a, ps in inc.items()} for inc in incoming))
        object.__setattr__(self, "explicit", explicit)
        object.__setattr__(self, "wildcard", wildcard)
        object.__setattr__(self, "is_simple", simple)
        object.__setattr__(self, "order", tuple(nx.lexicographical_topological_sort(graph)))

    def __len__(self) -> int:
        return len(self.payloads)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def inc(self, x: int) -> FrozenSet[int]:
        """Incoming labels of ``x``; WILDCARD stands for all remaining symbols."""
        return frozenset(self.incoming[x])

    def transitions(self, x: int) -> List[Tuple[int, int]]:
        """(label, parent) pairs of a simple machine, explicit labels first."""
        out = sorted(self.explicit[x].items())
        if self.wildcard[x] is not None:
            out.append((WILDCARD, self.wildcard[x]))
        return out

    def relabelled(self, labels: Sequence[int]) -> "Machine":
        """
        The same graph with every explicit label ``a`` renamed ``labels[a]``.

        ``labels`` must be injective on the machine's labels; the graph checks
        are not repeated.
        """
        def name(a: int) -> int:
            return a if a == WILDCARD else labels[a]

        out = object.__new__(Machine)
        parts = dict(
            payloads=self.payloads,
            edges=tuple(sorted((p, c, name(a)) for p, c, a in self.edges)),
            source=self.source,
            sinks=self.sinks,
            incoming=tuple({name(a): ps for a, ps in inc.items()} for inc in self.incoming),
            explicit=tuple({labels[a]: p for a, p in ex.items()} for ex in self.explicit),
            wildcard=self.wildcard,
            is_simple=self.is_simple,
            order=self.order,
        )
        for key, value in parts.items():
            object.__setattr__(out, key, value)
        return out

    def state_of(self, payload: Any) -> int:
        """Id of the state carrying ``payload``."""
        for x, p in enumerate(self.payloads):
            if p == payload:
                return x
        raise KeyError(payload)


def _make_machine(
    payloads: Sequence[Any],
    edges: Iterable[MachineEdge],
    source: Optional[int] = None,
    sinks: Optional[Iterable[int]] = None,
) -> Machine:
    """Deduplicate edges and drop explicit edges that repeat the wildcard parent."""
    edges = set(edges)
    wild = {child: parent for parent, child, label in edges if label == WILDCARD}
    kept = sorted(
        (p, c, a) for p, c, a in edges
        if a == WILDCARD or wild.get(c) != p
    )
    if source is None:
        has_parent = {c for _, c, _ in kept}
        roots = [x for x in range(len(payloads)) if x not in has_parent]
        source = roots[0] if len(roots) == 1 else -1
    if sinks is None:
        has_child = {p for p, _, _ in kept}
        sinks = [x for x in range(len(payloads)) if x not in has_child]
    return Machine(tuple(payloads), tuple(kept), source, frozenset(sinks))


def _guard(count: int, cap: int, what: str) -> None:
    if count > cap:
        raise StateLimitError(f"{what} exceeds the state cap of {cap}")


# =============================================================================
# EPISODE MACHINE
# =============================================================================

def build_episode_machine(g: Episode, state_cap: int = DEFAULT_STATE_CAP) -> Machine:
    """
    M_G: one state per prefix episode; edge (x_H, x_F) labelled lab(v) for every
    sink v of F with H = F - v.
    """
    if len(g) == 0:
        raise ParameterError("the empty episode has no machine")
    subsets = prefix_subsets(g, cap=state_cap)
    index = {s: i for i, s in enumerate(subsets)}
    children: List[Set[int]] = [set() for _ in range(len(g))]
    for u, v in g.edges:
        children[u].add(v)

    edges = []
    for f in subsets:
        for v in f:
            if not (children[v] & f):
                edges.append((index[f - {v}], index[f], g.labels[v]))

    full = frozenset(range(len(g)))
    return Machine(tuple(subsets), tuple(sorted(edges)), index[frozenset()], frozenset({index[full]}))


# =============================================================================
# SIMPLIFICATION
# =============================================================================

def simplify(m: Machine, state_cap: int = DEFAULT_STATE_CAP) -> Machine:
    """
    simple(M): states are the groups reached from each sink by repeatedly
    taking parent(X; a) for every a in inc(X), where parent(X; a) is {source}
    if the source is among the a-parents of X and otherwise the a-parents of X
    together with the members of X that have no incoming a.
    """
    if any(label == WILDCARD for _, _, label in m.edges):
        raise ParameterError("simplify expects an episode machine without wildcard edges")

    source = m.source

    def parent(group: FrozenSet[int], a: int) -> FrozenSet[int]:
        sub = {p for x in group for p in m.incoming[x].get(a, ())}
        if source in sub:
            return frozenset({source})
        stay = {x for x in group if a not in m.incoming[x]}
        return frozenset(sub | stay)

    ids: Dict[FrozenSet[int], int] = {}
    groups: List[FrozenSet[int]] = []
    edges = []

    def visit(group: FrozenSet[int]) -> int:
        if group not in ids:
            ids[group] = len(groups)
            groups.append(group)
            _guard(len(groups), state_cap, "simplified machine")
            queue.append(group)
        return ids[group]

    queue: deque = deque()
    sink_ids = [visit(frozenset({x})) for x in sorted(m.sinks)]
    while queue:
        group = queue.popleft()
        labels = sorted({a for x in group for a in m.incoming[x]})
        for a in labels:
            edges.append((visit(parent(group, a)), ids[group], a))

    payloads = [frozenset(m.payloads[x] for x in group) for group in groups]
    return Machine(tuple(payloads), tuple(sorted(edges)), ids[frozenset({source})], frozenset(sink_ids))


# =============================================================================
# GREEDY
# =============================================================================

def step(m: Machine, x: int, a: int) -> int:
    """Parent of ``x`` along the incoming edge matching ``a``, else ``x``."""
    if not m.is_simple:
        raise ParameterError("step requires a simple machine")
    parent = m.explicit[x].get(a)
    if parent is not None:
        return parent
    wild = m.wildcard[x]
    return x if wild is None else wild


def greedy(m: Machine, x: int, symbols: Sequence[int]) -> int:
    """Fold ``step`` over ``symbols`` from the last symbol to the first."""
    if not m.is_simple:
        raise ParameterError("greedy requires a simple machine")
    explicit, wildcard = m.explicit, m.wildcard
    for a in reversed(list(symbols)):
        parent = explicit[x].get(a)
        if parent is None:
            parent = wildcard[x]
        if parent is not None:
            x = parent
    return x


# =============================================================================
# JOIN
# =============================================================================

def _pair_transitions(m1: Machine, m2: Machine, z1: int, z2: int) -> List[Tuple[int, Tuple[int, int]]]:
    out = []
    for a in sorted(m1.explicit[z1].keys() | m2.explicit[z2].keys()):
        out.append((a, (step(m1, z1, a), step(m2, z2, a))))
    w1, w2 = m1.wildcard[z1], m2.wildcard[z2]
    if w1 is not None or w2 is not None:
        out.append((WILDCARD, (z1 if w1 is None else w1, z2 if w2 is None else w2)))
    return out


def _join(
    m1: Machine,
    m2: Machine,
    theta: Iterable[Tuple[int, int]],
    collapse: Optional[Callable[[int, int], bool]] = None,
    state_cap: int = DEFAULT_STATE_CAP,
) -> Tuple[List[Any], List[MachineEdge], Dict[Tuple[int, int], int], Optional[int]]:
    """Raw join; pairs matching ``collapse`` merge into one state ψ and are not expanded."""
    if not (m1.is_simple and m2.is_simple):
        raise ParameterError("join requires simple machines")

    ids: Dict[Tuple[int, int], int] = {}
    payloads: List[Any] = []
    edges: List[MachineEdge] = []
    psi: List[int] = []
    queue: deque = deque()

    def visit(pair: Tuple[int, int]) -> int:
        if collapse is not None and collapse(*pair):
            if not psi:
                psi.append(len(payloads))
                payloads.append(PSI)
            ids[pair] = psi[0]
            return psi[0]
        if pair not in ids:
            ids[pair] = len(payloads)
            payloads.append((m1.payloads[pair[0]], m2.payloads[pair[1]]))
            _guard(len(payloads), state_cap, "join machine")
            queue.append(pair)
        return ids[pair]

    for pair in sorted(theta):
        visit(pair)
    while queue:
        pair = queue.popleft()
        child = ids[pair]
        for label, parent_pair in _pair_transitions(m1, m2, *pair):
            edges.append((visit(parent_pair), child, label))

    return payloads, edges, ids, (psi[0] if psi else None)


def join(
    m1: Machine,
    m2: Machine,
    theta: Iterable[Tuple[int, int]],
    state_cap: int = DEFAULT_STATE_CAP,
) -> Machine:
    """
    Lockstep product: states are the closure of ``theta`` under the pairwise
    one-symbol step; greedy on the join equals the pair of greedies.
    """
    payloads, edges, _, _ = _join(m1, m2, theta, state_cap=state_cap)
    return _make_machine(payloads, edges)


# =============================================================================
# MINIMAL WINDOW MACHINE
# =============================================================================

@dataclass(frozen=True, eq=False)
class MinimalWindowMachine:
    """MW(G): greedy(alpha, s) lands in ``omega`` iff s is a minimal window of G."""

    episode: Episode
    machine: Machine
    alpha: int
    omega: FrozenSet[int]
    theta: FrozenSet[int]
    psi: int
    simple: Machine = field(repr=False)


def _extend(m: Machine, tag: str, as_source: bool) -> Tuple[Machine, int]:
    new = len(m)
    payloads = m.payloads + (tag,)
    if as_source:
        edges = m.edges + ((new, m.source, WILDCARD),)
        return Machine(payloads, tuple(sorted(edges)), new, m.sinks), new
    (sink,) = m.sinks
    edges = m.edges + ((sink, new, WILDCARD),)
    return Machine(payloads, tuple(sorted(edges)), m.source, frozenset({new})), new


def _prune_to_targets(
    payloads: List[Any],
    edges: List[MachineEdge],
    psi: int,
    targets: Set[int],
) -> Tuple[List[Any], List[MachineEdge], Dict[int, int]]:
    """
    Drop states from which no target is reachable by parent steps; their edges
    into kept states are re-sourced to ψ. Returns the renumbering old -> new.
    """
    parents: Dict[int, Set[int]] = {x: set() for x in range(len(payloads))}
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(payloads)))
    for p, c, _ in edges:
        parents[c].add(p)
        graph.add_edge(p, c)

    reaches: Dict[int, bool] = {}
    for x in nx.lexicographical_topological_sort(graph):
        reaches[x] = x != psi and (x in targets or any(reaches[p] for p in parents[x]))

    kept = [psi] + [x for x in range(len(payloads)) if reaches[x]]
    renumber = {old: new for new, old in enumerate(kept)}
    new_edges = set()
    for p, c, a in edges:
        if c in renumber and c != psi:
            new_edges.add((renumber.get(p, 0), renumber[c], a))
    return [payloads[x] for x in kept], sorted(new_edges), renumber


def build_minimal_window_machine(g: Episode, state_cap: int = DEFAULT_STATE_CAP) -> MinimalWindowMachine:
    """
    MW(G) = join(M + J, M + T, {(S, T)}) with M = simple(M_G), where states
    (J, ·) and (Y, Y) collapse into ψ and states that cannot reach
    Ω = {(I, Y) : Y != I} are re-sourced to ψ.
    """
    base = simplify(build_episode_machine(g, state_cap), state_cap)
    (sink,) = base.sinks
    start = base.source
    m1, j = _extend(base, J_TAG, as_source=True)
    m2, t = _extend(base, T_TAG, as_source=False)

    payloads, edges, ids, psi = _join(
        m1, m2, [(sink, t)],
        collapse=lambda z1, z2: z1 == j or z1 == z2,
        state_cap=state_cap,
    )
    omega_raw = {sid for (z1, z2), sid in ids.items() if z1 == start and z2 != start and sid != psi}
    payloads, edges, renumber = _prune_to_targets(payloads, edges, psi, omega_raw)

    alpha_raw = ids[(sink, t)]
    if alpha_raw not in renumber:
        raise ParameterError(f"episode {render_linear(g)} has no minimal windows")
    machine = _make_machine(payloads, edges, source=0, sinks=[renumber[alpha_raw]])

    alpha = renumber[alpha_raw]
    omega = frozenset(renumber[x] for x in omega_raw if x in renumber)
    theta = _intermediate_states(machine, alpha, omega)
    log.debug(
        "fsm.minimal_window_machine",
        episode=render_linear(g), states=len(machine), edges=machine.n_edges, omega=len(omega),
    )
    return MinimalWindowMachine(g, machine, alpha, omega, theta, 0, base)


def _intermediate_states(m: Machine, alpha: int, omega: FrozenSet[int]) -> FrozenSet[int]:
    """States on parent-step paths from alpha into omega, excluding both ends and the source."""
    below = set()
    stack = [alpha]
    while stack:
        x = stack.pop()
        for _, parent in m.transitions(x):
            if parent not in below:
                below.add(parent)
                stack.append(parent)

    reaches = {x: x in omega for x in range(len(m))}
    for x in m.order:
        if not reaches[x]:
            reaches[x] = any(reaches[p] for _, p in m.transitions(x))

    return frozenset(
        x for x in below
        if reaches[x] and x != alpha and x not in omega and x != m.source
    )


# =============================================================================
# CROSS JOIN
# =============================================================================

@dataclass(frozen=True, eq=False)
class CrossJoin:
    """join(MW, MW, {(θ, α)}) with every pair containing ψ collapsed."""

    machine: Machine
    index: Dict[Tuple[int, int], int] = field(repr=False)


def build_cross_join(mw: MinimalWindowMachine, state_cap: int = DEFAULT_STATE_CAP) -> Optional[CrossJoin]:
    """None when Θ is empty."""
    if not mw.theta:
        return None
    psi = mw.psi
    payloads, edges, ids, psi_id = _join(
        mw.machine, mw.machine,
        [(theta, mw.alpha) for theta in sorted(mw.theta)],
        collapse=lambda z1, z2: z1 == psi or z2 == psi,
        state_cap=state_cap,
    )
    machine = _make_machine(payloads, edges, source=psi_id)
    index = {pair: sid for pair, sid in ids.items() if sid != psi_id}
    return CrossJoin(machine, index)


# =============================================================================
# SHARED MACHINES
# =============================================================================

def relabel_window_machine(mw: MinimalWindowMachine, g: Episode, labels: Sequence[int]) -> MinimalWindowMachine:
    """
    MW of ``g`` from the machine of an isomorphic episode whose node ``i``
    carries label ``i``; ``labels[i]`` is the label of the matching node of ``g``.
    State ids are unchanged.
    """
    return MinimalWindowMachine(
        g, mw.machine.relabelled(labels), mw.alpha, mw.omega, mw.theta, mw.psi, mw.simple.relabelled(labels),
    )


def relabel_cross_join(cross: CrossJoin, labels: Sequence[int]) -> CrossJoin:
    return CrossJoin(cross.machine.relabelled(labels), cross.index)


@dataclass
class _CacheEntry:
    mw: Optional[MinimalWindowMachine] = None
    error: Optional[str] = None
    cross: Optional[CrossJoin] = None
    cross_built: bool = False


class MachineCache:
    """
    Minimal-window and cross-join machines shared between episodes.

    Labels enter the constructions only through equality, so episodes with
    pairwise distinct labels share one machine per unlabelled shape and get
    their own labels written onto its edges. Episodes that repeat a label are
    cached by canonical key. Over-cap episodes are remembered as failures.
    """

    def __init__(self, state_cap: int = DEFAULT_STATE_CAP):
        self.state_cap = state_cap
        self.builds = 0
        self._entries: Dict[Any, _CacheEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def _lookup(self, g: Episode) -> Tuple[_CacheEntry, Optional[Tuple[int, ...]]]:
        if len(set(g.labels)) == len(g):
            shape, labels = shape_of(g)
        else:
            shape, labels = g, None
        entry = self._entries.get(shape.key)
        if entry is None:
            entry = self._entries[shape.key] = _CacheEntry()
            try:
                entry.mw = build_minimal_window_machine(shape, self.state_cap)
                self.builds += 1
            except StateLimitError as e:
                entry.error = str(e)
        return entry, labels

    def window(self, g: Episode) -> MinimalWindowMachine:
        """
        MW(g).

        Raises:
            StateLimitError: The machine of ``g`` exceeds the state cap.
        """
        entry, labels = self._lookup(g)
        if entry.error is not None:
            raise StateLimitError(f"{render_linear(g)}: {entry.error}")
        if labels is None:
            return replace(entry.mw, episode=g)
        return relabel_window_machine(entry.mw, g, labels)

    def cross(self, g: Episode) -> Optional[CrossJoin]:
        """The cross join matching ``window(g)``; None when Θ is empty."""
        entry, labels = self._lookup(g)
        if entry.error is not None:
            raise StateLimitError(f"{render_linear(g)}: {entry.error}")
        if not entry.cross_built:
            entry.cross = build_cross_join(entry.mw, self.state_cap)
            entry.cross_built = True
        if entry.cross is None or labels is None:
            return entry.cross
        return relabel_cross_join(entry.cross, labels)


# =============================================================================
# REPORTING
# =============================================================================

def machine_sizes(g: Episode, state_cap: int = DEFAULT_STATE_CAP) -> MachineSizes:
    """|V| and |E| of M_G, simple(M_G), MW(G) and the cross join."""
    episode_machine = build_episode_machine(g, state_cap)
    mw = build_minimal_window_machine(g, state_cap)
    cross = build_cross_join(mw, state_cap)
    return MachineSizes(
        episode_states=len(episode_machine),
        episode_edges=episode_machine.n_edges,
        simple_states=len(mw.simple),
        simple_edges=mw.simple.n_edges,
        window_states=len(mw.machine),
        window_edges=mw.machine.n_edges,
        cross_states=len(cross.machine) if cross else 0,
        cross_edges=cross.machine.n_edges if cross else 0,
    )
