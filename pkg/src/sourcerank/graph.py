"""Directed graph over dense integer ids, edge-list ingestion and traversal.

Undirected input is stored with both arcs materialized, so every algorithm
downstream only has to deal with directed adjacency.  Adjacency lists are
kept sorted by node id, which makes every breadth-first search in the
package visit its frontier in ascending id order.
"""

from __future__ import annotations

import io
import logging
import os
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

logger = logging.getLogger(__name__)


class EdgeListParseError(ValueError):
    """Raised for a malformed edge-list line; carries the 1-based line number."""

    def __init__(self, lineno: int, line: str):
        super().__init__(f"line {lineno}: expected two node labels, got {line.strip()!r}")
        self.lineno = lineno


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Immutable adjacency structure.

    ``out_edges[u]`` and ``in_edges[u]`` are sorted tuples of node ids.
    ``labels[i]`` is the original label of node ``i`` (its string form when
    the graph was read from a file).
    """

    node_count: int
    out_edges: tuple[tuple[int, ...], ...]
    in_edges: tuple[tuple[int, ...], ...]
    directed: bool = True
    labels: tuple = ()
    stats: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_arcs(
        cls,
        node_count: int,
        arcs: Iterable[tuple[int, int]],
        directed: bool = True,
        labels: Sequence | None = None,
    ) -> "Graph":
        """Build a graph from ``(u, v)`` pairs.

        Undirected mode inserts both directions.  Self-loops and duplicate
        arcs are dropped and counted in ``stats``.
        """
        succ: list[set[int]] = [set() for _ in range(node_count)]
        self_loops = 0
        duplicates = 0
        for u, v in arcs:
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise GraphError(f"arc ({u}, {v}) outside [0, {node_count})")
            if u == v:
                self_loops += 1
                continue
            if v in succ[u]:
                duplicates += 1
                continue
            succ[u].add(v)
            if not directed:
                succ[v].add(u)
        pred: list[list[int]] = [[] for _ in range(node_count)]
        for u in range(node_count):
            for v in succ[u]:
                pred[v].append(u)
        if labels is None:
            labels = range(node_count)
        return cls(
            node_count=node_count,
            out_edges=tuple(tuple(sorted(s)) for s in succ),
            in_edges=tuple(tuple(sorted(p)) for p in pred),
            directed=directed,
            labels=tuple(labels),
            stats={"self_loops": self_loops, "duplicates": duplicates},
        )

    @classmethod
    def from_edges(cls, edges: Iterable[tuple], directed: bool = False) -> "Graph":
        """Build from labelled edges, interning labels to dense ids."""
        edges = list(edges)
        labels = _sorted_labels({x for e in edges for x in e})
        index = {lab: i for i, lab in enumerate(labels)}
        return cls.from_arcs(
            len(labels), ((index[a], index[b]) for a, b in edges), directed, labels
        )

    def successors(self, u: int) -> tuple[int, ...]:
        return self.out_edges[u]

    def predecessors(self, u: int) -> tuple[int, ...]:
        return self.in_edges[u]

    def has_arc(self, u: int, v: int) -> bool:
        return v in self.out_edges[u]

    def arcs(self) -> Iterable[tuple[int, int]]:
        for u, vs in enumerate(self.out_edges):
            for v in vs:
                yield u, v

    @property
    def arc_count(self) -> int:
        return sum(len(vs) for vs in self.out_edges)

    @property
    def edge_count(self) -> int:
        """Number of undirected edges when undirected, else number of arcs."""
        n = self.arc_count
        return n if self.directed else n // 2

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Each symmetric pair once as ``(u, v)`` with ``u < v``."""
        return [(u, v) for u, v in self.arcs() if u < v and self.has_arc(v, u)]

    def degree(self, u: int) -> int:
        return len(self.out_edges[u])

    def label(self, u: int):
        return self.labels[u] if self.labels else u

    def index_of(self, label) -> int:
        try:
            return self._label_index()[label]
        except KeyError:
            raise KeyError(f"unknown node label {label!r}") from None

    def _label_index(self) -> dict:
        cache = self.stats.get("_index")
        if cache is None:
            cache = {lab: i for i, lab in enumerate(self.labels)}
            # labels read from files are strings; let ints resolve as well
            for i, lab in enumerate(self.labels):
                cache.setdefault(str(lab), i)
            self.stats["_index"] = cache
        return cache

    def is_connected(self) -> bool:
        """Weak connectivity (arc directions ignored)."""
        if self.node_count == 0:
            return True
        return len(_weak_component(self, 0)) == self.node_count


def _sorted_labels(labels: set) -> list:
    try:
        return sorted(labels, key=int)
    except (TypeError, ValueError):
        return sorted(labels, key=str)


def load_edge_list(source: str | os.PathLike | bytes | IO, directed: bool = False) -> Graph:
    """Parse a whitespace-separated edge list.

    ``source`` may be a path, raw text/bytes, or an open text/binary stream.
    A ``str`` naming an existing file is read; any other ``str`` is parsed
    as the edge list itself.
    Lines starting with ``#`` (or ``%``) and blank lines are skipped.  Extra
    columns after the first two are ignored.  When every label is an integer
    the dense ids follow numeric label order, otherwise lexicographic order.
    """
    text = _read_text(source)
    pairs: list[tuple[str, str]] = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#%":
            continue
        parts = stripped.split()
        if len(parts) < 2:
            raise EdgeListParseError(lineno, line)
        pairs.append((parts[0], parts[1]))
    g = Graph.from_edges(pairs, directed=directed)
    if g.stats["self_loops"] or g.stats["duplicates"]:
        logger.info(
            "edge list: dropped %d self-loops and %d duplicate edges",
            g.stats["self_loops"],
            g.stats["duplicates"],
        )
    return g


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode()
    if isinstance(source, os.PathLike) or (isinstance(source, str) and os.path.isfile(source)):
        # a plain string that names no file is taken as the edge list itself
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode() if isinstance(data, bytes) else data


def bfs_distances(
    g: Graph, source: int, allowed: Sequence[bool] | None = None, reverse: bool = False
) -> dict[int, int]:
    """Hop distances from ``source`` along arcs (against them if ``reverse``).

    ``allowed`` restricts the search to nodes with a true flag.
    """
    adj = g.in_edges if reverse else g.out_edges
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in adj[u]:
            if v not in dist and (allowed is None or allowed[v]):
                dist[v] = du
                queue.append(v)
    return dist


def shortest_path_len(g: Graph, u: int, v: int) -> int | None:
    """Minimum number of directed hops from ``u`` to ``v``; None if unreachable."""
    if u == v:
        return 0
    dist = {u: 0}
    queue = deque([u])
    while queue:
        x = queue.popleft()
        for y in g.out_edges[x]:
            if y not in dist:
                if y == v:
                    return dist[x] + 1
                dist[y] = dist[x] + 1
                queue.append(y)
    return None


@dataclass(frozen=True)
class NodeMap:
    """Bijection between parent-graph ids and subgraph ids."""

    to_parent: tuple[int, ...]
    to_sub: dict[int, int]


def induced_infected_subgraph(g: Graph, nodes: Iterable[int]) -> tuple[Graph, NodeMap]:
    """Subgraph on ``nodes`` keeping every arc with both endpoints inside.

    Subgraph ids follow ascending parent id, so id-based tie-breaking is
    preserved.
    """
    keep = sorted(set(nodes))
    to_sub = {u: i for i, u in enumerate(keep)}
    arcs = [
        (i, to_sub[v]) for i, u in enumerate(keep) for v in g.out_edges[u] if v in to_sub
    ]
    sub = Graph.from_arcs(
        len(keep), arcs, directed=True, labels=[g.label(u) for u in keep]
    )
    sub = Graph(sub.node_count, sub.out_edges, sub.in_edges, g.directed, sub.labels)
    return sub, NodeMap(tuple(keep), to_sub)


def _weak_component(g: Graph, start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for adj in (g.out_edges[u], g.in_edges[u]):
            for v in adj:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    return seen


def weak_components(g: Graph) -> list[list[int]]:
    seen: set[int] = set()
    comps = []
    for u in range(g.node_count):
        if u not in seen:
            comp = _weak_component(g, u)
            seen |= comp
            comps.append(sorted(comp))
    return comps


def _connected_without(adj: list[set[int]], u: int, v: int) -> bool:
    """Whether u and v stay connected once edge {u, v} is gone.

    Alternating bidirectional search: cost is bounded by the smaller side
    when the edge is a bridge.
    """
    seen_u, seen_v = {u}, {v}
    front_u, front_v = [u], [v]
    while front_u and front_v:
        if len(front_u) > len(front_v):
            front_u, front_v = front_v, front_u
            seen_u, seen_v = seen_v, seen_u
        nxt = []
        for x in front_u:
            for y in adj[x]:
                if (x == u and y == v) or (x == v and y == u):
                    continue
                if y in seen_v:
                    return True
                if y not in seen_u:
                    seen_u.add(y)
                    nxt.append(y)
        front_u = nxt
    return False


def remove_random_edges_connected(g: Graph, k: int, rng) -> Graph:
    """Remove ``k`` undirected edges, one at a time, keeping the graph connected.

    Each removal draws uniformly among edges whose deletion keeps the graph
    connected.  Bridges found along the way are remembered: deleting edges
    never turns a bridge back into a non-bridge.
    """
    if g.directed:
        raise GraphError("edge removal requires an undirected graph")
    if not g.is_connected():
        raise GraphError("edge removal requires a connected graph")
    edges = g.undirected_edges()
    removable = len(edges) - (g.node_count - 1)
    if k > removable:
        raise GraphError(
            f"cannot remove {k} edges: at most {removable} can go without disconnecting"
        )
    adj = [set(vs) for vs in g.out_edges]
    candidates = list(edges)
    removed = 0
    while removed < k:
        if not candidates:
            raise GraphError(f"only {removed} of {k} edges removable without disconnecting")
        i = int(rng.integers(len(candidates)))
        u, v = candidates[i]
        candidates[i] = candidates[-1]
        candidates.pop()
        if _connected_without(adj, u, v):
            adj[u].discard(v)
            adj[v].discard(u)
            removed += 1
    arcs = [(u, v) for u in range(g.node_count) for v in adj[u]]
    return Graph.from_arcs(g.node_count, arcs, directed=False, labels=g.labels)


def apply_infector_constraint(g: Graph, infector: int, infectee: int) -> Graph:
    """Encode "``infector`` infected ``infectee``" by pruning arcs.

    Every arc into ``infectee`` other than the one from ``infector`` goes,
    and so does the reverse arc ``infectee -> infector``.  The result is a
    directed graph.
    """
    if not g.has_arc(infector, infectee):
        raise GraphError(f"no arc {g.label(infector)} -> {g.label(infectee)}")
    arcs = [
        (u, v)
        for u, v in g.arcs()
        if not (v == infectee and u != infector) and not (u == infectee and v == infector)
    ]
    return Graph.from_arcs(g.node_count, arcs, directed=True, labels=g.labels)
