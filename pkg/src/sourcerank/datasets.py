"""Built-in graphs: the Florentine families network and seeded stand-ins for
the power-grid and autonomous-systems networks.

The real power-grid (4,941 nodes / 6,594 edges) and Oregon AS
(10,670 nodes / 22,002 edges) edge lists are not bundled; load them with
:func:`sourcerank.graph.load_edge_list` when available.  The stand-ins
match their size and headline statistics: a sparse planar grid with a
few long lines for the power grid, and a heavy-tailed graph with one big
hub for the AS graph.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import Delaunay

from .graph import Graph, load_edge_list

FLORENTINE_EDGES = [
    ("Acciaiuoli", "Medici"),
    ("Albizzi", "Ginori"),
    ("Albizzi", "Guadagni"),
    ("Albizzi", "Medici"),
    ("Barbadori", "Castellani"),
    ("Barbadori", "Medici"),
    ("Bischeri", "Guadagni"),
    ("Bischeri", "Peruzzi"),
    ("Bischeri", "Strozzi"),
    ("Castellani", "Peruzzi"),
    ("Castellani", "Strozzi"),
    ("Guadagni", "Lamberteschi"),
    ("Guadagni", "Tornabuoni"),
    ("Medici", "Ridolfi"),
    ("Medici", "Salviati"),
    ("Medici", "Tornabuoni"),
    ("Pazzi", "Salviati"),
    ("Peruzzi", "Strozzi"),
    ("Ridolfi", "Strozzi"),
    ("Ridolfi", "Tornabuoni"),
]

PG_NODES, PG_EDGES = 4941, 6594
IAS_NODES, IAS_EDGES = 10670, 22002


def florentine_families() -> Graph:
    """Marriage ties among Renaissance Florentine families (15 nodes, 20 edges)."""
    return Graph.from_edges(FLORENTINE_EDGES, directed=False)


def power_grid_surrogate(
    seed: int = 0, nodes: int = PG_NODES, edges: int = PG_EDGES, local_share: float = 0.2, long_range: int = 130
) -> Graph:
    """Small-world planar grid calibrated to the power grid's published statistics.

    Random points in the unit square are joined by their Euclidean minimum
    spanning tree (about a fifth of the nodes end up as leaves and stay
    so).  The remaining edges are drawn among non-leaf nodes: a
    ``local_share`` of them close triangles of the tree, ``long_range`` join
    uniformly random node pairs, and the rest are other Delaunay edges.
    The defaults give a mean shortest-path length near 19 and a clustering
    coefficient near 0.08.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((nodes, 2))
    tri = Delaunay(pts)
    pairs = set()
    for simplex in tri.simplices:
        a, b, c = sorted(int(x) for x in simplex)
        pairs.update([(a, b), (a, c), (b, c)])
    pairs = sorted(pairs)
    u = np.array([p[0] for p in pairs])
    v = np.array([p[1] for p in pairs])
    w = np.linalg.norm(pts[u] - pts[v], axis=1)
    mst = minimum_spanning_tree(coo_matrix((w, (u, v)), shape=(nodes, nodes))).tocoo()
    tree = {(min(a, b), max(a, b)) for a, b in zip(mst.row.tolist(), mst.col.tolist())}
    adj: list[set[int]] = [set() for _ in range(nodes)]
    for a, b in tree:
        adj[a].add(b)
        adj[b].add(a)
    core = [x for x in range(nodes) if len(adj[x]) > 1]
    rest = [p for p in pairs if p not in tree and len(adj[p[0]]) > 1 and len(adj[p[1]]) > 1]
    local = [p for p in rest if adj[p[0]] & adj[p[1]]]
    other = [p for p in rest if not adj[p[0]] & adj[p[1]]]
    need = edges - len(tree) - long_range
    n_local = min(int(round(local_share * need)), len(local))
    chosen = set(tree)
    chosen.update(local[i] for i in rng.choice(len(local), n_local, replace=False))
    chosen.update(other[i] for i in rng.choice(len(other), need - n_local, replace=False))
    while len(chosen) < edges:
        a, b = sorted(int(x) for x in rng.choice(core, 2, replace=False))
        chosen.add((a, b))
    return Graph.from_arcs(nodes, sorted(chosen), directed=False)


IAS_DEGREE_ONE, IAS_MAX_DEGREE = 3720, 2312


def as_graph_surrogate(seed: int = 0) -> Graph:
    """Configuration-model graph matching the AS graph's published statistics.

    10,670 nodes and 22,002 edges, 3,720 nodes of degree one, one hub of
    degree 2,312, and the remaining degrees drawn from a power law on
    [2, 2311] whose exponent sets the mean right.  Stub pairing is followed
    by a clean-up: self-loops and multi-edges are dropped, small components
    are spliced into the giant one by degree-preserving swaps, and the lost
    edges are re-added between nodes short of their target degree.
    """
    rng = np.random.default_rng(seed)
    n, m = IAS_NODES, IAS_EDGES
    rest = n - IAS_DEGREE_ONE - 1
    ks = np.arange(2, IAS_MAX_DEGREE)
    target_mean = (2 * m - IAS_DEGREE_ONE - IAS_MAX_DEGREE) / rest
    lo, hi = 1.5, 4.0
    for _ in range(60):
        gamma = (lo + hi) / 2
        p = ks ** -gamma
        p /= p.sum()
        if (p * ks).sum() > target_mean:
            lo = gamma
        else:
            hi = gamma
    deg = np.concatenate(
        [np.ones(IAS_DEGREE_ONE, int), [IAS_MAX_DEGREE], rng.choice(ks, size=rest, p=p)]
    )
    excess = int(deg.sum()) - 2 * m
    body = np.arange(IAS_DEGREE_ONE + 1, n)
    while excess:
        i = int(rng.choice(body))
        if excess > 0 and deg[i] > 2:
            deg[i] -= 1
            excess -= 1
        elif excess < 0 and deg[i] < IAS_MAX_DEGREE - 1:
            deg[i] += 1
            excess += 1
    deg = deg[rng.permutation(n)]
    adj: list[set[int]] = [set() for _ in range(n)]
    # wire the hub first so its degree survives multi-edge removal
    hub = int(np.argmax(deg))
    w = deg.astype(float)
    w[hub] = 0
    partners = rng.choice(n, size=IAS_MAX_DEGREE, replace=False, p=w / w.sum())
    left = deg.copy()
    left[hub] = 0
    for b in partners.tolist():
        adj[hub].add(b)
        adj[b].add(hub)
        left[b] -= 1
    stubs = np.repeat(np.arange(n), np.maximum(left, 0))
    if len(stubs) % 2:
        stubs = stubs[:-1]
    rng.shuffle(stubs)
    for a, b in stubs.reshape(-1, 2).tolist():
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    _splice_components(adj, rng)
    count = sum(len(s) for s in adj) // 2
    stalled = False
    while count < m:
        short = np.repeat(np.arange(n), [max(int(deg[v]) - len(adj[v]), 0) for v in range(n)])
        if stalled or len(short) < 2:
            short = np.concatenate([short, np.repeat(np.arange(n), deg)])
        short = short[short != hub]
        rng.shuffle(short)
        before = count
        for a, b in short[: len(short) // 2 * 2].reshape(-1, 2).tolist():
            if count >= m:
                break
            if a != b and b not in adj[a]:
                adj[a].add(b)
                adj[b].add(a)
                count += 1
        stalled = count == before
    while count > m:
        a = int(rng.integers(n))
        nb = sorted(adj[a] - {hub})
        if len(adj[a]) > 2 and nb:
            b = nb[int(rng.integers(len(nb)))]
            if len(adj[b]) > 2:
                adj[a].discard(b)
                adj[b].discard(a)
                count -= 1
    arcs = [(a, b) for a in range(n) for b in sorted(adj[a]) if a < b]
    return Graph.from_arcs(n, arcs, directed=False)


def _splice_components(adj: list[set[int]], rng) -> None:
    """Merge every small component into the largest one.

    Swap an edge (c1, c2) of the small component with a non-bridge edge
    (a, b) of the giant one into (c1, a) and (c2, b); degrees are unchanged.
    """
    from .graph import _connected_without

    n = len(adj)
    comp = [-1] * n
    comps: list[list[int]] = []
    for s in range(n):
        if comp[s] >= 0:
            continue
        comp[s] = len(comps)
        members = [s]
        stack = [s]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if comp[v] < 0:
                    comp[v] = comp[s]
                    members.append(v)
                    stack.append(v)
        comps.append(members)
    giant = max(range(len(comps)), key=lambda c: len(comps[c]))
    giant_nodes = list(comps[giant])
    for c, members in enumerate(comps):
        if c == giant:
            continue
        c1 = members[0]
        if not adj[c1]:
            # isolated node: hang it on a random giant node
            a = giant_nodes[int(rng.integers(len(giant_nodes)))]
            adj[c1].add(a)
            adj[a].add(c1)
            giant_nodes.append(c1)
            continue
        c2 = min(adj[c1])
        while True:
            a = giant_nodes[int(rng.integers(len(giant_nodes)))]
            if not adj[a]:
                continue
            nb = sorted(adj[a])
            b = nb[int(rng.integers(len(nb)))]
            if a in (c1, c2) or b in (c1, c2) or c1 in adj[a] or c2 in adj[b]:
                continue
            if _connected_without(adj, a, b):
                break
        adj[c1].discard(c2)
        adj[c2].discard(c1)
        adj[a].discard(b)
        adj[b].discard(a)
        adj[c1].add(a)
        adj[a].add(c1)
        adj[c2].add(b)
        adj[b].add(c2)
        giant_nodes.extend(members)


BUILTIN = {
    "florentine": florentine_families,
    "pg-surrogate": power_grid_surrogate,
    "ias-surrogate": as_graph_surrogate,
}


def load_graph(spec: str, directed: bool = False) -> Graph:
    """A built-in name from :data:`BUILTIN` or a path to an edge-list file."""
    if spec in BUILTIN:
        return BUILTIN[spec]()
    return load_edge_list(Path(spec), directed=directed)
