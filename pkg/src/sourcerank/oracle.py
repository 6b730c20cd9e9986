"""Exact minimum spreading-tree cost on small graphs.

Every spanning tree of the infected subgraph is enumerated, rooted at the
candidate, and given QP-optimal timestamps.  The QP is convex, so a primal
active-set method reaches its global optimum in finitely many steps.

Per tree, only the Steiner subtree spanned by the observed nodes costs
anything: unobserved branches hang off at ``mu`` per hop, and the path from
the root down to the Steiner subtree can be back-dated the same way.  The
Steiner subtree further splits at observed nodes into pieces that do not
interact, so the oracle caches one small QP per (piece, top node).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .diffusion import Observation
from .eif import InfectedView, candidate_set, estimate_mu, sweep
from .graph import Graph, GraphError, induced_infected_subgraph

EPS_FEAS = 1e-9
MAX_TREES = 10**7


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class QpSolution:
    times: dict[int, float]
    cost: float
    iterations: int


# ---- spanning trees ---------------------------------------------------------


class _UnionFind:
    """Union by size without path compression, so unions can be undone."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> tuple[int, int] | None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return None
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra, rb

    def undo(self, rec: tuple[int, int]) -> None:
        ra, rb = rec
        self.parent[rb] = rb
        self.size[ra] -= self.size[rb]


def _spans(n: int, edges: Sequence[tuple[int, int]]) -> bool:
    uf = _UnionFind(n)
    parts = n
    for a, b in edges:
        if uf.union(a, b):
            parts -= 1
    return parts == 1


def enumerate_spanning_trees(g: Graph, max_trees: int = MAX_TREES) -> Iterator[tuple[tuple[int, int], ...]]:
    """Yield every spanning tree of an undirected graph once, as sorted edge tuples.

    Recursive include/exclude over the sorted edge list.  An edge is
    included only if it joins two components, and excluded only if the
    chosen edges plus the edges still ahead can span the graph.
    """
    if g.directed:
        raise GraphError("spanning-tree enumeration needs an undirected graph")
    n = g.node_count
    edges = g.undirected_edges()
    if n == 0:
        return
    if not _spans(n, edges):
        raise GraphError("graph is disconnected: it has no spanning tree")
    uf = _UnionFind(n)
    chosen: list[tuple[int, int]] = []
    count = 0

    def rec(i: int) -> Iterator[tuple[tuple[int, int], ...]]:
        nonlocal count
        if len(chosen) == n - 1:
            count += 1
            if count > max_trees:
                raise OracleError(f"more than {max_trees} spanning trees; graph too large for the oracle")
            yield tuple(chosen)
            return
        if len(edges) - i < n - 1 - len(chosen):
            return
        a, b = edges[i]
        rec_union = uf.union(a, b)
        if rec_union:
            chosen.append(edges[i])
            yield from rec(i + 1)
            chosen.pop()
            uf.undo(rec_union)
        if _spans(n, chosen + edges[i + 1 :]):
            yield from rec(i + 1)

    yield from rec(0)


_TREE_CACHE: dict[tuple, list] = {}
_TREE_CACHE_LIMIT = 200_000


def _spanning_trees_cached(g: Graph, max_trees: int) -> Sequence[tuple[tuple[int, int], ...]]:
    """The tree list of ``g``, kept in memory when it is small enough to reuse."""
    key = (g.node_count, tuple(g.undirected_edges()))
    hit = _TREE_CACHE.get(key)
    if hit is not None:
        return hit
    trees = []
    for t in enumerate_spanning_trees(g, max_trees):
        trees.append(t)
        if len(trees) > _TREE_CACHE_LIMIT:
            # too many to hold: stream the rest instead
            return _chain(trees, g, max_trees)
    if len(_TREE_CACHE) >= 8:
        _TREE_CACHE.pop(next(iter(_TREE_CACHE)))
    _TREE_CACHE[key] = trees
    return trees


def _chain(head: list, g: Graph, max_trees: int):
    yield from head
    for i, t in enumerate(enumerate_spanning_trees(g, max_trees)):
        if i >= len(head):
            yield t


def count_spanning_trees(g: Graph) -> int:
    """Matrix-tree theorem: any cofactor of the Laplacian."""
    n = g.node_count
    if n <= 1:
        return 1
    lap = np.zeros((n, n))
    for a, b in g.undirected_edges():
        lap[a, a] += 1
        lap[b, b] += 1
        lap[a, b] -= 1
        lap[b, a] -= 1
    return int(round(np.linalg.det(lap[1:, 1:])))


# ---- the timestamp QP ------------------------------------------------------


def _orient(edges: Sequence[tuple[int, int]], root: int) -> tuple[dict[int, int], list[int]]:
    """Parent map and BFS order of an undirected tree rooted at ``root``."""
    adj: dict[int, list[int]] = {root: []}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    parent: dict[int, int] = {}
    order = [root]
    seen = {root}
    i = 0
    while i < len(order):
        u = order[i]
        i += 1
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                order.append(v)
    if len(order) != len(adj):
        raise ValueError("edge set is not a tree")
    return parent, order


def _start_point(
    parent: Mapping[int, int], order: Sequence[int], fixed: Mapping[int, float], mu: float, eps: float
) -> dict[int, float] | None:
    """A strictly feasible time vector, or None when none exists.

    Free nodes below an observed ancestor sit just after it; free nodes
    above observed descendants sit just before them; the rest follow their
    parent by ``mu``.
    """
    # lowest allowed time: latest observed ancestor plus eps per hop
    low: dict[int, float | None] = {}
    for u in order:
        p = parent.get(u)
        inherited = None if p is None else low[p]
        if p is not None and p in fixed:
            inherited = fixed[p]
        low[u] = None if inherited is None else inherited + eps
        if u in fixed and low[u] is not None and fixed[u] < low[u] - 1e-12 * max(1.0, abs(fixed[u])):
            return None
    # highest allowed time: earliest observed descendant minus eps per hop
    high: dict[int, float | None] = {u: None for u in order}
    for u in reversed(order):
        bound = fixed.get(u, high[u])
        p = parent.get(u)
        if p is not None and bound is not None:
            cand = bound - eps
            if high[p] is None or cand < high[p]:
                high[p] = cand
    t: dict[int, float] = {}
    for u in order:
        if u in fixed:
            t[u] = fixed[u]
        elif low[u] is not None:
            t[u] = low[u]
        elif high[u] is not None:
            t[u] = high[u]
        else:
            t[u] = t[parent[u]] + mu
    return t


def _active_set(A, b, C, d, x, max_iter: int = 10_000) -> tuple[np.ndarray, int]:
    """Minimise ``|Ax - b|^2`` subject to ``Cx >= d`` from a feasible ``x``.

    Primal active-set method.  Each step solves the equality-constrained
    problem on the working set through its KKT system.
    """
    n = A.shape[1]
    H = A.T @ A
    g0 = A.T @ b
    scale = max(1.0, float(np.abs(x).max()) if n else 1.0)
    tol = 1e-11 * scale
    W = [i for i in range(len(d)) if abs(C[i] @ x - d[i]) <= tol]
    # keep the working rows independent
    if len(W) > 1 and np.linalg.matrix_rank(C[W]) < len(W):
        keep: list[int] = []
        for i in W:
            rows = C[keep + [i]]
            if np.linalg.matrix_rank(rows) == len(keep) + 1:
                keep.append(i)
        W = keep
    for it in range(1, max_iter + 1):
        k = len(W)
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        if k:
            K[:n, n:] = -C[W].T
            K[n:, :n] = C[W]
        rhs = np.concatenate([g0, d[W]]) if k else g0
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        target, lam = sol[:n], sol[n:]
        p = target - x
        if np.abs(p).max(initial=0.0) <= tol:
            if k == 0 or lam.min() >= -1e-9 * scale:
                return x, it
            W.pop(int(np.argmin(lam)))
            continue
        step, block = 1.0, None
        cp = C @ p
        mask = cp < 0
        mask[W] = False
        if mask.any():
            idx = np.flatnonzero(mask)
            ratios = (d[idx] - C[idx] @ x) / cp[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                step, block = max(float(ratios[j]), 0.0), int(idx[j])
        x = x + step * p
        if block is not None:
            W.append(block)
    raise OracleError(f"active-set QP did not finish in {max_iter} iterations")


def _solve_rooted(
    parent: Mapping[int, int], order: Sequence[int], fixed: Mapping[int, float], mu: float, eps: float
) -> QpSolution:
    t0 = _start_point(parent, order, fixed, mu, eps)
    if t0 is None:
        return QpSolution({}, math.inf, 0)
    free = [u for u in order if u not in fixed]
    col = {u: j for j, u in enumerate(free)}
    m = len(parent)
    A = np.zeros((m, len(free)))
    b = np.zeros(m)
    C = np.zeros((m, len(free)))
    d = np.zeros(m)
    rows = []
    const = 0.0
    r = 0
    for c in order[1:]:
        p = parent[c]
        if c in fixed and p in fixed:
            gap = fixed[c] - fixed[p]
            if gap < eps - 1e-12 * max(1.0, abs(fixed[c])):
                return QpSolution({}, math.inf, 0)
            const += (gap - mu) ** 2
            continue
        # residual t_c - t_p - mu = A x - b, constraint t_c - t_p >= eps
        b[r] = mu
        d[r] = eps
        for node, sign in ((c, 1.0), (p, -1.0)):
            if node in fixed:
                b[r] -= sign * fixed[node]
                d[r] -= sign * fixed[node]
            else:
                A[r, col[node]] = sign
                C[r, col[node]] = sign
        rows.append((p, c))
        r += 1
    A, b, C, d = A[:r], b[:r], C[:r], d[:r]
    x0 = np.array([t0[u] for u in free])
    if free:
        x, iters = _active_set(A, b, C, d, x0)
    else:
        x, iters = x0, 0
    times = dict(fixed)
    times.update({u: float(x[col[u]]) for u in free})
    cost = const + sum((times[c] - times[p] - mu) ** 2 for p, c in rows)
    return QpSolution({u: times[u] for u in order}, cost, iters)


def min_cost_timestamps_qp(
    tree_edges: Sequence[tuple[int, int]], root: int, obs: Observation, mu: float, eps: float = EPS_FEAS
) -> QpSolution:
    """Optimal times on one rooted tree with the observed times held fixed.

    Minimises the quadratic cost subject to every child being at least
    ``eps`` later than its parent.  When the observed times contradict the
    tree's ancestry, the cost is infinite and ``times`` is empty.
    """
    if not obs.tau:
        raise ValueError("the QP needs at least one observed time")
    parent, order = _orient(tree_edges, root)
    if set(order) != set(obs.infected):
        raise ValueError("tree does not span the infected set")
    return _solve_rooted(parent, order, obs.tau, mu, eps)


# ---- exact node costs --------------------------------------------------------


class _PieceCache:
    def __init__(self, tau: Mapping[int, float], mu: float, eps: float):
        self.tau = tau
        self.mu = mu
        self.eps = eps
        self.store: dict[tuple[frozenset, int], float] = {}

    def cost(self, edges: frozenset, top: int) -> float:
        key = (edges, top)
        hit = self.store.get(key)
        if hit is None:
            hit = self._solve(edges, top)
            self.store[key] = hit
        return hit

    def _solve(self, edges: frozenset, top: int) -> float:
        tau = self.tau
        parent, order = _orient(sorted(edges), top)
        observed = [u for u in order if u in tau]
        kids = {u: 0 for u in order}
        for c in parent:
            kids[parent[c]] += 1
        # a path between its two observed ends has the equal-spacing optimum
        if top in tau and len(observed) == 2 and order[-1] in tau and max(kids.values()) <= 1:
            hops = len(edges)
            gap = tau[order[-1]] - tau[top]
            if gap < hops * self.eps:
                return math.inf
            return hops * (gap / hops - self.mu) ** 2
        fixed = {u: tau[u] for u in observed}
        return _solve_rooted(parent, order, fixed, self.mu, self.eps).cost


def _steiner_pieces(n: int, tree_adj: list[list[int]], observed: set[int]):
    """Steiner subtree over ``observed`` split at observed nodes.

    Returns (in_steiner flags, pieces as lists of edges, piece id per
    Steiner edge keyed by sorted pair).
    """
    deg = [len(a) for a in tree_adj]
    alive = [True] * n
    stack = [v for v in range(n) if deg[v] <= 1 and v not in observed]
    while stack:
        v = stack.pop()
        if not alive[v]:
            continue
        alive[v] = False
        for u in tree_adj[v]:
            if alive[u]:
                deg[u] -= 1
                if deg[u] <= 1 and u not in observed:
                    stack.append(u)
    pieces: list[list[tuple[int, int]]] = []
    seen_edge: set[tuple[int, int]] = set()
    for s in range(n):
        if not alive[s]:
            continue
        for u in tree_adj[s]:
            e = (min(s, u), max(s, u))
            if not alive[u] or e in seen_edge:
                continue
            # flood through unobserved Steiner nodes
            piece = []
            todo = [e]
            seen_edge.add(e)
            while todo:
                a, b = todo.pop()
                piece.append((a, b))
                for x in (a, b):
                    if x in observed:
                        continue
                    for y in tree_adj[x]:
                        f = (min(x, y), max(x, y))
                        if alive[y] and f not in seen_edge:
                            seen_edge.add(f)
                            todo.append(f)
            pieces.append(piece)
    return alive, pieces


def exact_costs(
    g: Graph,
    obs: Observation,
    mu: float,
    roots: Sequence[int] | None = None,
    eps: float = EPS_FEAS,
    max_trees: int = MAX_TREES,
) -> dict[int, float]:
    """Exact node cost for each root (default: the whole candidate set).

    Minimum over all spanning trees of the infected subgraph, rooted at the
    node, of the QP-optimal cost.
    """
    if g.directed:
        raise GraphError("the exact oracle needs an undirected graph")
    roots = sorted(candidate_set(obs)) if roots is None else list(roots)
    sub, nmap = induced_infected_subgraph(g, obs.infected)
    n = sub.node_count
    local_roots = [nmap.to_sub[v] for v in roots]
    if not obs.tau:
        return {v: 0.0 for v in roots}
    tau = {nmap.to_sub[v]: float(t) for v, t in obs.tau.items()}
    observed = set(tau)
    cache = _PieceCache(tau, mu, eps)
    best = {r: math.inf for r in local_roots}
    if n == 1:
        return {v: 0.0 for v in roots}
    steiner_memo: dict[frozenset, dict[int, float]] = {}
    for tree in _spanning_trees_cached(sub, max_trees):
        adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in tree:
            adj[a].append(b)
            adj[b].append(a)
        alive, pieces = _steiner_pieces(n, adj, observed)
        # nearest Steiner node for every node, by BFS out of the Steiner subtree
        attach = [-1] * n
        frontier = [v for v in range(n) if alive[v]]
        for v in frontier:
            attach[v] = v
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if attach[v] < 0:
                        attach[v] = attach[u]
                        nxt.append(v)
            frontier = nxt
        piece_sets = [frozenset(p) for p in pieces]
        # trees differing only off the Steiner subtree share its costs
        by_top = steiner_memo.setdefault(frozenset(piece_sets), {})
        for r in local_roots:
            top = attach[r]
            if top not in by_top:
                by_top[top] = _rooted_cost(top, adj, alive, pieces, piece_sets, cache)
            c = by_top[top]
            if c < best[r]:
                best[r] = c
    return {v: best[nmap.to_sub[v]] for v in roots}


def _rooted_cost(top, adj, alive, pieces, piece_sets, cache: _PieceCache) -> float:
    """Sum of piece costs with the Steiner subtree rooted at ``top``."""
    depth = {top: 0}
    frontier = [top]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if alive[v] and v not in depth:
                    depth[v] = depth[u] + 1
                    nxt.append(v)
        frontier = nxt
    total = 0.0
    for edges, fs in zip(pieces, piece_sets):
        head = min((x for e in edges for x in e), key=lambda x: depth[x])
        total += cache.cost(fs, head)
        if total == math.inf:
            break
    return total


def exact_node_cost(g: Graph, obs: Observation, v: int, mu: float, eps: float = EPS_FEAS) -> float:
    if v not in candidate_set(obs) and obs.tau:
        raise ValueError(f"node {g.label(v)} is not a candidate source")
    return exact_costs(g, obs, mu, [v], eps)[v]


@dataclass(frozen=True)
class RatioResult:
    """``ratio`` is inf when the exact optimum is 0 but EIF's is not;
    ``eif_cost`` and ``exact_cost`` are the two minima over candidates."""

    ratio: float
    eif_cost: float
    exact_cost: float
    mu: float


def approximation_ratio(g: Graph, obs: Observation, mu: float | None = None) -> RatioResult:
    """EIF's minimum cost over the exact minimum, both under the same ``mu``."""
    view = InfectedView(g, obs)
    if mu is None:
        mu = estimate_mu(g, obs, view)
    eif_best = min(sweep(g, obs, mu, "eif", view).costs.values())
    exact_best = min(exact_costs(g, obs, mu).values())
    if exact_best == 0:
        ratio = 1.0 if eif_best <= 1e-12 else math.inf
    else:
        ratio = eif_best / exact_best
    return RatioResult(ratio, eif_best, exact_best, mu)
