"""Earliest-Infection-First: greedy construction of a low-cost spreading tree.

For a candidate root, observed nodes are attached one at a time in order of
their timestamps.  Each is hooked to the current tree through a minimum-hop
path that avoids the tree (except at its attachment point) and every
observed node still waiting to be attached.  Interior nodes of that path get
equally spaced times, which is optimal for a line with fixed end times.
Nodes left over at the end hang off the tree breadth-first, one ``mu`` per
hop, at no extra cost.

All functions work on the subgraph induced by the infected nodes.  Ties are
broken by ascending node id everywhere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

from .diffusion import Observation
from .graph import Graph, NodeMap, induced_infected_subgraph
from .spreading_tree import SpreadingTree

logger = logging.getLogger(__name__)

MU_FLOOR = 1e-9


class MuEstimationError(ValueError):
    pass


class NotACandidate(ValueError):
    pass


@dataclass(frozen=True)
class AttachStep:
    node: int
    anchor: int | None
    length: int | None
    gamma: float


@dataclass
class EifOutcome:
    """Tree, accumulated cost and per-iteration log for one root.

    When ``cost`` is infinite the tree is partial: it holds only what was
    built before the failing attachment.
    """

    root: int
    tree: SpreadingTree
    cost: float
    attach_log: list[AttachStep] = field(default_factory=list)

    def dump_log(self, labels=None) -> str:
        lab = (lambda v: labels[v]) if labels else (lambda v: v)
        lines = []
        for s in self.attach_log:
            anchor = "-" if s.anchor is None else lab(s.anchor)
            lines.append(f"{lab(s.node)} anchor={anchor} len={s.length} gamma={s.gamma:.6g}")
        return "\n".join(lines)


class InfectedView:
    """Infected subgraph in local ids plus the observation mapped onto it.

    Local ids follow ascending global id, so local tie-breaking matches the
    global one.
    """

    def __init__(self, g: Graph, obs: Observation):
        sub, nmap = induced_infected_subgraph(g, obs.infected)
        self.graph: Graph = sub
        self.nmap: NodeMap = nmap
        self.n = sub.node_count
        self.succ = sub.out_edges
        self.pred = sub.in_edges
        self.tau: list[float | None] = [None] * self.n
        for v, t in obs.tau.items():
            self.tau[nmap.to_sub[v]] = float(t)
        self.alpha: list[int] = sorted(
            (i for i in range(self.n) if self.tau[i] is not None),
            key=lambda i: (self.tau[i], i),
        )

    def candidates(self) -> list[int]:
        if not self.alpha:
            return list(range(self.n))
        earliest = self.tau[self.alpha[0]]
        return [i for i in range(self.n) if self.tau[i] is None or self.tau[i] == earliest]

    def to_global_tree(self, root: int, parent: Sequence[int], t: Sequence[float]) -> SpreadingTree:
        gid = self.nmap.to_parent
        return SpreadingTree(
            gid[root],
            {gid[v]: gid[p] for v, p in enumerate(parent) if p >= 0},
            {gid[v]: tv for v, tv in enumerate(t) if not math.isnan(tv)},
        )


def estimate_mu(g: Graph, obs: Observation, view: InfectedView | None = None) -> float:
    """Average per-hop delay over all pairs of observed nodes.

    Sum of |time differences| over sum of hop distances in the infected
    subgraph.  Distances are taken from the earlier node to the later one.
    Pairs with no connecting path are skipped with a warning.
    """
    if len(obs.tau) < 2:
        raise MuEstimationError(
            "at least two observed timestamps are needed to estimate mu; pass mu explicitly"
        )
    view = view or InfectedView(g, obs)
    alpha = view.alpha
    pos = {v: i for i, v in enumerate(alpha)}
    num = 0.0
    den = 0
    skipped = 0
    for v in alpha:
        dist = _hop_distances(view.succ, v)
        tv = view.tau[v]
        for w in alpha[pos[v] + 1 :]:
            d = dist.get(w)
            if d is None:
                skipped += 1
                continue
            num += abs(view.tau[w] - tv)
            den += d
    if skipped:
        logger.warning("estimate_mu: skipped %d observed pairs with no connecting path", skipped)
    if den == 0:
        raise MuEstimationError("no observed pair is connected; pass mu explicitly")
    return max(num / den, MU_FLOOR)


def _hop_distances(adj, source: int) -> dict[int, int]:
    dist = {source: 0}
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = d
                    nxt.append(v)
        frontier = nxt
    return dist


def candidate_set(obs: Observation) -> set[int]:
    """Nodes that could be the source: every unobserved infected node plus
    the observed node(s) with the earliest timestamp."""
    unobserved = {v for v in obs.infected if v not in obs.tau}
    if not obs.tau:
        return unobserved
    earliest = min(obs.tau.values())
    return unobserved | {v for v, t in obs.tau.items() if t == earliest}


def modified_bfs_paths(
    g: Graph, tree_nodes: set[int], alpha: Sequence[int], k: int
) -> dict[int, list[int]]:
    """Minimum-hop paths from tree nodes to ``alpha[k]``.

    Search runs backwards from ``alpha[k]``.  A branch stops at the first tree
    node it meets, and never passes through ``alpha[l]`` for ``l > k``.  The
    result maps each reached tree node ``m`` to its path ``[m, ..., alpha[k]]``;
    tree nodes missing from the map have no valid path.
    """
    target = alpha[k]
    if target in tree_nodes:
        raise ValueError("target already on the tree")
    blocked = set(alpha[k + 1 :])
    back = {target: None}
    frontier = [target]
    reached: list[int] = []
    while frontier:
        nxt = []
        for x in frontier:
            for p in g.in_edges[x]:
                if p in back:
                    continue
                back[p] = x
                if p in tree_nodes:
                    reached.append(p)
                elif p not in blocked:
                    nxt.append(p)
        frontier = nxt
    paths = {}
    for m in reached:
        path = [m]
        while path[-1] != target:
            path.append(back[path[-1]])
        paths[m] = path
    return paths


def _eif_local(view: InfectedView, root: int, mu: float, log: list | None = None):
    """EIF on local ids.  Returns (cost, parent, t)."""
    n = view.n
    pred = view.pred
    tau = view.tau
    in_tree = bytearray(n)
    pending = bytearray(n)
    t = [math.nan] * n
    parent = [-1] * n
    in_tree[root] = 1
    if tau[root] is not None:
        t[root] = tau[root]
    alpha = [v for v in view.alpha if v != root]
    for v in alpha:
        pending[v] = 1
    seen = [0] * n
    back = [-1] * n
    stamp = 0
    cost = 0.0

    for a in alpha:
        pending[a] = 0
        ta = tau[a]
        stamp += 1
        seen[a] = stamp
        frontier = [a]
        depth = 0
        best_m = -1
        best_gamma = math.inf
        best_len = 0
        bootstrap = math.isnan(t[root])
        while frontier:
            depth += 1
            nxt = []
            for x in frontier:
                for p in pred[x]:
                    if seen[p] == stamp:
                        continue
                    seen[p] = stamp
                    back[p] = x
                    if in_tree[p]:
                        if bootstrap:
                            # root has no time yet: back-date it at mu per hop, free of charge
                            gamma = 0.0
                        else:
                            tm = t[p]
                            if ta > tm:
                                gamma = depth * ((ta - tm) / depth - mu) ** 2
                            else:
                                gamma = math.inf
                        if gamma < best_gamma or (gamma == best_gamma and gamma < math.inf and p < best_m):
                            best_gamma, best_m, best_len = gamma, p, depth
                    elif not pending[p]:
                        nxt.append(p)
            frontier = nxt
        if best_m < 0:
            if log is not None:
                log.append(AttachStep(a, None, None, math.inf))
            return math.inf, parent, t
        if bootstrap:
            t[root] = ta - best_len * mu
        tm = t[best_m]
        step = (ta - tm) / best_len
        prev = best_m
        x = back[best_m]
        h = 1
        while x != a:
            t[x] = tm + h * step
            parent[x] = prev
            in_tree[x] = 1
            prev = x
            x = back[x]
            h += 1
        t[a] = ta
        parent[a] = prev
        in_tree[a] = 1
        cost += best_gamma
        if log is not None:
            log.append(AttachStep(a, best_m, best_len, best_gamma))

    if math.isnan(t[root]):
        t[root] = 0.0
    if not _complete_bfs(view, in_tree, parent, t, mu):
        return math.inf, parent, t
    return cost, parent, t


def _complete_bfs(view: InfectedView, in_tree, parent, t, mu) -> bool:
    """Hang every remaining node off the tree breadth-first, one mu per hop."""
    succ = view.succ
    frontier = [v for v in range(view.n) if in_tree[v]]
    left = view.n - len(frontier)
    while frontier and left:
        nxt = []
        for u in frontier:
            for v in succ[u]:
                if not in_tree[v]:
                    in_tree[v] = 1
                    parent[v] = u
                    t[v] = t[u] + mu
                    nxt.append(v)
                    left -= 1
        frontier = nxt
    return left == 0


def _bfs_tree_local(
    view: InfectedView, root: int, mu: float, log: list | None = None, strict: bool = False
):
    """The same attachment scheme with paths read off the BFS tree rooted at ``root``.

    Paths may run through observed nodes that are still waiting.  Such a
    node keeps its interpolated time and is skipped, free, when its turn
    comes, so the resulting tree need not match every observed time.
    With ``strict`` such paths cost infinity instead, which makes the
    result coincide with EIF whenever the infected subgraph is a tree.
    """
    n = view.n
    succ = view.succ
    tau = view.tau
    bfs_parent = [-1] * n
    order = [root]
    reached = bytearray(n)
    reached[root] = 1
    i = 0
    while i < len(order):
        u = order[i]
        i += 1
        for v in succ[u]:
            if not reached[v]:
                reached[v] = 1
                bfs_parent[v] = u
                order.append(v)
    t = [math.nan] * n
    parent = [-1] * n
    if len(order) < n:
        return math.inf, parent, t
    in_tree = bytearray(n)
    pending = bytearray(n)
    in_tree[root] = 1
    if tau[root] is not None:
        t[root] = tau[root]
    alpha = [v for v in view.alpha if v != root]
    for v in alpha:
        pending[v] = 1
    cost = 0.0
    for a in alpha:
        pending[a] = 0
        ta = tau[a]
        if in_tree[a]:
            # already placed as an interior node of an earlier path
            if log is not None:
                log.append(AttachStep(a, parent[a], 0, 0.0))
            continue
        path = [a]
        x = bfs_parent[a]
        while not in_tree[x]:
            path.append(x)
            x = bfs_parent[x]
        m = x
        length = len(path)
        if strict and any(pending[y] for y in path[1:]):
            if log is not None:
                log.append(AttachStep(a, m, length, math.inf))
            return math.inf, parent, t
        if math.isnan(t[root]):
            gamma = 0.0
            t[root] = ta - length * mu
        elif ta > t[m]:
            gamma = length * ((ta - t[m]) / length - mu) ** 2
        else:
            gamma = math.inf
        if log is not None:
            log.append(AttachStep(a, m, length, gamma))
        if gamma == math.inf:
            return math.inf, parent, t
        tm = t[m]
        step = (ta - tm) / length
        prev = m
        for h, y in enumerate(reversed(path), start=1):
            t[y] = tm + h * step if y != a else ta
            parent[y] = prev
            in_tree[y] = 1
            prev = y
        cost += gamma
    if math.isnan(t[root]):
        t[root] = 0.0
    for v in order:
        if not in_tree[v]:
            p = bfs_parent[v]
            parent[v] = p
            t[v] = t[p] + mu
            in_tree[v] = 1
    return cost, parent, t


def _bfs_strict_local(view: InfectedView, root: int, mu: float, log: list | None = None):
    return _bfs_tree_local(view, root, mu, log, strict=True)


_BUILDERS = {"eif": _eif_local, "bfs": _bfs_tree_local, "bfs-strict": _bfs_strict_local}


def eif_build_tree(
    g: Graph, obs: Observation, root: int, mu: float, view: InfectedView | None = None
) -> EifOutcome:
    """Build the EIF spreading tree rooted at ``root`` and its cost."""
    return _build(g, obs, root, mu, "eif", view)


def bfs_build_tree(
    g: Graph,
    obs: Observation,
    root: int,
    mu: float,
    view: InfectedView | None = None,
    strict: bool = False,
) -> EifOutcome:
    """Like :func:`eif_build_tree` but attaching along the BFS tree of ``root``."""
    return _build(g, obs, root, mu, "bfs-strict" if strict else "bfs", view)


def _build(g, obs, root, mu, method, view):
    if root not in candidate_set(obs):
        raise NotACandidate(f"node {g.label(root)} cannot be the source: it is observed later than others")
    view = view or InfectedView(g, obs)
    local_root = view.nmap.to_sub[root]
    log: list[AttachStep] = []
    cost, parent, t = _BUILDERS[method](view, local_root, mu, log)
    gid = view.nmap.to_parent
    log = [
        AttachStep(gid[s.node], None if s.anchor is None else gid[s.anchor], s.length, s.gamma)
        for s in log
    ]
    return EifOutcome(root, view.to_global_tree(local_root, parent, t), cost, log)


@dataclass
class Sweep:
    """Per-candidate results of one builder over an observation."""

    mu: float
    costs: dict[int, float]
    trees: dict[int, SpreadingTree]


def sweep(
    g: Graph,
    obs: Observation,
    mu: float | None = None,
    method: str = "eif",
    view: InfectedView | None = None,
) -> Sweep:
    """Run a tree builder for every candidate root."""
    view = view or InfectedView(g, obs)
    if mu is None:
        mu = estimate_mu(g, obs, view)
    build = _BUILDERS[method]
    costs: dict[int, float] = {}
    trees: dict[int, SpreadingTree] = {}
    gid = view.nmap.to_parent
    for r in view.candidates():
        cost, parent, t = build(view, r, mu)
        costs[gid[r]] = cost
        if cost < math.inf:
            trees[gid[r]] = view.to_global_tree(r, parent, t)
    return Sweep(mu, costs, trees)
