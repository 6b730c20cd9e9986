"""Spreading trees: rooted infection trees with a full time vector.

The quadratic cost sums ``(t_child - t_parent - mu)**2`` over tree edges; it
is the negative log-likelihood, up to constants, of Gaussian per-hop delays
with mean ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple

from .diffusion import Observation


@dataclass(frozen=True)
class SpreadingTree:
    root: int
    parent: dict[int, int]
    t: dict[int, float]

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(self.t)

    def edges(self) -> Iterable[tuple[int, int]]:
        """(parent, child) pairs."""
        return ((p, c) for c, p in self.parent.items())

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {v: [] for v in self.t}
        for p, c in self.edges():
            out[p].append(c)
        for kids in out.values():
            kids.sort()
        return out


def tree_cost(tree: SpreadingTree, mu: float) -> float:
    return sum((tree.t[c] - tree.t[p] - mu) ** 2 for p, c in tree.edges())


class TreeCheck(NamedTuple):
    ok: bool
    violation: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def is_feasible_consistent(tree: SpreadingTree, obs: Observation) -> TreeCheck:
    """Structural, feasibility and consistency check.

    Returns ``TreeCheck(False, reason)`` naming the first violation found.
    Raises ValueError when the tree does not cover exactly the infected set.
    """
    if tree.nodes != obs.infected:
        missing = sorted(obs.infected - tree.nodes)
        extra = sorted(tree.nodes - obs.infected)
        raise ValueError(f"tree/infected mismatch: missing {missing}, extra {extra}")
    if tree.root in tree.parent:
        return TreeCheck(False, f"root {tree.root} has a parent")
    if set(tree.parent) != tree.nodes - {tree.root}:
        orphans = sorted(tree.nodes - {tree.root} - set(tree.parent))
        return TreeCheck(False, f"nodes without parent: {orphans}")
    # every node must reach the root without revisiting
    depth: dict[int, int] = {tree.root: 0}
    for v in sorted(tree.nodes):
        path = []
        u = v
        while u not in depth:
            if u in path:
                return TreeCheck(False, f"cycle through node {u}")
            path.append(u)
            u = tree.parent[u]
            if u not in tree.t:
                return TreeCheck(False, f"parent {u} outside the tree")
        for w in reversed(path):
            depth[w] = depth[tree.parent[w]] + 1
    for p, c in sorted(tree.edges()):
        if not tree.t[c] > tree.t[p]:
            return TreeCheck(False, f"edge {p}->{c}: child time {tree.t[c]} <= parent {tree.t[p]}")
    for v in sorted(obs.tau):
        if tree.t[v] != obs.tau[v]:
            return TreeCheck(False, f"node {v}: time {tree.t[v]} != observed {obs.tau[v]}")
    return TreeCheck(True)


def assign_line_times(tau_start: float, tau_end: float, n: int) -> list[float]:
    """Minimum-cost times on an n-node line whose end times are fixed.

    All gaps come out equal: ``t_k = tau_start + (k - 1) * (tau_end - tau_start) / (n - 1)``.
    """
    if n < 2:
        raise ValueError("a line needs at least two nodes")
    if not tau_start < tau_end:
        raise ValueError("line end time must exceed start time")
    step = (tau_end - tau_start) / (n - 1)
    times = [tau_start + k * step for k in range(n)]
    times[-1] = tau_end
    return times


def path_cost(length: int, t_m: float, t_alpha: float, mu: float) -> float:
    """Cost of a ``length``-hop path with equally spaced interior times."""
    if length < 1:
        raise ValueError("path length must be at least 1")
    if not t_alpha > t_m:
        return math.inf
    return length * ((t_alpha - t_m) / length - mu) ** 2


def write_tree(tree: SpreadingTree, fh: IO[str], labels=None) -> None:
    """``child parent time`` per line, root first with an empty parent field."""

    def lab(v):
        return labels[v] if labels else v

    fh.write(f"{lab(tree.root)}  {tree.t[tree.root]!r}\n")
    for v in sorted(tree.t, key=lambda x: (tree.t[x], x)):
        if v != tree.root:
            fh.write(f"{lab(v)} {lab(tree.parent[v])} {tree.t[v]!r}\n")


def read_tree(fh: IO[str]) -> SpreadingTree:
    root = None
    parent: dict[int, int] = {}
    t: dict[int, float] = {}
    for line in fh:
        if not line.strip():
            continue
        parts = line.rstrip("\n").split(" ")
        child, par, time = int(parts[0]), parts[1], float(parts[2])
        t[child] = time
        if par == "":
            root = child
        else:
            parent[child] = int(par)
    if root is None:
        raise ValueError("tree file has no root line")
    return SpreadingTree(root, parent, t)
