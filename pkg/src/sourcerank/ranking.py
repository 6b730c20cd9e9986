"""Source rankings: cost-based (CR), tree-based (TR) and four baselines.

Every ranker returns a :class:`Ranking` over the whole infected set, best
candidate first.  Ties are broken by ascending node id.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Callable

import numpy as np
import scipy.linalg

from .diffusion import Observation
from .eif import InfectedView, Sweep, estimate_mu, sweep
from .graph import Graph, induced_infected_subgraph

ALGORITHMS = ("cr", "tr", "rum", "ecce", "netsleuth", "gau")


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Ranking:
    """``ordered`` is best-first; ``score`` direction is per algorithm
    (ascending for cr/tr/ecce/gau, descending for rum/netsleuth)."""

    ordered: list[int]
    score: dict[int, float]
    algorithm: str

    def rank_of(self, node: int) -> int:
        """1-based position of ``node``."""
        try:
            return self.ordered.index(node) + 1
        except ValueError:
            raise KeyError(f"node {node} not in {self.algorithm} ranking") from None

    def __len__(self) -> int:
        return len(self.ordered)


def write_rankings_csv(rankings: list[Ranking], g: Graph, fh: IO[str], header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(["rank", "node", "score", "algorithm"])
    for r in rankings:
        for i, v in enumerate(r.ordered, start=1):
            w.writerow([i, g.label(v), repr(float(r.score[v])), r.algorithm])


def _ascending(score: dict[int, float], algorithm: str) -> Ranking:
    return Ranking(sorted(score, key=lambda v: (score[v], v)), score, algorithm)


def _descending(score: dict[int, float], algorithm: str) -> Ranking:
    return Ranking(sorted(score, key=lambda v: (-score[v], v)), score, algorithm)


def _cost_ranking(obs: Observation, sw: Sweep, algorithm: str) -> Ranking:
    """Candidates by ascending cost (infinite ones by id), then the remaining
    observed nodes, which cannot be the source, by ascending timestamp."""
    ordered = sorted(sw.costs, key=lambda v: (sw.costs[v], v))
    rest = sorted((v for v in obs.infected if v not in sw.costs), key=lambda v: (obs.tau[v], v))
    score = dict(sw.costs)
    score.update({v: math.inf for v in rest})
    return Ranking(ordered + rest, score, algorithm)


def _tree_ranking(obs: Observation, sw: Sweep) -> Ranking:
    finite = [v for v, c in sw.costs.items() if c < math.inf]
    if not finite:
        r = _cost_ranking(obs, sw, "tr")
        return Ranking(r.ordered, r.score, "tr")
    best = min(finite, key=lambda v: (sw.costs[v], v))
    t = sw.trees[best].t
    return _ascending(dict(t), "tr")


def rank_cr(g: Graph, obs: Observation, mu: float | None = None) -> Ranking:
    return _cost_ranking(obs, sweep(g, obs, mu, "eif"), "cr")


def rank_tr(g: Graph, obs: Observation, mu: float | None = None) -> Ranking:
    return _tree_ranking(obs, sweep(g, obs, mu, "eif"))


def rank_cr_tr(
    g: Graph, obs: Observation, mu: float | None = None, view: InfectedView | None = None
) -> tuple[Ranking, Ranking]:
    """CR and TR from a single EIF sweep."""
    sw = sweep(g, obs, mu, "eif", view)
    return _cost_ranking(obs, sw, "cr"), _tree_ranking(obs, sw)


def rank_gau(
    g: Graph,
    obs: Observation,
    mu: float | None = None,
    view: InfectedView | None = None,
    strict: bool = False,
) -> Ranking:
    """CR with each candidate's plain BFS tree standing in for the EIF tree.

    ``strict`` charges infinity for BFS paths through observed nodes that
    are still waiting to be attached (see :func:`~sourcerank.eif.bfs_build_tree`).
    """
    method = "bfs-strict" if strict else "bfs"
    return _cost_ranking(obs, sweep(g, obs, mu, method, view), "gau")


def _bfs_subtree_sizes(succ, root: int, n: int) -> list[int] | None:
    parent = [-1] * n
    seen = bytearray(n)
    seen[root] = 1
    order = [root]
    i = 0
    while i < len(order):
        u = order[i]
        i += 1
        for v in succ[u]:
            if not seen[v]:
                seen[v] = 1
                parent[v] = u
                order.append(v)
    if len(order) < n:
        return None
    size = [1] * n
    for v in reversed(order[1:]):
        size[parent[v]] += size[v]
    return size


def rank_rumor_centrality(g: Graph, obs: Observation) -> Ranking:
    """Descending log rumor centrality of each node's BFS tree.

    ``log R(v) = log n! - sum_u log T_u``, ``T_u`` the subtree sizes of the
    BFS tree rooted at ``v``.  Nodes whose BFS tree misses part of the
    infected set score ``-inf``.
    """
    sub, nmap = induced_infected_subgraph(g, obs.infected)
    n = sub.node_count
    log_fact = math.lgamma(n + 1)
    score = {}
    for r in range(n):
        sizes = _bfs_subtree_sizes(sub.out_edges, r, n)
        score[nmap.to_parent[r]] = (
            -math.inf if sizes is None else log_fact - sum(math.log(s) for s in sizes)
        )
    return _descending(score, "rum")


def rank_eccentricity(g: Graph, obs: Observation) -> Ranking:
    """Ascending infection eccentricity inside the infected subgraph."""
    sub, nmap = induced_infected_subgraph(g, obs.infected)
    n = sub.node_count
    score = {}
    for r in range(n):
        dist = {r: 0}
        frontier = [r]
        d = 0
        while frontier:
            nxt = []
            for u in frontier:
                for v in sub.out_edges[u]:
                    if v not in dist:
                        dist[v] = d + 1
                        nxt.append(v)
            if nxt:
                d += 1
            frontier = nxt
        score[nmap.to_parent[r]] = float(d) if len(dist) == n else math.inf
    return _ascending(score, "ecce")


def infected_laplacian(g: Graph, obs: Observation) -> tuple[np.ndarray, list[int]]:
    """Principal submatrix of ``D - A`` on the infected rows and columns.

    Degrees count every neighbour in the full graph, so nodes on the
    boundary of the infected region keep a surplus on the diagonal.
    Direction is ignored (``A`` is symmetrised).
    """
    nodes = sorted(obs.infected)
    idx = {v: i for i, v in enumerate(nodes)}
    n = len(nodes)
    lap = np.zeros((n, n))
    for i, v in enumerate(nodes):
        nbrs = set(g.out_edges[v]) | set(g.in_edges[v])
        lap[i, i] = len(nbrs)
        for u in nbrs:
            j = idx.get(u)
            if j is not None:
                lap[i, j] = -1.0
    return lap, nodes


def power_iteration(
    apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of the symmetric operator ``apply``.

    Starts from the all-ones vector; stops when the Rayleigh quotient
    changes by less than ``tol`` (relative) between iterations.  On a
    symmetric operator the quotient converges twice as fast as the vector,
    which matters when the top two eigenvalues nearly coincide.
    """
    x = np.full(n, 1.0 / math.sqrt(n))
    lam = math.nan
    for it in range(1, max_iter + 1):
        y = apply(x)
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0, x
        prev, lam = lam, float(x @ y)
        y /= norm
        if y @ x < 0:
            y = -y
        x = y
        if abs(lam - prev) < tol * max(abs(lam), 1.0):
            power_iteration.last_iterations = it
            return lam, x
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def _shift_below_min(mat: np.ndarray, steps: int = 60) -> float:
    """Largest shift found by bisection that keeps ``mat - shift*I`` positive definite.

    Inverse iteration on the shifted matrix then converges at rate
    ``(l1 - shift) / (l2 - shift)``, fast even when the two smallest
    eigenvalues nearly coincide.
    """
    eye = np.eye(len(mat))
    lo = -1e-9 * max(1.0, float(np.abs(mat).max()))
    hi = float(np.diag(mat).min())
    for _ in range(steps):
        mid = (lo + hi) / 2
        try:
            scipy.linalg.cho_factor(mat - mid * eye)
        except np.linalg.LinAlgError:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
            break
    return lo


def netsleuth_scores(
    g: Graph, obs: Observation, variant: str = "smallest", tol: float = 1e-10, max_iter: int = 10_000
) -> dict[int, float]:
    """Absolute eigenvector entries of the infected Laplacian submatrix.

    ``variant="smallest"`` (default) takes the eigenvector of the smallest
    eigenvalue, found by power iteration on the inverse of a shifted copy
    (applied through a Cholesky factorisation).  ``variant="largest"`` runs
    power iteration on the matrix itself.
    """
    lap, nodes = infected_laplacian(g, obs)
    n = len(nodes)
    if n == 1:
        return {nodes[0]: 1.0}
    if variant == "smallest":
        factor = scipy.linalg.cho_factor(lap - _shift_below_min(lap) * np.eye(n))
        _, vec = power_iteration(lambda x: scipy.linalg.cho_solve(factor, x), n, tol, max_iter)
    elif variant == "largest":
        _, vec = power_iteration(lambda x: lap @ x, n, tol, max_iter)
    else:
        raise ValueError(f"unknown NETSLEUTH variant {variant!r}")
    return {v: float(abs(x)) for v, x in zip(nodes, vec)}


def rank_netsleuth(g: Graph, obs: Observation, variant: str = "smallest") -> Ranking:
    return _descending(netsleuth_scores(g, obs, variant), "netsleuth")


def rank_all(
    g: Graph, obs: Observation, algorithms=ALGORITHMS, mu: float | None = None
) -> list[Ranking]:
    """Run several rankers on one observation, sharing the EIF sweep."""
    out: dict[str, Ranking] = {}
    view = None
    if "cr" in algorithms or "tr" in algorithms or "gau" in algorithms:
        view = InfectedView(g, obs)
        if mu is None:
            mu = estimate_mu(g, obs, view)
    if "cr" in algorithms or "tr" in algorithms:
        out["cr"], out["tr"] = rank_cr_tr(g, obs, mu, view)
    if "gau" in algorithms:
        out["gau"] = rank_gau(g, obs, mu, view)
    if "rum" in algorithms:
        out["rum"] = rank_rumor_centrality(g, obs)
    if "ecce" in algorithms:
        out["ecce"] = rank_eccentricity(g, obs)
    if "netsleuth" in algorithms:
        out["netsleuth"] = rank_netsleuth(g, obs)
    return [out[a] for a in algorithms]
