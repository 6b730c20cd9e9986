"""Contagion simulators and the samplers that turn a cascade into an observation."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .graph import Graph, GraphError, induced_infected_subgraph, weak_components


class DiffusionError(RuntimeError):
    pass


class ContagionExtinct(DiffusionError):
    """The process died before reaching the requested size; the caller may retry."""

    retryable = True


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class ContagionResult:
    source: int
    times: dict[int, float]

    @property
    def infected(self) -> frozenset[int]:
        return frozenset(self.times)

    def order(self) -> list[int]:
        return sorted(self.times, key=lambda v: (self.times[v], v))

    def validate(self, g: Graph) -> None:
        """Check the cascade invariants; raises DiffusionError on violation."""
        ts = self.times[self.source]
        for v, t in self.times.items():
            if v == self.source:
                continue
            if not t > ts:
                raise DiffusionError(f"node {v} infected no later than the source")
            if not any(u in self.times and self.times[u] < t for u in g.in_edges[v]):
                raise DiffusionError(f"node {v} has no earlier-infected in-neighbour")


@dataclass(frozen=True)
class Observation:
    """Infected set plus the revealed subset of infection times.

    A node in ``infected`` but missing from ``tau`` has an unknown time.
    """

    infected: frozenset[int]
    tau: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "infected", frozenset(self.infected))
        extra = set(self.tau) - self.infected
        if extra:
            raise ValueError(f"timestamps given for non-infected nodes {sorted(extra)}")

    @property
    def observed(self) -> list[int]:
        """Observed nodes sorted by (time, id)."""
        return sorted(self.tau, key=lambda v: (self.tau[v], v))

    def check_connected(self, g: Graph) -> None:
        sub, nmap = induced_infected_subgraph(g, self.infected)
        comps = weak_components(sub)
        if len(comps) > 1:
            listed = [[g.label(nmap.to_parent[i]) for i in c] for c in comps]
            raise GraphError(f"infected subgraph has {len(comps)} components: {listed}")


def truncated_gaussian_delays(mu: float, sigma: float, size: int, rng) -> np.ndarray:
    """Gaussian(mu, sigma^2) draws conditioned on being strictly positive.

    Rejection sampling: non-positive draws are redrawn.
    """
    if sigma == 0:
        return np.full(size, float(mu))
    out = rng.normal(mu, sigma, size)
    bad = out <= 0
    while bad.any():
        out[bad] = rng.normal(mu, sigma, int(bad.sum()))
        bad = out <= 0
    return out


def truncated_gaussian_mean(mu: float, sigma: float) -> float:
    """Analytic mean of a normal truncated to (0, inf)."""
    if sigma == 0:
        return mu
    a = -mu / sigma
    phi = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
    tail = 0.5 * math.erfc(a / math.sqrt(2))
    return mu + sigma * phi / tail


def simulate_trunc_gaussian(
    g: Graph, source: int, stop_count: int, mu: float, sigma: float, rng
) -> ContagionResult:
    """Continuous-time SI cascade with truncated-Gaussian per-arc delays.

    Each arc out of a newly infected node gets one delay; a node's infection
    time is its earliest arrival.  Stops once ``stop_count`` nodes are
    infected.  The source is infected at time 0.
    """
    if stop_count < 1:
        raise ValueError("stop_count must be at least 1")
    if mu <= 0 or sigma < 0:
        raise ValueError("need mu > 0 and sigma >= 0")
    times: dict[int, float] = {}
    heap: list[tuple[float, int]] = [(0.0, source)]
    while heap and len(times) < stop_count:
        t, u = heapq.heappop(heap)
        if u in times:
            continue
        times[u] = t
        nbrs = [v for v in g.out_edges[u] if v not in times]
        if nbrs:
            for v, d in zip(nbrs, truncated_gaussian_delays(mu, sigma, len(nbrs), rng)):
                heapq.heappush(heap, (t + float(d), v))
    if len(times) < stop_count:
        raise DiffusionError(
            f"only {len(times)} nodes reachable from {g.label(source)}, need {stop_count}"
        )
    return ContagionResult(source, times)


def simulate_ic(
    g: Graph,
    source: int,
    stop_count: int,
    rng,
    edge_prob: float | Mapping[tuple[int, int], float] | None = None,
) -> ContagionResult:
    """Time-slotted independent cascade.

    Arc probabilities are drawn uniformly on (0, 1) once per run unless
    ``edge_prob`` fixes them (a constant or a per-arc mapping).  A node
    infected in slot ``t - 1`` gets one attempt per out-arc in slot ``t``.
    When the last slot overshoots ``stop_count``, a uniform random subset of
    its new infections is kept.
    """
    if stop_count < 1:
        raise ValueError("stop_count must be at least 1")
    if edge_prob is None:
        offsets = np.cumsum([0] + [len(vs) for vs in g.out_edges])
        probs = rng.random(int(offsets[-1]))

        def p(u: int, j: int) -> float:
            return probs[offsets[u] + j]

    elif isinstance(edge_prob, Mapping):

        def p(u: int, j: int) -> float:
            return edge_prob[(u, g.out_edges[u][j])]

    else:
        const = float(edge_prob)

        def p(u: int, j: int) -> float:
            return const

    times: dict[int, float] = {source: 0.0}
    frontier = [source]
    slot = 0
    while len(times) < stop_count:
        slot += 1
        new: list[int] = []
        fresh: set[int] = set()
        for u in frontier:
            for j, v in enumerate(g.out_edges[u]):
                if v in times or v in fresh:
                    continue
                if rng.random() < p(u, j):
                    fresh.add(v)
                    new.append(v)
        if not new:
            raise ContagionExtinct(
                f"cascade from {g.label(source)} died at {len(times)} nodes"
            )
        room = stop_count - len(times)
        if len(new) > room:
            new = sorted(rng.choice(new, size=room, replace=False).tolist())
        for v in new:
            times[v] = float(slot)
        frontier = sorted(new)
    return ContagionResult(source, times)


def jitter_ties(result: ContagionResult, rng, scale: float = 1e-9) -> ContagionResult:
    """Add a uniform [0, scale) offset to every non-source time.

    Slotted simulators produce equal timestamps, which strict feasibility
    would otherwise reject.
    """
    times = {
        v: (t if v == result.source else t + scale * float(rng.random()))
        for v, t in result.times.items()
    }
    return ContagionResult(result.source, times)


def degree_bins(degrees: Sequence[int], bins: int) -> list[list[int]]:
    """Group node indices: bin m < bins holds degree m, the last bin degree >= bins.

    Degree-0 nodes belong to no bin.  Empty bins are dropped.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    grouped: list[list[int]] = [[] for _ in range(bins)]
    for v, d in enumerate(degrees):
        if d <= 0:
            continue
        grouped[min(d, bins) - 1].append(v)
    return [b for b in grouped if b]


def sample_source_degree_binned(g: Graph, bins: int, rng) -> int:
    """Pick a bin uniformly, then a node uniformly inside it."""
    groups = degree_bins([g.degree(v) for v in range(g.node_count)], bins)
    if not groups:
        raise GraphError("graph has no node with positive degree")
    b = groups[int(rng.integers(len(groups)))]
    return b[int(rng.integers(len(b)))]


def reveal_count(fraction: float, infected: int) -> int:
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    # round half up
    return int(math.floor(fraction * infected + 0.5))


def _pool(result: ContagionResult, count: int, exclude_source: bool) -> list[int]:
    pool = sorted(v for v in result.times if not (exclude_source and v == result.source))
    if count > len(pool):
        raise SamplingError(f"cannot reveal {count} timestamps from {len(pool)} eligible nodes")
    return pool


def reveal_unbiased(
    result: ContagionResult, count: int, rng, exclude_source: bool = True
) -> Observation:
    """Reveal ``count`` timestamps chosen uniformly without replacement."""
    pool = _pool(result, count, exclude_source)
    picked = rng.choice(len(pool), size=count, replace=False) if count else []
    return Observation(result.infected, {pool[i]: result.times[pool[i]] for i in picked})


def reveal_time_biased(
    result: ContagionResult, count: int, rng, exclude_source: bool = True
) -> Observation:
    """Reveal timestamps one at a time, each pick proportional to t_i - t_source."""
    pool = _pool(result, count, exclude_source)
    ts = result.times[result.source]
    weights = np.array([result.times[v] - ts for v in pool], dtype=float)
    if any(w <= 0 for v, w in zip(pool, weights) if v != result.source):
        raise SamplingError("time-biased sampling needs every time strictly after the source")
    remaining = list(range(len(pool)))
    chosen = {}
    for _ in range(count):
        w = weights[remaining]
        total = w.sum()
        if total <= 0:
            j = int(rng.integers(len(remaining)))
        else:
            j = int(np.searchsorted(np.cumsum(w), rng.random() * total, side="right"))
            j = min(j, len(remaining) - 1)
        v = pool[remaining.pop(j)]
        chosen[v] = result.times[v]
    return Observation(result.infected, chosen)


def sample_observed_unbiased(result: ContagionResult, fraction: float, rng) -> Observation:
    return reveal_unbiased(result, reveal_count(fraction, len(result.times)), rng)


def sample_observed_time_biased(result: ContagionResult, fraction: float, rng) -> Observation:
    return reveal_time_biased(result, reveal_count(fraction, len(result.times)), rng)


# ---- observation / ground-truth files -------------------------------------------


def _fmt_time(t: float) -> str:
    return repr(float(t))


def write_observation(obs: Observation, g: Graph, fh: IO[str]) -> None:
    """One line per infected node, ``label [time]``, in node-id order."""
    for v in sorted(obs.infected):
        if v in obs.tau:
            fh.write(f"{g.label(v)} {_fmt_time(obs.tau[v])}\n")
        else:
            fh.write(f"{g.label(v)}\n")


def read_observation(fh: IO[str] | Iterable[str], g: Graph) -> Observation:
    infected: set[int] = set()
    tau: dict[int, float] = {}
    for lineno, line in enumerate(fh, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) > 2:
            raise ValueError(f"line {lineno}: expected 'node [time]'")
        try:
            v = g.index_of(parts[0])
        except KeyError:
            raise ValueError(f"line {lineno}: node {parts[0]!r} not in graph") from None
        infected.add(v)
        if len(parts) == 2:
            try:
                tau[v] = float(parts[1])
            except ValueError:
                raise ValueError(f"line {lineno}: bad time {parts[1]!r}") from None
    return Observation(frozenset(infected), tau)


def write_ground_truth(result: ContagionResult, g: Graph, fh: IO[str]) -> None:
    fh.write(f"# source {g.label(result.source)}\n")
    for v in result.order():
        fh.write(f"{g.label(v)} {_fmt_time(result.times[v])}\n")


def read_ground_truth(fh: IO[str] | Iterable[str], g: Graph) -> ContagionResult:
    source = None
    times: dict[int, float] = {}
    for line in fh:
        s = line.strip()
        if s.startswith("# source"):
            source = g.index_of(s.split()[2])
        elif s and not s.startswith("#"):
            lab, t = s.split()
            times[g.index_of(lab)] = float(t)
    if source is None:
        raise ValueError("ground-truth file lacks a '# source' line")
    return ContagionResult(source, times)
