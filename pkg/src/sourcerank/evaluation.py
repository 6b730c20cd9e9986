"""Experiment harness: simulate, observe, rank, score.

Every run draws from its own generator seeded with ``[seed, run]``, so a
run's outcome does not depend on which worker executes it or how many
workers there are.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import IO, Callable, Iterable, Sequence

import numpy as np

from .datasets import load_graph
from .diffusion import (
    DiffusionError,
    Observation,
    jitter_ties,
    reveal_count,
    reveal_time_biased,
    reveal_unbiased,
    sample_source_degree_binned,
    simulate_ic,
    simulate_trunc_gaussian,
    truncated_gaussian_mean,
)
from .eif import MuEstimationError
from .graph import Graph, remove_random_edges_connected
from .oracle import approximation_ratio
from .ranking import ALGORITHMS, Ranking, rank_all

logger = logging.getLogger(__name__)

RETRY_BUDGET = 100
MODELS = ("gaussian", "ic")
DISTRIBUTIONS = ("unbiased", "biased")


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    graph: str = "pg-surrogate"
    directed: bool = False
    model: str = "gaussian"
    mu: float = 100.0
    sigma: float = 100.0
    stop_count: int = 200
    bins: int = 10
    fraction: float = 0.5
    dist: str = "unbiased"
    algorithms: tuple[str, ...] = ALGORITHMS
    runs: int = 100
    gammas: tuple[float, ...] = (1.0, 5.0, 10.0, 20.0)
    seed: int = 0
    exclude_source: bool = True

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "gammas", tuple(float(x) for x in self.gammas))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie strictly between 0 and 1")
        if any(not 0 < x <= 100 for x in self.gammas):
            raise ValueError("gammas must lie in (0, 100]")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"dist must be one of {DISTRIBUTIONS}")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}")
        if self.stop_count < 1 or self.bins < 1:
            raise ValueError("stop_count and bins must be >= 1")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class RunRecord:
    run: int
    source: int
    infected_count: int
    ranks: dict[str, int]
    attempts: int = 1


@dataclass
class AccuracyReport:
    config: ExperimentConfig
    records: list[RunRecord]
    accuracy: dict[tuple[str, float], float] = field(default_factory=dict)

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "gamma", "accuracy", "runs", "config_hash"])
        h = self.config.config_hash()
        for (alg, gamma), acc in self.accuracy.items():
            w.writerow([alg, f"{gamma:g}", f"{acc:.6f}", len(self.records), h])

    def write_runs_csv(self, fh: IO[str], g: Graph | None = None) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "algorithm", "source", "rank", "infected_count"])
        for rec in self.records:
            src = g.label(rec.source) if g is not None else rec.source
            for alg in self.config.algorithms:
                w.writerow([rec.run, alg, src, rec.ranks[alg], rec.infected_count])


def top_cutoff(gamma: float, size: int) -> int:
    """Number of top positions covered by ``gamma`` percent of ``size``."""
    # the tiny slack absorbs float noise such as 10/100*200 = 20.000000000000004
    return math.ceil(gamma / 100 * size - 1e-9)


def gamma_accuracy(rankings: Sequence[Ranking], sources: Sequence[int], gamma: float) -> float:
    """Share of runs whose source sits within the top ``gamma`` percent."""
    if len(rankings) != len(sources):
        raise ValueError("rankings and sources must align by run")
    if not rankings:
        raise ValueError("no runs to score")
    hits = 0
    for r, s in zip(rankings, sources):
        if s not in r.score:
            raise ValueError(f"source {s} missing from the {r.algorithm} ranking")
        hits += r.rank_of(s) <= top_cutoff(gamma, len(r))
    return hits / len(rankings)


def _accuracy_table(cfg: ExperimentConfig, records: Sequence[RunRecord]) -> dict[tuple[str, float], float]:
    table = {}
    for alg in cfg.algorithms:
        for gamma in sorted(cfg.gammas):
            hits = sum(r.ranks[alg] <= top_cutoff(gamma, r.infected_count) for r in records)
            table[(alg, gamma)] = hits / len(records)
    return table


def fallback_mu(cfg: ExperimentConfig) -> float:
    """Per-hop delay used when an observation has too few timestamps to estimate it."""
    if cfg.model == "gaussian":
        return truncated_gaussian_mean(cfg.mu, cfg.sigma)
    return 1.0


def simulate_observation(g: Graph, cfg: ExperimentConfig, rng) -> tuple[int, Observation, int]:
    """One cascade plus its partial observation; returns (source, observation, attempts)."""
    for attempt in range(1, RETRY_BUDGET + 1):
        source = sample_source_degree_binned(g, cfg.bins, rng)
        try:
            if cfg.model == "gaussian":
                result = simulate_trunc_gaussian(g, source, cfg.stop_count, cfg.mu, cfg.sigma, rng)
            else:
                result = jitter_ties(simulate_ic(g, source, cfg.stop_count, rng), rng)
        except DiffusionError as exc:
            logger.debug("attempt %d from %s failed: %s", attempt, g.label(source), exc)
            continue
        count = reveal_count(cfg.fraction, len(result.times))
        reveal = reveal_unbiased if cfg.dist == "unbiased" else reveal_time_biased
        obs = reveal(result, count, rng, exclude_source=cfg.exclude_source)
        return source, obs, attempt
    raise ExperimentError(
        f"no cascade reached {cfg.stop_count} nodes in {RETRY_BUDGET} attempts on {cfg.graph}"
    )


def run_one(g: Graph, cfg: ExperimentConfig, run: int) -> RunRecord:
    rng = np.random.default_rng([cfg.seed, run])
    source, obs, attempts = simulate_observation(g, cfg, rng)
    try:
        rankings = rank_all(g, obs, cfg.algorithms)
    except MuEstimationError:
        rankings = rank_all(g, obs, cfg.algorithms, mu=fallback_mu(cfg))
    ranks = {r.algorithm: r.rank_of(source) for r in rankings}
    return RunRecord(run, source, len(obs.infected), ranks, attempts)


# one graph per worker process, installed by the pool initializer
_WORKER_GRAPH: Graph | None = None


def _install_graph(g: Graph) -> None:
    global _WORKER_GRAPH
    _WORKER_GRAPH = g


def _worker(job: tuple[Callable, ExperimentConfig, int]):
    fn, cfg, run = job
    return fn(_WORKER_GRAPH, cfg, run)


def default_jobs() -> int:
    return os.cpu_count() or 1


def map_runs(fn: Callable, g: Graph, cfg, runs: Iterable[int], jobs: int | None = None) -> list:
    """``fn(g, cfg, run)`` for every run, in run order, serially or on a process pool."""
    runs = list(runs)
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(runs) <= 1:
        return [fn(g, cfg, r) for r in runs]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_install_graph, initargs=(g,)) as ex:
        chunk = max(1, len(runs) // (4 * jobs))
        return list(ex.map(_worker, [(fn, cfg, r) for r in runs], chunksize=chunk))


def run_experiment(cfg: ExperimentConfig, graph: Graph | None = None, jobs: int | None = None) -> AccuracyReport:
    """Run the whole protocol; deterministic given ``cfg.seed`` whatever ``jobs`` is."""
    g = graph if graph is not None else load_graph(cfg.graph, cfg.directed)
    records = map_runs(run_one, g, cfg, range(cfg.runs), jobs)
    return AccuracyReport(cfg, records, _accuracy_table(cfg, records))


def reduced_graphs(g: Graph, removals: Sequence[int], seed: int) -> dict[int, Graph]:
    """Connectivity-preserving edge removals, nested: each level removes
    further edges from the previous one."""
    rng = np.random.default_rng([seed, 0x5EED])
    out: dict[int, Graph] = {}
    current, done = g, 0
    for k in sorted(set(removals)):
        if k < 0:
            raise ValueError("removal counts must be >= 0")
        if k > done:
            current = remove_random_edges_connected(current, k - done, rng)
            done = k
        out[k] = current
    return out


def run_edge_removal_experiment(
    cfg: ExperimentConfig, removals: Sequence[int], graph: Graph | None = None, jobs: int | None = None
) -> dict[int, AccuracyReport]:
    g = graph if graph is not None else load_graph(cfg.graph, cfg.directed)
    if g.directed:
        raise ValueError("edge removal needs an undirected graph")
    return {k: run_experiment(cfg, h, jobs) for k, h in reduced_graphs(g, removals, cfg.seed).items()}


def rank_real_cascade(
    g: Graph, obs: Observation, algorithms: Sequence[str] = ALGORITHMS, mu: float | None = None
) -> list[Ranking]:
    """Rank an observed cascade as given.

    When the infected set is only partly known, the rankings estimate the
    earliest infected node among those known rather than the true source.
    """
    obs.check_connected(g)
    return rank_all(g, obs, tuple(algorithms), mu)


# ---- approximation-ratio study ----------------------------------------------


@dataclass(frozen=True)
class RatioConfig:
    graph: str = "florentine"
    mu: float = 100.0
    sigma: float = 100.0
    stop_count: int | None = None
    bins: int = 1
    counts: tuple[int, ...] = (5, 8, 11, 14)
    runs: int = 500
    seed: int = 0
    estimate_mu: bool = False

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class RatioRecord:
    count: int
    run: int
    source: int
    ratio: float
    eif_cost: float
    exact_cost: float


@dataclass
class RatioReport:
    config: RatioConfig
    records: list[RatioRecord]

    def summary(self) -> dict[int, tuple[float, int, int]]:
        """Per timestamp count: (mean finite ratio, finite runs, infinite runs)."""
        out = {}
        for k in self.config.counts:
            rs = [r.ratio for r in self.records if r.count == k]
            fin = [x for x in rs if math.isfinite(x)]
            out[k] = (float(np.mean(fin)) if fin else math.nan, len(fin), len(rs) - len(fin))
        return out

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamps", "mean_ratio", "finite_runs", "infinite_runs", "config_hash"])
        h = self.config.config_hash()
        for k, (mean, fin, inf) in self.summary().items():
            w.writerow([k, f"{mean:.6f}", fin, inf, h])

    def write_runs_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamps", "run", "source", "ratio", "eif_cost", "exact_cost"])
        for r in self.records:
            w.writerow([r.count, r.run, r.source, repr(r.ratio), repr(r.eif_cost), repr(r.exact_cost)])


def _ratio_one(g: Graph, job: tuple[RatioConfig, int], index: int) -> RatioRecord:
    cfg, k = job
    rng = np.random.default_rng([cfg.seed, k, index])
    stop = cfg.stop_count or g.node_count
    source = sample_source_degree_binned(g, cfg.bins, rng)
    result = simulate_trunc_gaussian(g, source, stop, cfg.mu, cfg.sigma, rng)
    obs = reveal_unbiased(result, k, rng)
    rr = approximation_ratio(g, obs, None if cfg.estimate_mu else cfg.mu)
    if math.isinf(rr.ratio):
        logger.info("run %d (%d timestamps): exact cost 0, EIF cost %g", index, k, rr.eif_cost)
    return RatioRecord(k, index, source, rr.ratio, rr.eif_cost, rr.exact_cost)


def run_ratio_study(cfg: RatioConfig, graph: Graph | None = None, jobs: int | None = None) -> RatioReport:
    """Mean EIF/exact cost ratio per number of revealed timestamps.

    Runs whose exact optimum is 0 while EIF's is not give an infinite
    ratio; they are left out of the mean and counted separately.
    """
    g = graph if graph is not None else load_graph(cfg.graph)
    records: list[RatioRecord] = []
    for k in cfg.counts:
        records += map_runs(_ratio_one, g, (cfg, k), range(cfg.runs), jobs)
    return RatioReport(cfg, records)


def with_overrides(cfg, **changes):
    """``dataclasses.replace`` that ignores ``None`` values."""
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
