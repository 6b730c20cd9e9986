from __future__ import annotations

import io
import itertools
import math

import numpy as np
import pytest
from scipy import stats

from sourcerank.diffusion import (
    ContagionExtinct,
    ContagionResult,
    DiffusionError,
    Observation,
    SamplingError,
    degree_bins,
    jitter_ties,
    read_ground_truth,
    read_observation,
    reveal_count,
    reveal_time_biased,
    sample_observed_time_biased,
    sample_observed_unbiased,
    sample_source_degree_binned,
    simulate_ic,
    simulate_trunc_gaussian,
    truncated_gaussian_delays,
    truncated_gaussian_mean,
    write_ground_truth,
    write_observation,
)
from sourcerank.datasets import florentine_families
from sourcerank.graph import Graph, bfs_distances

from conftest import path_graph, random_connected, star_graph


def test_sigma_zero_path_times_are_hop_multiples(rng):
    g = path_graph(6)
    res = simulate_trunc_gaussian(g, 0, 6, 7.5, 0.0, rng)
    assert res.times == {k: 7.5 * k for k in range(6)}


def test_sigma_zero_deterministic():
    g = random_connected(30, 20, np.random.default_rng(0))
    a = simulate_trunc_gaussian(g, 3, 25, 2.0, 0.0, np.random.default_rng(1))
    b = simulate_trunc_gaussian(g, 3, 25, 2.0, 0.0, np.random.default_rng(99))
    assert a.times == b.times


def test_simulation_stops_at_stop_count_and_validates(rng):
    g = random_connected(80, 60, rng)
    res = simulate_trunc_gaussian(g, 0, 40, 100, 100, rng)
    assert len(res.times) == 40
    res.validate(g)
    assert min(res.times, key=res.times.get) == 0


def test_unreachable_stop_count_errors(rng):
    g = Graph.from_arcs(3, [(0, 1)], directed=True)
    with pytest.raises(DiffusionError):
        simulate_trunc_gaussian(g, 0, 3, 1, 1, rng)


def test_validate_catches_orphan():
    g = path_graph(3)
    with pytest.raises(DiffusionError):
        ContagionResult(0, {0: 0.0, 2: 1.0}).validate(g)
    with pytest.raises(DiffusionError):
        ContagionResult(1, {0: 0.0, 1: 1.0}).validate(g)


def test_truncated_delay_mean_matches_closed_form():
    # DERIVED: truncated-normal first moment, 3 standard errors
    mu, sigma, n = 100.0, 100.0, 100_000
    d = truncated_gaussian_delays(mu, sigma, n, np.random.default_rng(2))
    assert (d > 0).all()
    se = d.std() / math.sqrt(n)
    assert abs(d.mean() - truncated_gaussian_mean(mu, sigma)) < 3 * se


def test_ic_all_ones_gives_hop_distance(rng):
    g = random_connected(40, 30, rng)
    res = simulate_ic(g, 5, 40, rng, edge_prob=1.0)
    dist = bfs_distances(g, 5)
    assert res.times == {v: float(d) for v, d in dist.items()}


def test_ic_all_zero_is_extinct(rng):
    with pytest.raises(ContagionExtinct) as err:
        simulate_ic(path_graph(4), 0, 2, rng, edge_prob=0.0)
    assert err.value.retryable


def test_ic_star_probability_vs_enumeration():
    # DERIVED: P(at least one leaf infected | p) over 3 independent arcs,
    # stop_count 2 means success iff some leaf fires in slot 1.
    p = 0.3
    g = star_graph(3)
    exact = sum(
        p ** sum(o) * (1 - p) ** (3 - sum(o)) for o in itertools.product((0, 1), repeat=3) if sum(o) >= 1
    )
    rng = np.random.default_rng(3)
    n, hits = 20_000, 0
    for _ in range(n):
        try:
            simulate_ic(g, 0, 2, rng, edge_prob=p)
            hits += 1
        except ContagionExtinct:
            pass
    se = math.sqrt(exact * (1 - exact) / n)
    assert abs(hits / n - exact) < 4 * se


def test_ic_truncates_last_slot(rng):
    res = simulate_ic(star_graph(10), 0, 4, rng, edge_prob=1.0)
    assert len(res.times) == 4
    assert sorted(res.times.values()) == [0.0, 1.0, 1.0, 1.0]


def test_jitter_breaks_ties_keeps_order(rng):
    res = simulate_ic(star_graph(5), 0, 6, rng, edge_prob=1.0)
    j = jitter_ties(res, rng)
    leaf_times = [j.times[v] for v in range(1, 6)]
    assert len(set(leaf_times)) == 5
    assert all(1.0 <= t < 1.0 + 1e-9 for t in leaf_times)
    assert j.times[0] == 0.0


def test_degree_bins_grouping():
    assert degree_bins([1, 1, 1, 5], 2) == [[0, 1, 2], [3]]
    assert degree_bins([0, 3, 2], 1) == [[1, 2]]


def test_degree_binned_hub_half(rng):
    # DERIVED: leaves in bin 1, hub alone in bin 2
    g = star_graph(5)
    draws = [sample_source_degree_binned(g, 2, rng) for _ in range(20_000)]
    assert draws.count(0) / len(draws) == pytest.approx(0.5, abs=0.015)


def test_m1_is_uniform(rng):
    g = florentine_families()
    draws = np.bincount([sample_source_degree_binned(g, 1, rng) for _ in range(15_000)], minlength=15)
    assert stats.chisquare(draws).pvalue > 1e-3


def _cascade(n=200, seed=0):
    rng = np.random.default_rng(seed)
    times = {v: float(v) for v in range(n)}
    return ContagionResult(0, times), rng


def test_unbiased_reveals_half_without_source():
    res, rng = _cascade()
    obs = sample_observed_unbiased(res, 0.5, rng)
    assert len(obs.tau) == 100
    assert 0 not in obs.tau
    assert obs.infected == res.infected


def test_unbiased_two_nodes_reveals_non_source(rng):
    res = ContagionResult(0, {0: 0.0, 1: 3.0})
    obs = sample_observed_unbiased(res, 0.5, rng)
    assert obs.tau == {1: 3.0}


def test_unbiased_count_too_large(rng):
    res = ContagionResult(0, {0: 0.0, 1: 3.0})
    with pytest.raises(SamplingError):
        sample_observed_unbiased(res, 0.9, rng)


def test_reveal_count_rounding():
    assert reveal_count(0.5, 200) == 100
    assert reveal_count(0.5, 3) == 2
    with pytest.raises(ValueError):
        reveal_count(1.0, 10)


def test_unbiased_frequency_uniform():
    # DERIVED: chi-square on per-node inclusion counts
    res, rng = _cascade(n=11)
    counts = np.zeros(11)
    for _ in range(10_000):
        for v in sample_observed_unbiased(res, 0.3, rng).tau:
            counts[v] += 1
    assert counts[0] == 0
    assert stats.chisquare(counts[1:]).pvalue > 1e-3


def test_biased_equal_offsets_half(rng):
    res = ContagionResult(0, {0: 0.0, 1: 2.0, 2: 2.0})
    firsts = [next(iter(reveal_time_biased(res, 1, rng).tau)) for _ in range(20_000)]
    assert firsts.count(1) / len(firsts) == pytest.approx(0.5, abs=0.015)


def test_biased_offsets_one_and_three(rng):
    res = ContagionResult(0, {0: 0.0, 1: 1.0, 2: 3.0})
    firsts = [next(iter(reveal_time_biased(res, 1, rng).tau)) for _ in range(20_000)]
    assert firsts.count(2) / len(firsts) == pytest.approx(0.75, abs=0.015)


def test_biased_first_pick_distribution():
    # DERIVED: empirical frequencies vs p_i = (t_i - t_s) / sum
    res = ContagionResult(0, {0: 0.0, 1: 1.0, 2: 2.0, 3: 4.0, 4: 8.0})
    rng = np.random.default_rng(5)
    counts = np.zeros(4)
    n = 100_000
    for _ in range(n):
        counts[next(iter(reveal_time_biased(res, 1, rng).tau)) - 1] += 1
    expected = np.array([1, 2, 4, 8]) / 15 * n
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_biased_favours_later_nodes():
    res, rng = _cascade()
    ub = np.mean([np.mean(list(sample_observed_unbiased(res, 0.3, rng).tau.values())) for _ in range(300)])
    bi = np.mean([np.mean(list(sample_observed_time_biased(res, 0.3, rng).tau.values())) for _ in range(300)])
    assert bi > ub


def test_observation_rejects_foreign_timestamp():
    with pytest.raises(ValueError):
        Observation(frozenset({0}), {1: 2.0})


def test_observation_and_truth_round_trip(rng):
    g = florentine_families()
    res = simulate_trunc_gaussian(g, 2, 10, 100, 100, rng)
    obs = sample_observed_unbiased(res, 0.5, rng)
    buf = io.StringIO()
    write_observation(obs, g, buf)
    back = read_observation(io.StringIO(buf.getvalue()), g)
    assert back == obs
    buf = io.StringIO()
    write_ground_truth(res, g, buf)
    truth = read_ground_truth(io.StringIO(buf.getvalue()), g)
    assert truth.source == res.source and truth.times == res.times


def test_read_observation_unknown_node():
    g = florentine_families()
    with pytest.raises(ValueError, match="line 1"):
        read_observation(["Nobody 3.0\n"], g)
