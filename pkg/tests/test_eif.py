from __future__ import annotations

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sourcerank.diffusion import (
    Observation,
    sample_observed_unbiased,
    simulate_trunc_gaussian,
)
from sourcerank.eif import (
    MuEstimationError,
    NotACandidate,
    InfectedView,
    candidate_set,
    eif_build_tree,
    estimate_mu,
    modified_bfs_paths,
    sweep,
)
from sourcerank.graph import Graph
from sourcerank.spreading_tree import assign_line_times, is_feasible_consistent, path_cost, tree_cost

from conftest import path_graph, random_connected


MU_FIG = 36.94


def test_mu_three_node_path():
    g = path_graph(3)
    assert estimate_mu(g, Observation(frozenset(range(3)), {0: 0.0, 2: 20.0})) == 10


def test_mu_four_node_path():
    g = path_graph(4)
    obs = Observation(frozenset(range(4)), {0: 0.0, 2: 20.0, 3: 33.0})
    assert estimate_mu(g, obs) == pytest.approx(11)


def test_mu_needs_two_timestamps():
    with pytest.raises(MuEstimationError, match="pass mu explicitly"):
        estimate_mu(path_graph(3), Observation(frozenset(range(3)), {1: 4.0}))


def test_mu_skips_unreachable_pairs(caplog):
    g = Graph.from_arcs(4, [(0, 1), (2, 3)], directed=False)
    obs = Observation(frozenset(range(4)), {0: 0.0, 1: 5.0, 2: 1.0})
    assert estimate_mu(g, obs) == 5
    assert "skipped" in caplog.text


def test_mu_floor():
    g = path_graph(2)
    assert estimate_mu(g, Observation(frozenset(range(2)), {0: 1.0, 1: 1.0})) == 1e-9


def test_candidate_set_cases():
    obs = Observation(frozenset("abcd"), {"a": 5, "b": 7})
    assert candidate_set(obs) == {"a", "c", "d"}
    assert candidate_set(Observation(frozenset({1, 2}))) == {1, 2}
    assert candidate_set(Observation(frozenset({1, 2, 3}), {1: 3.0, 2: 1.0, 3: 2.0})) == {2}


def _fig_ids(g, *labels):
    return [g.index_of(x) for x in labels]


def test_worked_example_third_attachment_paths(worked_example):
    g, obs = worked_example
    n10, n6, n7, n8, n12, n9, n13, n1 = _fig_ids(g, 10, 6, 7, 8, 12, 9, 13, 1)
    alpha = _fig_ids(g, 6, 12, 13, 1)
    tree = {n10, n6, n7, n8, n12}
    paths = modified_bfs_paths(g, tree, alpha, 2)
    assert paths[n7] == [n7, n9, n13]
    assert n12 not in paths
    assert paths[n10] == [n10, n13]


def test_modified_path_adjacent_root():
    g = path_graph(2)
    assert modified_bfs_paths(g, {0}, [1], 0) == {0: [0, 1]}


def test_worked_example_rooted_at_10(worked_example):
    g, obs = worked_example
    out = eif_build_tree(g, obs, g.index_of(10), MU_FIG)
    log = out.attach_log
    assert [g.label(s.node) for s in log] == [6, 12, 13, 1]
    assert log[0].gamma == 0
    assert log[1].gamma == pytest.approx(28.09, abs=1e-2)
    assert g.label(log[2].anchor) == 7 and log[2].length == 2
    assert sum(s.gamma for s in log[:3]) == pytest.approx(89.92, abs=1e-2)
    t = out.tree.t
    assert t[g.index_of(9)] == pytest.approx(minutes_of("7:28"), abs=0.5)
    assert t[g.index_of(10)] == pytest.approx(minutes_of("5:28"), abs=0.1)
    for lab, hhmm in (("7", "6:45"), ("8", "7:25")):
        assert t[g.index_of(lab)] == pytest.approx(minutes_of(hhmm), abs=1e-2)
    assert is_feasible_consistent(out.tree, obs)


def minutes_of(hhmm):
    h, m = hhmm.split(":")
    return 60 * int(h) + int(m)


def test_singleton_tree():
    g = Graph.from_arcs(1, [], directed=False)
    out = eif_build_tree(g, Observation(frozenset({0})), 0, 5.0)
    assert out.cost == 0 and out.tree.t == {0: 0.0} and out.tree.parent == {}


def test_not_a_candidate(worked_example):
    g, obs = worked_example
    with pytest.raises(NotACandidate):
        eif_build_tree(g, obs, g.index_of(12), MU_FIG)


@pytest.mark.parametrize("n", [2, 3, 5, 9, 17])
def test_line_matches_equal_spacing(n):
    g = path_graph(n)
    obs = Observation(frozenset(range(n)), {0: 3.0, n - 1: 3.0 + 7.5 * n})
    out = eif_build_tree(g, obs, 0, 4.0)
    want = assign_line_times(3.0, 3.0 + 7.5 * n, n)
    assert [out.tree.t[v] for v in range(n)] == pytest.approx(want, abs=1e-9)
    assert out.cost == pytest.approx(path_cost(n - 1, 3.0, 3.0 + 7.5 * n, 4.0), abs=1e-9)


def test_unattachable_gives_infinite_cost():
    # 1 is observed after 2 but can only be reached through 2
    g = path_graph(3)
    obs = Observation(frozenset(range(3)), {1: 9.0, 2: 5.0})
    out = eif_build_tree(g, obs, 0, 1.0)
    assert out.cost == math.inf


def _random_instance(seed, n=40, extra=30, frac=0.4):
    rng = np.random.default_rng(seed)
    g = random_connected(n, extra, rng)
    res = simulate_trunc_gaussian(g, int(rng.integers(n)), n // 2 + 5, 10.0, 10.0, rng)
    return g, sample_observed_unbiased(res, frac, rng)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_finite_outcomes_feasible_and_cost_matches(seed):
    g, obs = _random_instance(seed)
    mu = estimate_mu(g, obs)
    for r in sorted(candidate_set(obs)):
        out = eif_build_tree(g, obs, r, mu)
        if out.cost == math.inf:
            continue
        assert is_feasible_consistent(out.tree, obs)
        # bootstrap and completion edges sit exactly mu apart, so the whole
        # tree costs what the attachments accumulated
        assert tree_cost(out.tree, mu) == pytest.approx(out.cost, rel=1e-9, abs=1e-6)
        assert sum(s.gamma for s in out.attach_log) == pytest.approx(out.cost)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_attach_order_is_time_order(seed):
    g, obs = _random_instance(seed)
    r = min(candidate_set(obs))
    out = eif_build_tree(g, obs, r, 10.0)
    order = [v for v in obs.observed if v != r]
    logged = [s.node for s in out.attach_log]
    assert logged == order[: len(logged)]


def test_sweep_is_deterministic_and_covers_candidates():
    g, obs = _random_instance(11)
    a = sweep(g, obs)
    b = sweep(g, obs)
    assert a.costs == b.costs
    assert set(a.costs) == candidate_set(obs)


def test_infected_view_local_ids_sorted():
    g, obs = _random_instance(3)
    view = InfectedView(g, obs)
    assert list(view.nmap.to_parent) == sorted(obs.infected)
