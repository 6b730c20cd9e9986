from __future__ import annotations

import pytest

from sourcerank.datasets import as_graph_surrogate, florentine_families, load_graph, power_grid_surrogate


def test_florentine_shape():
    g = florentine_families()
    assert (g.node_count, g.edge_count) == (15, 20)
    assert g.is_connected()


def test_power_grid_surrogate_shape():
    g = power_grid_surrogate()
    assert (g.node_count, g.edge_count) == (4941, 6594)
    assert g.is_connected()
    assert power_grid_surrogate().out_edges == g.out_edges


def test_as_surrogate_shape():
    g = as_graph_surrogate()
    assert (g.node_count, g.edge_count) == (10670, 22002)
    assert g.is_connected()
    assert max(g.degree(v) for v in range(g.node_count)) == 2312


def test_load_graph_builtin_and_file(tmp_path):
    assert load_graph("florentine").node_count == 15
    p = tmp_path / "e.txt"
    p.write_text("x y\n")
    assert load_graph(str(p)).edge_count == 1
    with pytest.raises(FileNotFoundError):
        load_graph(str(tmp_path / "missing.txt"))
