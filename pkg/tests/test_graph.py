import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xbm.errors import FormatError, ParameterError
from xbm.graph import BipartiteGraph


@st.composite
def graphs(draw, max_side=12):
    n_v = draw(st.integers(1, max_side))
    n_h = draw(st.integers(1, max_side))
    mask = draw(st.lists(st.booleans(), min_size=n_v * n_h, max_size=n_v * n_h))
    return BipartiteGraph.from_mask(np.array(mask).reshape(n_v, n_h))


def test_edges_sorted_and_deduplicated_on_input():
    g = BipartiteGraph(3, 3, [2, 0, 1], [0, 2, 1])
    assert g.rows.tolist() == [0, 1, 2]
    assert g.cols.tolist() == [2, 1, 0]
    with pytest.raises(ParameterError):
        BipartiteGraph(2, 2, [0, 0], [1, 1])


def test_out_of_range_rejected():
    with pytest.raises(ParameterError):
        BipartiteGraph(2, 2, [2], [0])
    with pytest.raises(ParameterError):
        BipartiteGraph(2, 2, [0], [-1])


def test_arrays_are_immutable():
    g = BipartiteGraph.complete(2, 3)
    with pytest.raises(ValueError):
        g.rows[0] = 1


def test_complete_graph():
    g = BipartiteGraph.complete(3, 4)
    assert g.n_edges == 12 and g.is_complete
    assert g.visible_degrees().tolist() == [4, 4, 4]
    assert g.hidden_degrees().tolist() == [3, 3, 3, 3]


@given(graphs())
def test_adjacency_symmetric(g):
    from_visible = {(i, int(j)) for i in range(g.n_v) for j in g.hidden_neighbors(i)}
    from_hidden = {(int(i), j) for j in range(g.n_h) for i in g.visible_neighbors(j)}
    assert from_visible == from_hidden == g.edge_set()


@given(graphs())
def test_degree_sums_equal_edges(g):
    assert g.visible_degrees().sum() == g.hidden_degrees().sum() == g.n_edges


@given(graphs())
def test_text_round_trip(g):
    text = g.to_text(["seed 1"])
    assert BipartiteGraph.from_text(text) == g


@given(graphs())
def test_binary_round_trip(g):
    buf = io.BytesIO()
    g.save(buf)
    buf.seek(0)
    assert BipartiteGraph.load(buf) == g


def test_text_format_layout():
    g = BipartiteGraph(2, 3, [1, 0], [2, 1])
    assert g.to_text() == "bipartite 2 3 2\n1 2\n2 3\n"


def test_text_parse_errors():
    with pytest.raises(FormatError):
        BipartiteGraph.from_text("graph 2 2 1\n1 1\n")
    with pytest.raises(FormatError):
        BipartiteGraph.from_text("bipartite 2 2 2\n1 1\n")
    with pytest.raises(FormatError):
        BipartiteGraph.from_text("bipartite 2 2 1\n3 1\n")


def test_unified_adjacency_offsets_hidden():
    g = BipartiteGraph(2, 2, [0, 1], [1, 1])
    indptr, indices = g.unified_adjacency()
    nbrs = [sorted(indices[indptr[u]:indptr[u + 1]].tolist()) for u in range(4)]
    assert nbrs == [[3], [3], [], [0, 1]]


def test_relabel_visible_moves_slots():
    g = BipartiteGraph(3, 1, [0], [0])
    moved = g.relabel_visible(np.array([2, 0, 1]))
    assert moved.edge_set() == {(2, 0)}


def test_add_and_keep_edges():
    g = BipartiteGraph(2, 2, [0], [0])
    g2 = g.add_edges([0, 1], [0, 1])
    assert g2.edge_set() == {(0, 0), (1, 1)}
    assert g2.keep_edges(np.array([False, True])).edge_set() == {(1, 1)}
