import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import city_table, random_edges
from semigraph.canonical import SemiTable, with_roles
from semigraph.graph import (
    CAPTION,
    CAPTION_CONTENT,
    CELL,
    CELL_CELL,
    EDGE_KINDS,
    HEADER,
    HEADER_CELL,
    QUERY,
    QUERY_LINK,
    SUBJECT_ATTRIBUTE,
    ablate_edges,
    ablate_graph,
    build_graph,
    normalized_adjacency,
)


def test_city_fixture_nodes_and_edges(city):
    g = build_graph("best city", city)
    assert g.num_nodes == 8
    assert [n.kind for n in g.nodes] == [QUERY, CAPTION, HEADER, HEADER, CELL, CELL, CELL, CELL]
    assert [(n.row, n.col) for n in g.nodes[4:]] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert g.edge_counts() == {QUERY_LINK: 7, CAPTION_CONTENT: 4, HEADER_CELL: 4, SUBJECT_ATTRIBUTE: 2,
                               CELL_CELL: 2}
    # the vertical pairs carry CellCell; the horizontal ones became SubjectAttribute
    cc = {(e.source, e.target) for e in g.edges if e.kind == CELL_CELL}
    assert cc == {(4, 6), (5, 7)}
    sa = {(e.source, e.target) for e in g.edges if e.kind == SUBJECT_ATTRIBUTE}
    assert sa == {(4, 5), (6, 7)}


def test_list_fixture(destinations):
    g = build_graph("where to go", destinations)
    assert g.num_nodes == 5
    assert g.edge_counts() == {QUERY_LINK: 4, CAPTION_CONTENT: 3, CELL_CELL: 2}


def test_strict_cell_cell_reading(city):
    g = build_graph("q", city, cell_cell_excludes_subject=True)
    cc = {(e.source, e.target) for e in g.edges if e.kind == CELL_CELL}
    assert cc == {(5, 7)}


def test_headerless_node_count():
    t = with_roles(SemiTable(body=(("a", "1"), ("b", "2"), ("c", "3"))))
    assert build_graph("q", t).num_nodes == 2 + 6


def test_ablation(city):
    g = build_graph("q", city)
    assert len(ablate_edges(g.edges, {HEADER_CELL})) == 15
    assert ablate_edges(g.edges, set()) == g.edges
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert ablate_edges(g.edges, EDGE_KINDS) == ()
    with pytest.warns(UserWarning):
        ablate_edges(g.edges, {QUERY_LINK})
    with pytest.raises(ValueError):
        ablate_edges(g.edges, {"Nope"})
    # suppressed CellCell pairs are not resurrected
    no_sa = ablate_graph(g, {SUBJECT_ATTRIBUTE})
    assert no_sa.edge_counts()[CELL_CELL] == 2


def test_dumps(city):
    g = build_graph("best city", city)
    assert g.to_edge_list().splitlines()[0] == "0 1 QueryLink"
    assert '"kind": "query"' in g.to_json()
    assert g.to_json() == build_graph("best city", city_table()).to_json()


def test_small_adjacencies():
    np.testing.assert_array_equal(normalized_adjacency(1, []).A_hat, [[1.0]])
    two = normalized_adjacency(2, [(0, 1, CELL_CELL)])
    np.testing.assert_array_equal(two.A_hat, np.full((2, 2), 0.5))
    with pytest.raises(ValueError):
        normalized_adjacency(0, [])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10_000))
def test_adjacency_invariants(K, seed):
    m = normalized_adjacency(K, random_edges(np.random.default_rng(seed), K))
    assert np.array_equal(m.A_hat, m.A_hat.T)
    assert np.array_equal(m.A_tilde, m.A + np.eye(K))
    d = np.diag(m.D_tilde)
    np.testing.assert_allclose(m.A_hat * np.sqrt(np.outer(d, d)), m.A_tilde, atol=1e-12, rtol=0)
    assert np.abs(np.linalg.eigvalsh(m.A_hat)).max() <= 1 + 1e-9


cells = st.text(alphabet="abc1", min_size=0, max_size=3)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.booleans(), st.data())
def test_graph_structure_properties(R, N, header, data):
    body = tuple(tuple(data.draw(cells) for _ in range(N)) for _ in range(R))
    t = with_roles(SemiTable(body=body, header=tuple("h" * (j + 1) for j in range(N)) if header else None))
    g = build_graph("query", t)
    assert g.num_nodes == 2 + (N if header else 0) + R * N
    pairs = [(e.source, e.target) for e in g.edges]
    assert len(pairs) == len(set(pairs))
    assert all(a < b for a, b in pairs)
    # the query is one hop from everything
    assert g.neighbors(0) == list(range(1, g.num_nodes))
    assert g == build_graph("query", t)
