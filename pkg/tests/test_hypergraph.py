import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgbo.hypergraph import (
    AlignmentError,
    DimensionError,
    Forest,
    HyperEdge,
    Hypergraph,
    HypergraphError,
    ParseError,
    count_derivations,
    format_hypergraph,
    parse_hypergraphs,
    rescore_all,
    union_graphs,
    viterbi_best,
)
from oracles import brute_force_best, derivation_tokens, enumerate_derivations, random_hypergraph


def one_edge_graph(feats, K=1, sid=0, yld=("a",)):
    return Hypergraph(1, (HyperEdge(0, (), feats, yld),), K, sid)


def test_single_edge():
    d = viterbi_best(one_edge_graph({0: 2.0}), [3.0])
    assert d.score == 6.0
    assert d.edges == (0,)
    assert d.tokens == ("a",)


def test_zero_weights_pick_lowest_edge_ids():
    rng = np.random.default_rng(3)
    for _ in range(20):
        hg = random_hypergraph(rng)
        d = viterbi_best(hg, np.zeros(hg.num_features))
        assert d.score == 0.0
        inc = hg.incoming()
        for ei in d.edges:
            assert ei == inc[hg.edges[ei].head][0]


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        viterbi_best(one_edge_graph({0: 1.0}), [1.0, 2.0])


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_viterbi_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    hg = random_hypergraph(rng)
    w = rng.normal(size=hg.num_features)
    d = viterbi_best(hg, w)
    assert abs(d.score - brute_force_best(hg, w)) <= 1e-9
    # the returned derivation is consistent with its own score, features and yield
    assert abs(sum(v * w[k] for k, v in d.features.items()) - d.score) <= 1e-9
    assert d.tokens == derivation_tokens(hg, d.edges)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_positive_scaling_keeps_argmax(seed, a):
    rng = np.random.default_rng(seed)
    hg = random_hypergraph(rng)
    w = rng.normal(size=hg.num_features)
    d1 = viterbi_best(hg, w)
    d2 = viterbi_best(hg, a * w)
    assert d2.edges == d1.edges
    assert d2.score == pytest.approx(a * d1.score, rel=1e-9, abs=1e-9)


def test_derivation_features_are_edge_sums():
    rng = np.random.default_rng(11)
    hg = random_hypergraph(rng, max_derivations=50)
    d = viterbi_best(hg, rng.normal(size=hg.num_features))
    expected = {}
    for ei in d.edges:
        for k, v in hg.edges[ei].features.items():
            expected[k] = expected.get(k, 0.0) + v
    assert d.features.keys() == expected.keys()
    for k in expected:
        assert d.features[k] == pytest.approx(expected[k], abs=1e-12)


def test_rescore_all_empty_and_trivial():
    assert rescore_all([], [1.0]) == []
    out = rescore_all([one_edge_graph({0: 1.0}, sid=0), one_edge_graph({0: -1.0}, sid=1)], [2.0])
    assert [d.score for d in out] == [2.0, -2.0]
    assert all(d.edges == (0,) for d in out)


def test_rescore_all_matches_sequential():
    rng = np.random.default_rng(5)
    graphs = [random_hypergraph(rng, K=6, sentence_id=s) for s in range(20)]
    w = rng.normal(size=6)
    batch = rescore_all(graphs, w)
    for g, d in zip(graphs, batch):
        ref = viterbi_best(g, w)
        assert d.edges == ref.edges
        assert d.score == ref.score


def test_union_with_itself_keeps_score():
    rng = np.random.default_rng(8)
    hg = random_hypergraph(rng)
    (u,) = union_graphs([hg], [hg])
    for _ in range(20):
        w = rng.normal(size=hg.num_features)
        assert viterbi_best(u, w).score == pytest.approx(viterbi_best(hg, w).score, abs=1e-12)


def test_union_score_is_pairwise_max():
    rng = np.random.default_rng(9)
    x = random_hypergraph(rng, K=5)
    y = random_hypergraph(rng, K=5)
    (u,) = union_graphs([x], [y])
    for _ in range(100):
        w = rng.normal(size=5)
        expected = max(viterbi_best(x, w).score, viterbi_best(y, w).score)
        assert viterbi_best(u, w).score == pytest.approx(expected, abs=1e-12)


def test_union_derivation_sets():
    rng = np.random.default_rng(10)
    for _ in range(20):
        x = random_hypergraph(rng, max_derivations=60)
        y = random_hypergraph(rng, max_derivations=60)
        (u,) = union_graphs([x], [y])
        assert count_derivations(u) == count_derivations(x) + count_derivations(y)
        yields_u = sorted(derivation_tokens(u, d) for d in enumerate_derivations(u))
        yields_xy = sorted(
            [derivation_tokens(x, d) for d in enumerate_derivations(x)]
            + [derivation_tokens(y, d) for d in enumerate_derivations(y)]
        )
        assert yields_u == yields_xy


def test_union_edge_cases():
    g = [one_edge_graph({0: 1.0})]
    assert union_graphs(g, []) == g
    with pytest.raises(AlignmentError):
        union_graphs(g, [one_edge_graph({0: 1.0}, sid=3)])
    with pytest.raises(AlignmentError):
        union_graphs(g, g + g)


@pytest.mark.parametrize(
    "edges, n",
    [
        ((HyperEdge(0, (0,), {}, (0,)),), 1),  # self loop
        ((HyperEdge(0, (), {}, ("a",)),), 2),  # node 1 has no incoming edge
        ((HyperEdge(0, (), {}, ("a",)), HyperEdge(1, (), {}, ("b",))), 2),  # node 0 is dead
        ((HyperEdge(0, (), {}, ("a",)), HyperEdge(1, (0,), {}, ("b",))), 2),  # slot unused
        ((HyperEdge(0, (), {}, ("a",)), HyperEdge(1, (0, 0, 0), {}, (0, 1, 2))), 2),  # arity 3
    ],
)
def test_validate_rejects(edges, n):
    with pytest.raises(HypergraphError):
        Hypergraph(n, edges, 1).validate()


def test_feature_index_out_of_range():
    with pytest.raises(DimensionError):
        one_edge_graph({3: 1.0}, K=2).validate()


def test_file_roundtrip():
    rng = np.random.default_rng(12)
    graphs = [random_hypergraph(rng, K=5, sentence_id=s) for s in range(5)]
    text = "".join(format_hypergraph(g) for g in graphs)
    back = parse_hypergraphs(text)
    assert "".join(format_hypergraph(g) for g in back) == text
    w = rng.normal(size=5)
    for a, b in zip(graphs, back):
        assert viterbi_best(a, w).score == viterbi_best(b, w).score


def test_file_format_layout():
    g = Hypergraph(
        3,
        (
            HyperEdge(0, (), {0: 1.5}, ("das",)),
            HyperEdge(1, (), {}, ()),
            HyperEdge(2, (0, 1), {1: -2.0, 0: 0.25}, (1, "haus", 0)),
        ),
        2,
        4,
    )
    text = format_hypergraph(g)
    assert text.splitlines() == [
        "HG 4 3 3 2",
        "E 0 - das 0:1.5",
        "E 1 - -",
        "E 2 0,1 [1] haus [0] 0:0.25,1:-2.0",
    ]
    (back,) = parse_hypergraphs(text)
    assert back.edges[1].yield_template == ()
    assert back.edges[2].yield_template == (1, "haus", 0)


def test_parse_error_reports_line():
    text = "HG 0 1 1 1\nE 0 - a 0:x\n"
    with pytest.raises(ParseError, match=":2:"):
        parse_hypergraphs(text)


def test_forest_visits_every_node_once():
    rng = np.random.default_rng(13)
    graphs = [random_hypergraph(rng) for _ in range(10)]
    f = Forest(graphs)
    heads = np.concatenate([h for _, _, _, _, h in f.schedule])
    assert sorted(heads.tolist()) == list(range(f.num_nodes))
