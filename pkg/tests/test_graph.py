import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_hts import (
    Dag,
    HierarchicalOrder,
    LinearOrder,
    ParameterError,
    ParentSets,
    StructureError,
    a_top,
    d_separated,
    edge_f1,
    erdos_renyi_dag,
    linearize,
    relatives,
    true_hierarchical_order,
)
from causal_hts.graph import order_from_json, random_order, topological_order, vertex_index, vertex_name
from oracles import A, B, C, D, E, all_dags, brute_d_separated, brute_layers, strict_a_top, walkthrough


@st.composite
def dags(draw, max_d=7):
    d = draw(st.integers(1, max_d))
    perm = draw(st.permutations(range(d)))
    pairs = [(a, b) for a in range(d) for b in range(a + 1, d)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Dag.from_edges(d, [(perm[a], perm[b]) for (a, b), k in zip(pairs, keep) if k])


# construction


def test_cycle_rejected():
    with pytest.raises(StructureError):
        Dag.from_edges(3, [(0, 1), (1, 2), (2, 0)])


def test_self_edge_rejected():
    with pytest.raises(StructureError):
        Dag(np.eye(2, dtype=bool))


def test_edge_out_of_range():
    with pytest.raises(ParameterError):
        Dag.from_edges(2, [(0, 2)])


def test_adjacency_read_only():
    g = walkthrough()
    with pytest.raises(ValueError):
        g.adjacency[0, 4] = True


def test_vertex_names():
    assert vertex_name(3) == "x3"
    assert vertex_index("x12") == 12
    with pytest.raises(ParameterError):
        vertex_index("y1")


@given(dags())
def test_json_round_trip(g):
    assert Dag.from_json(g.to_json()) == g
    assert hash(Dag.from_dict(g.to_dict())) == hash(g)


def test_json_layout():
    g = Dag.from_edges(3, [(0, 2), (1, 2)])
    assert g.to_dict() == {"d": 3, "edges": [[0, 2], [1, 2]]}


# erdos_renyi_dag


def test_er_single_vertex_is_empty():
    assert erdos_renyi_dag(1, 0, seed=3).n_edges == 0


def test_er_full_probability_is_complete():
    g = erdos_renyi_dag(5, 10, seed=1)
    assert g.n_edges == 10


@pytest.mark.parametrize("expected", [-1, 46])
def test_er_bad_expected_edges(expected):
    with pytest.raises(ParameterError):
        erdos_renyi_dag(10, expected, seed=0)


def test_er_mean_edge_count():
    rng = np.random.default_rng(0)
    counts = [erdos_renyi_dag(10, 10, rng).n_edges for _ in range(1000)]
    assert abs(np.mean(counts) - 10) <= 0.5


def test_er_deterministic():
    assert erdos_renyi_dag(8, 8, seed=5) == erdos_renyi_dag(8, 8, seed=5)


# relatives


FIG1 = Dag.from_edges(4, [(1, 2), (1, 3), (2, 3)])


@pytest.mark.parametrize(
    "v, kind, expected",
    [
        (3, "parents", {1, 2}),
        (1, "ancestors", set()),
        (1, "descendants", {2, 3}),
        (1, "children", {2, 3}),
        (3, "ancestors", {1, 2}),
    ],
)
def test_relatives(v, kind, expected):
    assert relatives(FIG1, v, kind) == expected


def test_relatives_unknown_kind():
    with pytest.raises(ParameterError):
        relatives(FIG1, 1, "cousins")


# hierarchical order


@pytest.mark.parametrize(
    "g, layers",
    [
        (Dag.from_edges(3, [(0, 1), (1, 2)]), [{0}, {1}, {2}]),
        (walkthrough(), [{A}, {B, C}, {D}, {E}]),
        (Dag.empty(4), [{0, 1, 2, 3}]),
    ],
)
def test_true_hierarchical_order(g, layers):
    assert [set(layer) for layer in true_hierarchical_order(g).layers] == layers


def test_true_order_rejects_cycle():
    adj = np.zeros((2, 2), dtype=bool)
    adj[0, 1] = adj[1, 0] = True
    with pytest.raises(StructureError):
        true_hierarchical_order(adj)


@pytest.mark.parametrize("d", range(1, 5))
def test_layers_match_longest_paths_all_labeled(d):
    for g in all_dags(d):
        layer_of = true_hierarchical_order(g).layer_of
        assert [layer_of[v] for v in range(d)] == brute_layers(g)


@given(dags())
def test_layers_match_longest_paths(g):
    layer_of = true_hierarchical_order(g).layer_of
    assert [layer_of[v] for v in range(g.d)] == brute_layers(g)


def test_hierarchical_order_validation():
    with pytest.raises(ParameterError):
        HierarchicalOrder((frozenset({0}), frozenset({0, 1})))
    with pytest.raises(ParameterError):
        HierarchicalOrder((frozenset({0}), frozenset({2})))


def test_order_json_round_trip():
    h = HierarchicalOrder((frozenset({0}), frozenset({1, 2})))
    assert order_from_json(h.to_dict()) == h
    p = LinearOrder((2, 0, 1))
    assert order_from_json(p.to_dict()) == p


# d-separation


@pytest.mark.parametrize(
    "i, j, z, expected",
    [
        (B, C, {A}, True),
        (A, D, {B, C}, True),
        (A, B, set(), False),
        (B, C, set(), False),
        (B, C, {A, D}, False),
        (B, C, {A, E}, False),
        (A, E, {D}, True),
    ],
)
def test_d_separation_walkthrough(i, j, z, expected):
    assert d_separated(walkthrough(), i, j, z) is expected


@pytest.mark.parametrize("i, j, z", [(0, 0, ()), (0, 1, (1,)), (0, 1, (0,)), (0, 9, ())])
def test_d_separation_bad_arguments(i, j, z):
    with pytest.raises(ParameterError):
        d_separated(walkthrough(), i, j, z)


@pytest.mark.parametrize("d", range(2, 5))
def test_d_separation_all_labeled(d):
    for g in all_dags(d):
        for i, j in itertools.permutations(range(d), 2):
            rest = [k for k in range(d) if k not in (i, j)]
            for r in range(len(rest) + 1):
                for z in itertools.combinations(rest, r):
                    assert d_separated(g, i, j, z) == brute_d_separated(g, i, j, z)


@settings(max_examples=150, deadline=None)
@given(dags(max_d=7), st.data())
def test_d_separation_random(g, data):
    if g.d < 2:
        return
    i, j = data.draw(st.lists(st.integers(0, g.d - 1), min_size=2, max_size=2, unique=True))
    z = data.draw(st.sets(st.sampled_from([k for k in range(g.d) if k not in (i, j)]) if g.d > 2 else st.nothing()))
    assert d_separated(g, i, j, z) == brute_d_separated(g, i, j, z)
    assert d_separated(g, i, j, z) == d_separated(g, j, i, z)


# metrics


CHAIN = Dag.from_edges(3, [(0, 1), (1, 2)])


@pytest.mark.parametrize(
    "order, expected",
    [
        (LinearOrder((0, 1, 2)), 1.0),
        (LinearOrder((2, 1, 0)), 0.0),
        (LinearOrder((1, 0, 2)), 0.5),
        (HierarchicalOrder((frozenset({0, 1}), frozenset({2}))), 0.5),
    ],
)
def test_a_top(order, expected):
    assert a_top(order, CHAIN) == expected


def test_a_top_edgeless_is_one():
    assert a_top(LinearOrder((1, 0)), Dag.empty(2)) == 1.0


def test_a_top_vertex_mismatch():
    with pytest.raises(ParameterError):
        a_top(LinearOrder((0, 1)), CHAIN)


@given(dags(), st.integers(0, 2**32 - 1))
def test_a_top_of_linearized_truth_is_one(g, seed):
    h = true_hierarchical_order(g)
    assert a_top(h, g) == 1.0
    assert a_top(linearize(h, seed), g) == 1.0
    assert a_top(topological_order(g), g) == 1.0


@given(dags(), st.integers(0, 2**32 - 1))
def test_a_top_matches_reference(g, seed):
    order = random_order(g.d, seed)
    assert a_top(order, g) == strict_a_top(order.position, g)


def _ps(d, edges):
    parents = [set() for _ in range(d)]
    for a, b in edges:
        parents[b].add(a)
    return ParentSets(tuple(frozenset(p) for p in parents))


def test_edge_f1_exact():
    s = edge_f1(ParentSets.from_dag(CHAIN), CHAIN)
    assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)


def test_edge_f1_empty_prediction():
    s = edge_f1(ParentSets.empty(3), CHAIN)
    assert s.recall == 0.0 and s.f1 == 0.0


def test_edge_f1_partial():
    s = edge_f1(_ps(3, [(0, 1), (0, 2)]), CHAIN)
    assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)


def test_edge_f1_both_empty():
    assert edge_f1(ParentSets.empty(2), Dag.empty(2)).f1 == 1.0


@given(dags(max_d=5), dags(max_d=5))
def test_edge_f1_swap_symmetry(g, h):
    if g.d != h.d:
        return
    fwd = edge_f1(ParentSets.from_dag(h), g)
    bwd = edge_f1(ParentSets.from_dag(g), h)
    assert fwd.precision == bwd.recall


def test_parent_sets_json():
    ps = _ps(4, [(1, 3), (2, 3)])
    assert ps.to_dict() == {"parents": {"x0": [], "x1": [], "x2": [], "x3": ["x1", "x2"]}}
    assert ParentSets.from_dict(ps.to_dict()) == ps


# linearize


def test_linearize_singletons():
    assert linearize(HierarchicalOrder((frozenset({0}), frozenset({1}))), 0).perm == (0, 1)


def test_linearize_deterministic_per_seed():
    h = HierarchicalOrder((frozenset({0, 1}),))
    assert linearize(h, 4) == linearize(h, 4)
    assert {linearize(h, s).perm for s in range(20)} == {(0, 1), (1, 0)}


@pytest.mark.parametrize("seed", range(10))
def test_linearize_respects_layers(seed):
    h = HierarchicalOrder((frozenset({0}), frozenset({1, 2}), frozenset({3})))
    perm = linearize(h, seed).perm
    assert perm[0] == 0 and perm[-1] == 3
