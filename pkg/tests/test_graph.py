import numpy as np
import pytest

from idsf import autodiff as ad
from idsf import data as dataio
from idsf.errors import ContractError
from idsf.graph import BipartiteGraph, aggregate, build_graph, dense_normalized_adjacency


def graph_from_edges(users, items, edges):
    return BipartiteGraph(users, items, np.asarray(edges, dtype=np.int64))


def test_single_edge_coefficient_is_one():
    g = graph_from_edges(1, 1, [(0, 0)])
    assert g.users_to_items[0, 0] == pytest.approx(1.0)


def test_coefficient_four_by_one():
    # user 0 has 4 neighbors, item 0 has only user 0: c = 1/(2*1)
    g = graph_from_edges(1, 4, [(0, 0), (0, 1), (0, 2), (0, 3)])
    assert g.users_to_items[0, 0] == pytest.approx(0.5)


def test_coefficients_symmetric_and_positive():
    rng = np.random.default_rng(0)
    edges = {(int(rng.integers(6)), int(rng.integers(9))) for _ in range(20)}
    g = graph_from_edges(6, 9, sorted(edges))
    for u, i in g.edges:
        assert g.users_to_items[i, u] == pytest.approx(g.items_to_users[u, i])
        assert g.users_to_items[i, u] > 0


def test_identity_roundtrip_single_pair():
    g = graph_from_edges(1, 1, [(0, 0)])
    v = np.array([[1.5, -2.0, 0.25]])
    out = aggregate(g, "users_to_items", ad.constant(v))
    assert np.allclose(out.values, v)


def test_zero_source_gives_zero_target():
    g = graph_from_edges(3, 4, [(0, 0), (1, 1), (2, 2), (0, 3)])
    out = aggregate(g, "users_to_items", ad.constant(np.zeros((3, 5))))
    assert np.array_equal(out.values, np.zeros((4, 5)))


def test_degree_zero_targets_get_zero_rows():
    # item 3 never interacted with
    g = graph_from_edges(2, 4, [(0, 0), (1, 1), (0, 2)])
    src = np.random.default_rng(1).normal(size=(2, 3))
    out = aggregate(g, "users_to_items", ad.constant(src))
    assert np.array_equal(out.values[3], np.zeros(3))


def test_aggregate_matches_dense_oracle():
    rng = np.random.default_rng(3)
    edges = sorted({(int(rng.integers(5)), int(rng.integers(7))) for _ in range(15)})
    g = graph_from_edges(5, 7, edges)
    dense = dense_normalized_adjacency(g)
    users = rng.normal(size=(5, 4))
    out = aggregate(g, "users_to_items", ad.constant(users)).values
    expected = dense[5:, :5] @ users
    assert np.allclose(out, expected, atol=1e-6)
    items = rng.normal(size=(7, 4))
    out_u = aggregate(g, "items_to_users", ad.constant(items)).values
    assert np.allclose(out_u, dense[:5, 5:] @ items, atol=1e-6)


def test_aggregate_is_linear():
    rng = np.random.default_rng(4)
    edges = sorted({(int(rng.integers(6)), int(rng.integers(6))) for _ in range(12)})
    g = graph_from_edges(6, 6, edges)
    x = rng.normal(size=(6, 3))
    y = rng.normal(size=(6, 3))
    lhs = aggregate(g, "users_to_items", ad.constant(2.0 * x + 3.0 * y)).values
    rhs = (2.0 * aggregate(g, "users_to_items", ad.constant(x)).values
           + 3.0 * aggregate(g, "users_to_items", ad.constant(y)).values)
    assert np.allclose(lhs, rhs, atol=1e-6)


def test_aggregate_backward_is_reversed_aggregation():
    rng = np.random.default_rng(5)
    edges = sorted({(int(rng.integers(4)), int(rng.integers(5))) for _ in range(10)})
    g = graph_from_edges(4, 5, edges)
    weights = rng.normal(size=(5, 3))

    def build(tensors, tape):
        out = aggregate(g, "users_to_items", tensors["x"])
        return ad.sum_all(ad.mul(out, ad.constant(weights, tape)))

    assert ad.grad_check(build, {"x": rng.normal(size=(4, 3))}) < 1e-6


def test_build_graph_uses_training_edges_only():
    records = [dataio.InteractionRecord(f"u{k}", f"i{j}")
               for k in range(4) for j in range(10)]
    ds = dataio.split_dataset(records, (0.8, 0.1, 0.1), 0)
    g = build_graph(ds)
    assert g.edges.shape[0] == len(ds.train_edges) < len(records)


def test_empty_graph_rejected():
    with pytest.raises(ContractError):
        graph_from_edges(2, 2, np.zeros((0, 2), dtype=np.int64))


def test_wrong_source_rows_rejected():
    g = graph_from_edges(2, 3, [(0, 0), (1, 1)])
    with pytest.raises(ContractError):
        aggregate(g, "users_to_items", ad.constant(np.zeros((3, 2))))
