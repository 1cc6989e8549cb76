"""Bipartite interaction graph with symmetric normalization.

Built from training edges only.  Per-edge coefficient
c_ui = 1 / (sqrt(|N_i|) * sqrt(|N_u|)); degree-0 nodes simply have no
edges, so the coefficient is never a division by zero.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .data import Dataset
from .errors import ContractError


class BipartiteGraph:
    """Normalized adjacency stored as CSR, one matrix per direction."""

    def __init__(self, user_count: int, item_count: int, edges: np.ndarray):
        if edges.shape[0] == 0:
            raise ContractError("graph requires at least one training edge")
        self.user_count = user_count
        self.item_count = item_count
        self.edges = edges
        u = edges[:, 0]
        i = edges[:, 1]
        user_deg = np.bincount(u, minlength=user_count).astype(np.float64)
        item_deg = np.bincount(i, minlength=item_count).astype(np.float64)
        coeff = 1.0 / (np.sqrt(item_deg[i]) * np.sqrt(user_deg[u]))
        # users_to_items: (item_count x user_count), aggregates user rows
        self.users_to_items = sp.csr_matrix(
            (coeff, (i, u)), shape=(item_count, user_count))
        self.items_to_users = sp.csr_matrix(
            (coeff, (u, i)), shape=(user_count, item_count))
        self.user_degrees = user_deg
        self.item_degrees = item_deg
        self.edge_coeff = coeff

    def with_dtype(self, dtype):
        self.users_to_items = self.users_to_items.astype(dtype)
        self.items_to_users = self.items_to_users.astype(dtype)
        return self


def build_graph(dataset: Dataset) -> BipartiteGraph:
    return BipartiteGraph(dataset.user_count, dataset.item_count, dataset.train_edges)


def aggregate(graph: BipartiteGraph, side: str, embeddings: ad.Tensor) -> ad.Tensor:
    """One normalized neighborhood-aggregation step.

    side="users_to_items": target[i] = sum_{u in N_i} c_ui * source[u];
    side="items_to_users": symmetric.  Degree-0 targets get zero rows.
    Differentiable: the backward pass aggregates along reversed edges.
    """
    if side == "users_to_items":
        fwd, bwd = graph.users_to_items, graph.items_to_users
        expected = graph.user_count
    elif side == "items_to_users":
        fwd, bwd = graph.items_to_users, graph.users_to_items
        expected = graph.item_count
    else:
        raise ContractError(f"unknown aggregation side '{side}'")
    if embeddings.ndim != 2 or embeddings.shape[0] != expected:
        raise ContractError(
            f"aggregate({side}): source has {embeddings.shape} rows, expected {expected}")
    fwd = fwd.astype(embeddings.values.dtype)
    bwd = bwd.astype(embeddings.values.dtype)
    return ad.csr_aggregate(fwd, bwd, embeddings, op=f"aggregate_{side}")


def dense_normalized_adjacency(graph: BipartiteGraph) -> np.ndarray:
    """(U+I) x (U+I) dense symmetric normalized adjacency, for oracles."""
    n = graph.user_count + graph.item_count
    a = np.zeros((n, n), dtype=np.float64)
    for (u, i), c in zip(graph.edges, graph.edge_coeff):
        a[u, graph.user_count + i] = c
        a[graph.user_count + i, u] = c
    return a
