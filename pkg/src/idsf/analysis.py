"""Embedding-analysis pipeline: per-user item sampling, cosine-similarity
matrices with top-k row filtering, and labeled matrix export for external
projection tools.  No plotting happens here."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, save_matrix
from .errors import ContractError, SamplingError

SELECTORS = ("item-id-t", "item-id-v", "user-id", "projected-t", "projected-v",
             "fused-c", "structural-s")


@dataclass
class SimilarityMatrix:
    values: np.ndarray          # n x n
    item_indices: np.ndarray    # row/col k -> dense item index
    group_labels: np.ndarray    # row k -> sampled-user group id


def sample_user_items(dataset: Dataset, user_count: int,
                      rng: np.random.Generator, max_retries: int = 1000):
    """Sample users whose training-item sets do not overlap; returns the
    concatenated item list (adjacent blocks per user) and group labels."""
    positives = dataset.positives("train")
    eligible = [u for u in range(dataset.user_count) if positives[u]]
    if user_count > len(eligible):
        raise ContractError("not enough users with training interactions")
    items: list[int] = []
    labels: list[int] = []
    taken: set[int] = set()
    chosen_users: list[int] = []
    retries = 0
    while len(chosen_users) < user_count:
        if retries > max_retries:
            raise SamplingError(
                f"could not find {user_count} users with non-overlapping items "
                f"after {max_retries} retries")
        u = eligible[int(rng.integers(len(eligible)))]
        pos = positives[u]
        if u in chosen_users or (pos & taken):
            retries += 1
            continue
        chosen_users.append(u)
        for i in sorted(pos):
            items.append(i)
            labels.append(len(chosen_users) - 1)
        taken |= pos
    return np.asarray(items, dtype=np.int64), np.asarray(labels, dtype=np.int64)


def similarity_matrix(rows: np.ndarray, item_indices=None,
                      group_labels=None) -> SimilarityMatrix:
    """Pairwise cosine similarity, clamped to [-1, 1], exactly symmetric.

    Zero rows are flagged by similarity 0 against everything (including
    themselves on the diagonal).
    """
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.sqrt((rows * rows).sum(axis=1))
    zero = norms < 1e-12
    safe = np.where(zero, 1.0, norms)
    unit = rows / safe[:, None]
    unit[zero] = 0.0
    sim = unit @ unit.T
    sim = np.clip(sim, -1.0, 1.0)
    sim = (sim + sim.T) / 2.0  # enforce exact symmetry against fp drift
    n = rows.shape[0]
    if item_indices is None:
        item_indices = np.arange(n, dtype=np.int64)
    if group_labels is None:
        group_labels = np.zeros(n, dtype=np.int64)
    return SimilarityMatrix(values=sim, item_indices=np.asarray(item_indices),
                            group_labels=np.asarray(group_labels))


def top_k_row_filter(matrix: SimilarityMatrix, k: int = 10) -> SimilarityMatrix:
    """Keep the k largest values per row (ties keep lowest indices), zero
    the rest.  Idempotent; the result is generally no longer symmetric."""
    if k < 1:
        raise ContractError("k must be >= 1")
    values = matrix.values
    n = values.shape[1]
    if k >= n:
        return SimilarityMatrix(values.copy(), matrix.item_indices.copy(),
                                matrix.group_labels.copy())
    out = np.zeros_like(values)
    for r in range(values.shape[0]):
        # only nonzero entries compete: a zero contributes nothing either
        # way, and restricting to them makes the filter idempotent
        candidates = np.flatnonzero(values[r])
        if len(candidates) > k:
            # stable sort on (-value, index): ties keep lowest indices
            order = np.lexsort((candidates, -values[r, candidates]))
            candidates = candidates[order[:k]]
        out[r, candidates] = values[r, candidates]
    return SimilarityMatrix(out, matrix.item_indices.copy(),
                            matrix.group_labels.copy())


def group_similarity_means(matrix: SimilarityMatrix) -> tuple[float, float]:
    """(mean within-group similarity, mean cross-group similarity) over
    off-diagonal pairs."""
    n = matrix.values.shape[0]
    same = matrix.group_labels[:, None] == matrix.group_labels[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    within = matrix.values[same & off_diag]
    cross = matrix.values[~same]
    return float(within.mean()), float(cross.mean())


def export_embeddings(model, which: str, out_path,
                      group_labels: np.ndarray | None = None) -> np.ndarray:
    """Write one embedding table in the binary matrix format + id sidecar.

    Selectors: item-id-t / item-id-v / user-id pull parameter tables;
    projected-*, fused-c and structural-s run a forward pass first.
    """
    if which not in SELECTORS:
        raise ContractError(f"unknown selector {which!r}; one of {SELECTORS}")
    ds = model.dataset
    if which == "item-id-t":
        rows, ids = model.params["item_id_t"], ds.item_ids
    elif which == "item-id-v":
        rows, ids = model.params["item_id_v"], ds.item_ids
    elif which == "user-id":
        rows, ids = model.params["user_id"], ds.user_ids
    else:
        reps = model.forward_full()
        if which == "projected-t":
            rows, ids = reps.content.e_t.values, ds.item_ids
        elif which == "projected-v":
            rows, ids = reps.content.e_v.values, ds.item_ids
        elif which == "fused-c":
            rows, ids = reps.content.e_c.values, ds.item_ids
        else:
            rows, ids = reps.item_struct.values, ds.item_ids
    save_matrix(out_path, np.asarray(rows), list(ids))
    if group_labels is not None:
        labels_path = Path(str(out_path) + ".labels")
        labels_path.write_text(
            "".join(f"{int(g)}\n" for g in group_labels), encoding="utf-8")
    return np.asarray(rows)


def similarity_csv(matrix: SimilarityMatrix, path) -> None:
    np.savetxt(path, matrix.values, delimiter=",", fmt="%.8f")
