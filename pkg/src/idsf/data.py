"""Interaction ingestion, feature-file IO, splitting and synthetic fixtures.

On-disk formats (bit-exact):
  * interactions: UTF-8 TSV, columns user_raw_id TAB item_raw_id, extra
    columns ignored;
  * feature matrix: magic b"IDSF", version u32 LE = 1, rows u32 LE,
    dim u32 LE, then rows*dim float32 LE row-major, with a UTF-8 sidecar
    (one item_raw_id per line, line k names row k).
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    EmptyInputError,
    FormatError,
    MappingError,
    ParseError,
)

log = logging.getLogger(__name__)

MAGIC = b"IDSF"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class InteractionRecord:
    user_raw_id: str
    item_raw_id: str


@dataclass
class Dataset:
    """Dense-indexed interaction data with disjoint train/valid/test splits."""

    user_count: int
    item_count: int
    user_ids: list  # dense user index -> raw id
    item_ids: list
    train_edges: np.ndarray  # (n, 2) int64 [user, item]
    valid_edges: np.ndarray
    test_edges: np.ndarray
    user_index: dict = field(repr=False, default_factory=dict)
    item_index: dict = field(repr=False, default_factory=dict)

    def positives(self, split: str) -> list:
        """Per-user positive item sets restricted to one split."""
        edges = self.edges(split)
        out = [set() for _ in range(self.user_count)]
        for u, i in edges:
            out[u].add(int(i))
        return out

    def item_positives(self, split: str) -> list:
        edges = self.edges(split)
        out = [set() for _ in range(self.item_count)]
        for u, i in edges:
            out[i].add(int(u))
        return out

    def edges(self, split: str) -> np.ndarray:
        try:
            return {"train": self.train_edges,
                    "valid": self.valid_edges,
                    "test": self.test_edges}[split]
        except KeyError:
            raise ContractError(f"unknown split '{split}'") from None


@dataclass
class ModalFeatureTable:
    """Frozen raw modal feature matrix, row-aligned to dense item indices."""

    modality: str  # "t" or "v"
    raw_dim: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.raw_dim:
            raise ContractError("feature matrix shape inconsistent with raw_dim")
        if not np.all(np.isfinite(self.matrix)):
            raise FormatError("feature matrix contains non-finite values")


def load_interactions(path) -> list[InteractionRecord]:
    """Parse a TSV interaction file; duplicates removed, order preserved."""
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[0] or not parts[1]:
                raise ParseError(f"malformed interaction at line {lineno}: {line!r}",
                                 line_number=lineno)
            key = (parts[0], parts[1])
            if key in seen:
                continue
            seen.add(key)
            records.append(InteractionRecord(parts[0], parts[1]))
    if not records:
        raise EmptyInputError(f"no interaction records in {path}")
    return records


def _dense_maps(records):
    # sorted raw ids -> dense indices, so the mapping (and everything that
    # follows) is invariant under input record order
    users = sorted({r.user_raw_id for r in records})
    items = sorted({r.item_raw_id for r in records})
    return users, items, {u: k for k, u in enumerate(users)}, {i: k for k, i in enumerate(items)}


def split_dataset(records, ratios=(0.8, 0.1, 0.1), rng_seed: int = 0,
                  mode: str = "per_user") -> Dataset:
    """Random train/valid/test split.

    Per-user mode (default): each user's items are shuffled with a seed
    derived from (rng_seed, user_raw_id); floor rounding sends remainders
    to train, and users with < 3 interactions keep everything in train.
    Global mode shuffles all edges at once; users left without a training
    interaction are dropped with a warning.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    if mode not in ("per_user", "global"):
        raise ConfigError(f"unknown split mode '{mode}'")

    users, items, umap, imap = _dense_maps(records)
    per_user: dict[int, list[int]] = {}
    for r in records:
        per_user.setdefault(umap[r.user_raw_id], []).append(imap[r.item_raw_id])

    train, valid, test = [], [], []
    if mode == "per_user":
        for u in range(len(users)):
            its = sorted(per_user[u])
            # seed from the raw id bytes so the split is stable across runs
            rng = np.random.default_rng(np.random.SeedSequence(
                [rng_seed] + list(users[u].encode("utf-8"))))
            order = rng.permutation(len(its))
            n = len(its)
            if n < 3:
                n_valid = n_test = 0
            else:
                n_valid = int(n * ratios[1])
                n_test = int(n * ratios[2])
            n_train = n - n_valid - n_test
            for pos, k in enumerate(order):
                dest = train if pos < n_train else (valid if pos < n_train + n_valid else test)
                dest.append((u, its[k]))
    else:
        edges = sorted((u, i) for u, its in per_user.items() for i in its)
        rng = np.random.default_rng(rng_seed)
        order = rng.permutation(len(edges))
        n = len(edges)
        n_valid = int(n * ratios[1])
        n_test = int(n * ratios[2])
        n_train = n - n_valid - n_test
        for pos, k in enumerate(order):
            dest = train if pos < n_train else (valid if pos < n_train + n_valid else test)
            dest.append(edges[k])
        trained_users = {u for u, _ in train}
        dropped = set(range(len(users))) - trained_users
        if dropped:
            log.warning("dropping %d users with no training interaction", len(dropped))
            keep = sorted(trained_users)
            remap = {u: k for k, u in enumerate(keep)}
            users = [users[u] for u in keep]
            umap = {raw: remap[umap[raw]] for raw in umap if umap[raw] in remap}
            train = [(remap[u], i) for u, i in train]
            valid = [(remap[u], i) for u, i in valid if u in remap]
            test = [(remap[u], i) for u, i in test if u in remap]

    def arr(edges):
        if not edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(sorted(edges), dtype=np.int64)

    return Dataset(
        user_count=len(users),
        item_count=len(items),
        user_ids=users,
        item_ids=items,
        train_edges=arr(train),
        valid_edges=arr(valid),
        test_edges=arr(test),
        user_index=umap,
        item_index=imap,
    )


# ---------------------------------------------------------------------------
# binary feature matrix format
# ---------------------------------------------------------------------------

def save_matrix(path, matrix: np.ndarray, row_ids: list[str]) -> None:
    """Write a matrix in the engine's binary format plus the id sidecar."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    rows, dim = matrix.shape
    if len(row_ids) != rows:
        raise ContractError("row_ids length must equal row count")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, rows, dim))
        fh.write(matrix.tobytes())
    with open(str(path) + ".ids", "w", encoding="utf-8") as fh:
        for rid in row_ids:
            fh.write(f"{rid}\n")


def read_matrix(path) -> tuple[np.ndarray, list[str]]:
    """Read a binary matrix file and its sidecar without any re-mapping."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic bytes")
    version, rows, dim = struct.unpack("<III", blob[4:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    expected = 16 + rows * dim * 4
    if len(blob) != expected:
        raise FormatError(f"{path}: payload size {len(blob) - 16} does not match "
                          f"rows*dim*4 = {rows * dim * 4}")
    matrix = np.frombuffer(blob, dtype="<f4", offset=16).reshape(rows, dim).copy()
    sidecar = Path(str(path) + ".ids")
    if not sidecar.exists():
        raise FormatError(f"missing id sidecar {sidecar}")
    row_ids = sidecar.read_text(encoding="utf-8").splitlines()
    if len(row_ids) != rows:
        raise FormatError(f"{sidecar}: {len(row_ids)} ids for {rows} rows")
    return matrix, row_ids


def load_features(path, dataset: Dataset, modality: str) -> ModalFeatureTable:
    """Load a feature file and align rows to the dataset's dense item index.

    Items absent from the file get zero rows (logged); ids in the sidecar
    that the dataset does not know are a mapping error.
    """
    matrix, row_ids = read_matrix(path)
    dim = matrix.shape[1]
    aligned = np.zeros((dataset.item_count, dim), dtype=np.float32)
    filled = np.zeros(dataset.item_count, dtype=bool)
    for k, rid in enumerate(row_ids):
        dense = dataset.item_index.get(rid)
        if dense is None:
            raise MappingError(f"{path}: sidecar row {k} names unknown item id {rid!r}")
        aligned[dense] = matrix[k]
        filled[dense] = True
    missing = int((~filled).sum())
    if missing:
        log.warning("%s: %d items missing from feature file, zero-filled", path, missing)
    return ModalFeatureTable(modality=modality, raw_dim=dim, matrix=aligned)


# ---------------------------------------------------------------------------
# synthetic clustered fixture
# ---------------------------------------------------------------------------

def generate_synthetic(user_count: int, item_count: int, cluster_count: int,
                       rng_seed: int, interactions_per_user: int = 15,
                       raw_dim_t: int = 24, raw_dim_v: int = 16,
                       in_cluster_prob: float = 0.9):
    """Clustered interaction fixture where modality genuinely predicts taste.

    Items are grouped into clusters; each user interacts mostly within a
    home cluster; both modal feature tables are cluster centroid + noise.
    Returns (records, text table, visual table) with tables row-aligned to
    the sorted raw item ids (the dense order split_dataset will use).
    """
    if cluster_count > item_count:
        raise ContractError("cluster_count must be <= item_count")
    rng = np.random.default_rng(rng_seed)
    item_cluster = np.arange(item_count) % cluster_count
    centroids_t = rng.normal(0.0, 1.0, size=(cluster_count, raw_dim_t))
    centroids_v = rng.normal(0.0, 1.0, size=(cluster_count, raw_dim_v))
    feats_t = centroids_t[item_cluster] + rng.normal(0.0, 0.25, size=(item_count, raw_dim_t))
    feats_v = centroids_v[item_cluster] + rng.normal(0.0, 0.25, size=(item_count, raw_dim_v))

    width = len(str(item_count - 1))
    item_ids = [f"i{k:0{width}d}" for k in range(item_count)]
    by_cluster = [np.flatnonzero(item_cluster == c) for c in range(cluster_count)]

    records = []
    for u in range(user_count):
        home = u % cluster_count
        chosen: set[int] = set()
        while len(chosen) < min(interactions_per_user, item_count):
            if rng.random() < in_cluster_prob:
                pool = by_cluster[home]
            else:
                pool = np.arange(item_count)
            chosen.add(int(pool[rng.integers(len(pool))]))
        uw = len(str(user_count - 1))
        for i in sorted(chosen):
            records.append(InteractionRecord(f"u{u:0{uw}d}", item_ids[i]))

    table_t = ModalFeatureTable("t", raw_dim_t, feats_t.astype(np.float32))
    table_v = ModalFeatureTable("v", raw_dim_v, feats_v.astype(np.float32))
    return records, table_t, table_v


def write_interactions(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.user_raw_id}\t{r.item_raw_id}\n")


def write_split_manifest(path, dataset: Dataset, rng_seed: int, ratios) -> None:
    """Persist the exact split so train/eval share it byte-for-byte."""
    doc = {
        "seed": rng_seed,
        "ratios": list(ratios),
        "user_ids": dataset.user_ids,
        "item_ids": dataset.item_ids,
        "train": dataset.train_edges.tolist(),
        "valid": dataset.valid_edges.tolist(),
        "test": dataset.test_edges.tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def read_split_manifest(path) -> Dataset:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    users = doc["user_ids"]
    items = doc["item_ids"]

    def arr(key):
        edges = doc[key]
        if not edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(edges, dtype=np.int64)

    return Dataset(
        user_count=len(users),
        item_count=len(items),
        user_ids=users,
        item_ids=items,
        train_edges=arr("train"),
        valid_edges=arr("valid"),
        test_edges=arr("test"),
        user_index={u: k for k, u in enumerate(users)},
        item_index={i: k for k, i in enumerate(items)},
    )
