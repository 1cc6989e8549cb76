import numpy as np
import pytest

from idsf import data as dataio
from idsf.errors import EmptyInputError, FormatError, MappingError, ParseError


@pytest.fixture
def tiny_tsv(tmp_path):
    p = tmp_path / "inter.tsv"
    p.write_text("u1\ti1\nu1\ti2\nu2\ti1\nu1\ti1\n", encoding="utf-8")
    return p


def test_load_interactions_dedup(tiny_tsv):
    records = dataio.load_interactions(tiny_tsv)
    assert len(records) == 3  # the duplicate (u1, i1) collapses


def test_single_line_file(tmp_path):
    p = tmp_path / "one.tsv"
    p.write_text("u1\ti1\n", encoding="utf-8")
    records = dataio.load_interactions(p)
    assert records == [dataio.InteractionRecord("u1", "i1")]


def test_extra_columns_ignored(tmp_path):
    p = tmp_path / "cols.tsv"
    p.write_text("u1\ti1\t4.5\t123456\n", encoding="utf-8")
    assert dataio.load_interactions(p)[0].item_raw_id == "i1"


def test_malformed_line_reports_number(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("u1\ti1\njusttext\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        dataio.load_interactions(p)
    assert exc.value.line_number == 2


def test_empty_file_raises(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("", encoding="utf-8")
    with pytest.raises(EmptyInputError):
        dataio.load_interactions(p)


def make_records(counts):
    """counts: user_raw_id -> number of items."""
    records = []
    for u, n in counts.items():
        for k in range(n):
            records.append(dataio.InteractionRecord(u, f"i{k:03d}"))
    return records


def test_split_ratio_8_1_1():
    ds = dataio.split_dataset(make_records({"u0": 10}), (0.8, 0.1, 0.1), 0)
    assert len(ds.train_edges) == 8
    assert len(ds.valid_edges) == 1
    assert len(ds.test_edges) == 1


def test_small_users_keep_everything_in_train():
    ds = dataio.split_dataset(make_records({"u0": 2}), (0.8, 0.1, 0.1), 0)
    assert len(ds.train_edges) == 2
    assert len(ds.valid_edges) == 0
    assert len(ds.test_edges) == 0


def test_split_determinism_and_disjointness():
    records = make_records({f"u{k}": 12 for k in range(6)})
    a = dataio.split_dataset(records, (0.8, 0.1, 0.1), 42)
    b = dataio.split_dataset(records, (0.8, 0.1, 0.1), 42)
    assert np.array_equal(a.train_edges, b.train_edges)
    assert np.array_equal(a.test_edges, b.test_edges)
    all_edges = {tuple(e) for split in ("train", "valid", "test") for e in a.edges(split)}
    assert len(all_edges) == len(a.train_edges) + len(a.valid_edges) + len(a.test_edges)
    assert len(all_edges) == len(records)


def test_split_invariant_under_record_order():
    records = make_records({f"u{k}": 9 for k in range(4)})
    shuffled = list(reversed(records))
    a = dataio.split_dataset(records, (0.8, 0.1, 0.1), 7)
    b = dataio.split_dataset(shuffled, (0.8, 0.1, 0.1), 7)
    assert np.array_equal(a.train_edges, b.train_edges)
    assert a.user_ids == b.user_ids and a.item_ids == b.item_ids


def test_dense_reindex_bijection():
    records = make_records({"ua": 4, "ub": 4})
    ds = dataio.split_dataset(records, (0.8, 0.1, 0.1), 0)
    assert sorted(ds.user_index.values()) == list(range(ds.user_count))
    assert sorted(ds.item_index.values()) == list(range(ds.item_count))
    for raw, dense in ds.item_index.items():
        assert ds.item_ids[dense] == raw


def test_positives_consistent_with_edges():
    records = make_records({f"u{k}": 10 for k in range(3)})
    ds = dataio.split_dataset(records, (0.8, 0.1, 0.1), 3)
    for split in ("train", "valid", "test"):
        nu = ds.positives(split)
        ni = ds.item_positives(split)
        for u, i in ds.edges(split):
            assert i in nu[u]
            assert u in ni[i]


def test_matrix_roundtrip(tmp_path):
    mat = np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32)
    path = tmp_path / "f.mat"
    dataio.save_matrix(path, mat, ["a", "b", "c"])
    back, ids = dataio.read_matrix(path)
    assert np.array_equal(back, mat)
    assert ids == ["a", "b", "c"]
    # header sanity: 4 magic + 12 header + 48 payload
    assert path.stat().st_size == 16 + 3 * 4 * 4


def test_matrix_bad_magic(tmp_path):
    p = tmp_path / "f.mat"
    p.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(FormatError):
        dataio.read_matrix(p)


def test_matrix_short_payload(tmp_path):
    mat = np.zeros((3, 4), dtype=np.float32)
    path = tmp_path / "f.mat"
    dataio.save_matrix(path, mat, ["a", "b", "c"])
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(FormatError):
        dataio.read_matrix(path)


def test_load_features_aligns_and_zero_fills(tmp_path, caplog):
    records = [dataio.InteractionRecord("u0", i) for i in ("ia", "ib", "ic")]
    ds = dataio.split_dataset(records, (0.8, 0.1, 0.1), 0)
    mat = np.arange(8, dtype=np.float32).reshape(2, 4)
    path = tmp_path / "feat.mat"
    dataio.save_matrix(path, mat, ["ic", "ia"])  # deliberately scrambled order
    table = dataio.load_features(path, ds, "t")
    assert np.array_equal(table.matrix[ds.item_index["ic"]], mat[0])
    assert np.array_equal(table.matrix[ds.item_index["ia"]], mat[1])
    assert np.array_equal(table.matrix[ds.item_index["ib"]], np.zeros(4))


def test_load_features_unknown_id_errors(tmp_path):
    records = [dataio.InteractionRecord("u0", "ia")]
    ds = dataio.split_dataset(records, (0.8, 0.1, 0.1), 0)
    path = tmp_path / "feat.mat"
    dataio.save_matrix(path, np.zeros((1, 2), dtype=np.float32), ["mystery"])
    with pytest.raises(MappingError):
        dataio.load_features(path, ds, "t")


def test_synthetic_determinism():
    a = dataio.generate_synthetic(50, 100, 5, rng_seed=7)
    b = dataio.generate_synthetic(50, 100, 5, rng_seed=7)
    assert a[0] == b[0]
    assert np.array_equal(a[1].matrix, b[1].matrix)
    assert np.array_equal(a[2].matrix, b[2].matrix)


def test_synthetic_cluster_signal():
    _, table_t, _ = dataio.generate_synthetic(50, 100, 5, rng_seed=7)
    feats = table_t.matrix.astype(np.float64)
    unit = feats / np.linalg.norm(feats, axis=1, keepdims=True)
    sim = unit @ unit.T
    cluster = np.arange(100) % 5
    same = cluster[:, None] == cluster[None, :]
    off = ~np.eye(100, dtype=bool)
    assert sim[same & off].mean() > sim[~same].mean()


def test_synthetic_single_cluster_is_uninformative():
    _, table_t, _ = dataio.generate_synthetic(20, 30, 1, rng_seed=5)
    assert table_t.matrix.shape == (30, 24)  # one centroid, noise only


def test_split_manifest_roundtrip(tmp_path):
    records = make_records({f"u{k}": 10 for k in range(4)})
    ds = dataio.split_dataset(records, (0.8, 0.1, 0.1), 9)
    path = tmp_path / "split.json"
    dataio.write_split_manifest(path, ds, 9, (0.8, 0.1, 0.1))
    back = dataio.read_split_manifest(path)
    assert np.array_equal(back.train_edges, ds.train_edges)
    assert np.array_equal(back.valid_edges, ds.valid_edges)
    assert back.item_index == ds.item_index
