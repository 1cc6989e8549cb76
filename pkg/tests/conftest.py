import numpy as np
import pytest

from idsf import data as dataio
from idsf.graph import build_graph
from idsf.model import IDSFModel, ModelConfig


def toy_dataset(users=5, items=8, clusters=2, seed=3, per_user=4):
    records, table_t, table_v = dataio.generate_synthetic(
        users, items, clusters, rng_seed=seed, interactions_per_user=per_user,
        raw_dim_t=6, raw_dim_v=4)
    dataset = dataio.split_dataset(records, (0.8, 0.1, 0.1), 0)
    # keep only feature rows for items that survived into the dataset
    rows = [int(raw[1:]) for raw in dataset.item_ids]
    features = {}
    for table in (table_t, table_v):
        features[table.modality] = dataio.ModalFeatureTable(
            table.modality, table.raw_dim, table.matrix[rows])
    return dataset, features


def make_model(dataset=None, features=None, **cfg_kwargs):
    if dataset is None:
        dataset, features = toy_dataset()
    defaults = dict(embedding_dim=8, layers=2, batch_size=64, seed=2)
    defaults.update(cfg_kwargs)
    config = ModelConfig(**defaults)
    return IDSFModel(config, dataset, build_graph(dataset), features)


def make_triples(dataset, count=10, seed=0):
    rng = np.random.default_rng(seed)
    positives = dataset.positives("train")
    triples = []
    for u, i in dataset.train_edges[:count]:
        j = int(rng.integers(dataset.item_count))
        while j in positives[u]:
            j = int(rng.integers(dataset.item_count))
        triples.append((int(u), int(i), j))
    return np.asarray(triples, dtype=np.int64)


@pytest.fixture
def toy():
    dataset, features = toy_dataset()
    return dataset, features
