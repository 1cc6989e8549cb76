import numpy as np
import pytest

from conftest import make_model, make_triples, toy_dataset

from idsf import autodiff as ad
from idsf.errors import ConfigError
from idsf.model import ModelConfig, Representations


def reps_from_arrays(user_s, item_s, item_c=None):
    content = None
    if item_c is not None:
        from idsf.fusion import ContentState
        content = ContentState(e_c=ad.constant(np.asarray(item_c, dtype=float)))
    return Representations(content=content,
                           item_struct=ad.constant(np.asarray(item_s, dtype=float)),
                           user_struct=ad.constant(np.asarray(user_s, dtype=float)))


def test_predict_inner_product():
    reps = reps_from_arrays([[1.0, 0.0]], [[0.5, 0.0]], [[0.5, 0.0]])
    from idsf.model import IDSFModel
    score = IDSFModel.predict(reps, [0], [0])
    assert score.values[0] == pytest.approx(1.0)


def test_zero_user_scores_zero_everywhere():
    rng = np.random.default_rng(0)
    reps = reps_from_arrays(np.zeros((1, 4)), rng.normal(size=(6, 4)),
                            rng.normal(size=(6, 4)))
    from idsf.model import IDSFModel
    scores = IDSFModel.predict(reps, [0] * 6, list(range(6)))
    assert np.allclose(scores.values, 0.0)


def test_no_content_drops_content_from_score():
    model = make_model(ablation="no_content")
    reps = model.forward_full(ad.Tape())
    assert reps.content is None
    score = model.predict(reps, [0], [1]).values[0]
    manual = float(reps.user_struct.values[0] @ reps.item_struct.values[1])
    assert score == pytest.approx(manual, rel=1e-6)


def test_bpr_equal_scores_is_ln2(toy):
    dataset, features = toy
    model = make_model(dataset, features)
    reps = reps_from_arrays(np.zeros((dataset.user_count, 8)),
                            np.zeros((dataset.item_count, 8)))
    triples = make_triples(dataset, 6)
    loss = model.bpr_loss(reps, triples)
    assert float(loss.values) == pytest.approx(np.log(2.0), abs=1e-9)


def test_bpr_vanishes_for_large_margin(toy):
    dataset, features = toy
    model = make_model(dataset, features)
    user_s = np.zeros((dataset.user_count, 8))
    user_s[:, 0] = 100.0
    item_s = np.zeros((dataset.item_count, 8))
    triples = make_triples(dataset, 4)
    item_s[triples[:, 1], 0] = 1.0
    item_s[triples[:, 2], 0] = -1.0
    loss = model.bpr_loss(reps_from_arrays(user_s, item_s), triples)
    assert 0.0 <= float(loss.values) < 1e-9


def test_bpr_matches_scalar_recomputation(toy):
    dataset, features = toy
    model = make_model(dataset, features)
    rng = np.random.default_rng(1)
    user_s = rng.normal(size=(dataset.user_count, 8))
    item_s = rng.normal(size=(dataset.item_count, 8))
    triples = make_triples(dataset, 8)
    loss = float(model.bpr_loss(reps_from_arrays(user_s, item_s), triples).values)
    ref = 0.0
    for u, i, j in triples:
        s = user_s[u] @ item_s[i] - user_s[u] @ item_s[j]
        ref += -np.log(1.0 / (1.0 + np.exp(-s)))
    assert loss == pytest.approx(ref / len(triples), abs=1e-10)


def test_total_loss_reduces_to_bpr_when_beta_l2_zero():
    model = make_model(beta=0.0, l2=0.0, dtype="float64")
    tape = ad.Tape()
    tensors = model.param_tensors(tape)
    reps = model.forward_full(tape, tensors)
    triples = make_triples(model.dataset, 8)
    total = model.total_loss(reps, tensors, triples)
    bpr = model.bpr_loss(reps, triples)
    assert float(total.values) == pytest.approx(float(bpr.values), abs=1e-12)


def test_l2_term_is_sum_of_squares():
    model0 = make_model(beta=0.0, l2=0.0, dtype="float64")
    model1 = make_model(beta=0.0, l2=1.0, dtype="float64")
    triples = make_triples(model0.dataset, 8)
    losses = []
    for model in (model0, model1):
        tape = ad.Tape()
        tensors = model.param_tensors(tape)
        reps = model.forward_full(tape, tensors)
        losses.append(float(model.total_loss(reps, tensors, triples).values))
    norm_sq = sum(float((p * p).sum()) for p in model1.params.values())
    assert losses[1] - losses[0] == pytest.approx(norm_sq, rel=1e-9)


def test_structure_no_id_equals_gamma_zero_bitwise():
    a = make_model(ablation="structure_no_id", gamma=0.3)
    b = make_model(gamma=0.0)
    ua, ia = a.inference()
    ub, ib = b.inference()
    assert ua.tobytes() == ub.tobytes()
    assert ia.tobytes() == ib.tobytes()


def test_constant_item_shift_preserves_ranking():
    model = make_model()
    user_rows, item_rows = model.inference()
    from idsf.evaluate import rank_items
    shift = np.full(item_rows.shape[1], 0.37, dtype=item_rows.dtype)
    for u in range(model.dataset.user_count):
        base = rank_items(user_rows[u] @ item_rows.T)
        shifted = rank_items(user_rows[u] @ (item_rows + shift).T)
        assert np.array_equal(base, shifted)


def test_forward_is_deterministic():
    a = make_model(seed=11)
    b = make_model(seed=11)
    ua, ia = a.inference()
    ub, ib = b.inference()
    assert ua.tobytes() == ub.tobytes() and ia.tobytes() == ib.tobytes()


def test_checkpoint_roundtrip(tmp_path):
    model = make_model(seed=5)
    model.save_checkpoint(tmp_path / "ckpt")
    clone = make_model(seed=99)
    clone.load_checkpoint(tmp_path / "ckpt")
    for name in model.params:
        assert model.params[name].tobytes() == clone.params[name].tobytes()


@pytest.mark.parametrize("kwargs", [
    {"embedding_dim": 0},
    {"layers": 0},
    {"tau": 0.0},
    {"beta": -0.1},
    {"ablation": "no_content_no_contrast"},
    {"modalities": "x"},
    {"negatives": "everything"},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"embedding_dim": 8, "gama": 0.3})


def test_missing_feature_table_rejected():
    dataset, features = toy_dataset()
    with pytest.raises(ConfigError):
        make_model(dataset, {"t": features["t"]})  # visual missing, modalities=tv
