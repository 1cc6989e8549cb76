"""Mini-batch BPR training: triple sampling, Adam, early stopping.

Early stopping watches validation Recall@20 and stops once it has not
improved for `patience` consecutive epochs; the best checkpoint is kept.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .errors import ConfigError, NumericError
from .evaluate import evaluate
from .model import IDSFModel

log = logging.getLogger(__name__)


class Adam:
    """Plain Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name in sorted(params):
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            params[name] = params[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sample_triples(dataset: Dataset, rng: np.random.Generator) -> np.ndarray:
    """One epoch of (u, i, j) triples: every training edge once, each with
    a negative j drawn uniformly until j is outside u's training positives."""
    positives = dataset.positives("train")
    n_items = dataset.item_count
    triples = []
    for u, i in dataset.train_edges:
        pos = positives[u]
        if len(pos) >= n_items:
            log.warning("user %d has interacted with the whole catalog; skipped", u)
            continue
        j = int(rng.integers(n_items))
        while j in pos:
            j = int(rng.integers(n_items))
        triples.append((int(u), int(i), j))
    return np.asarray(triples, dtype=np.int64)


@dataclass
class TrainState:
    epoch: int = 0
    best_recall20: float = -1.0
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    history: list = field(default_factory=list)


def train_epoch(model: IDSFModel, dataset: Dataset, optimizer: Adam,
                rng: np.random.Generator) -> float:
    """Shuffle one epoch of triples into batches; returns mean batch loss."""
    cfg = model.config
    triples = sample_triples(dataset, rng)
    order = rng.permutation(len(triples))
    triples = triples[order]
    losses = []
    for start in range(0, len(triples), cfg.batch_size):
        batch = triples[start:start + cfg.batch_size]
        tape = ad.Tape()
        tensors = model.param_tensors(tape, trainable=True)
        reps = model.forward_full(tape, tensors)
        loss = model.total_loss(reps, tensors, batch)
        value = float(loss.values)
        if not np.isfinite(value):
            raise NumericError(
                f"non-finite loss at epoch batch starting {start}; "
                f"batch users {batch[:5, 0].tolist()}...")
        grads_by_id = ad.backward(tape, loss)
        grads = {name: ad.grad_of(grads_by_id, t) for name, t in tensors.items()}
        optimizer.step(model.params, grads)
        losses.append(value)
    return float(np.mean(losses)) if losses else 0.0


def fit(model: IDSFModel, dataset: Dataset, checkpoint_dir=None,
        progress_path=None, max_epochs: int | None = None) -> TrainState:
    """Train with early stopping on validation Recall@20.

    Returns the train state; the model is left holding the best parameters
    (also written to checkpoint_dir when given).
    """
    cfg = model.config
    if dataset.valid_edges.shape[0] == 0:
        raise ConfigError("fit requires a nonempty validation split")
    max_epochs = max_epochs if max_epochs is not None else cfg.max_epochs
    optimizer = Adam(model.params, cfg.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7261696e]))
    state = TrainState()
    best_params = {k: v.copy() for k, v in model.params.items()}

    progress = open(progress_path, "w", encoding="utf-8") if progress_path else None
    try:
        for epoch in range(1, max_epochs + 1):
            t0 = time.perf_counter()
            loss = train_epoch(model, dataset, optimizer, rng)
            report = evaluate(model, dataset, "valid", ks=(20,))
            recall20 = report.metrics[20]["recall"]
            elapsed = time.perf_counter() - t0
            state.epoch = epoch
            state.history.append({"epoch": epoch, "loss": loss, "recall20": recall20})
            line = json.dumps({"epoch": epoch, "loss": loss,
                               "recall20": recall20, "elapsed_s": round(elapsed, 3)})
            if progress:
                progress.write(line + "\n")
                progress.flush()
            log.info("epoch %d: loss=%.6f recall20=%.6f", epoch, loss, recall20)
            if recall20 > state.best_recall20:
                state.best_recall20 = recall20
                state.best_epoch = epoch
                state.epochs_since_improvement = 0
                best_params = {k: v.copy() for k, v in model.params.items()}
            else:
                state.epochs_since_improvement += 1
                if state.epochs_since_improvement >= cfg.patience:
                    break
    finally:
        if progress:
            progress.close()

    model.params = best_params
    if checkpoint_dir is not None:
        model.save_checkpoint(checkpoint_dir, extra={
            "best_epoch": state.best_epoch,
            "best_recall20": state.best_recall20,
        })
    return state
