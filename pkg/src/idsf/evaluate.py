"""Full-catalog top-K ranking and Recall/Precision/NDCG computation.

Ranking protocol: every catalog item is scored for every evaluable user;
the user's training positives (and validation positives when scoring the
test split) are masked to -inf; ties break by ascending item index.
Users with no positives in the target split are excluded from the means.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ContractError


@dataclass
class EvalReport:
    metrics: dict          # K -> {"recall": .., "precision": .., "ndcg": ..}
    evaluated_users: int
    split: str
    wall_time_s: float = 0.0
    config: dict = field(default_factory=dict)
    notes: dict = field(default_factory=lambda: {
        "ndcg": "IDCG truncated at min(K, |positives|)",
        "candidates": "all catalog items, train (and valid for test) masked",
    })

    def as_percent(self) -> dict:
        return {k: {name: 100.0 * v for name, v in vals.items()}
                for k, vals in self.metrics.items()}

    def to_json(self) -> str:
        return json.dumps({
            "split": self.split,
            "evaluated_users": self.evaluated_users,
            "metrics_x100": self.as_percent(),
            "wall_time_s": self.wall_time_s,
            "config": self.config,
            "notes": self.notes,
        }, indent=2)

    def to_table(self) -> str:
        ks = sorted(self.metrics)
        header = "Metric(x100%)  " + "".join(f"{'@' + str(k):>10}" for k in ks)
        lines = [header]
        for name in ("recall", "precision", "ndcg"):
            row = f"{name.capitalize():<15}"
            row += "".join(f"{100.0 * self.metrics[k][name]:>10.3f}" for k in ks)
            lines.append(row)
        return "\n".join(lines)


def rank_items(scores: np.ndarray, masked: set | np.ndarray = ()) -> np.ndarray:
    """Descending-score order over all items; masked items pushed to the
    end via -inf; ties break by ascending item index (stable sort)."""
    s = np.asarray(scores, dtype=np.float64).copy()
    masked = np.asarray(sorted(masked), dtype=np.int64) if len(masked) else None
    if masked is not None:
        s[masked] = -np.inf
    return np.argsort(-s, kind="stable")


def metrics_at_k(ranked: np.ndarray, test_positives: set, k: int):
    """(recall, precision, ndcg) for one user, or None if no positives."""
    if k < 1:
        raise ContractError("K must be >= 1")
    if not test_positives:
        return None
    top = ranked[:k]
    hits = [r for r, item in enumerate(top, start=1) if int(item) in test_positives]
    n_hits = len(hits)
    recall = n_hits / len(test_positives)
    precision = n_hits / k
    dcg = sum(1.0 / np.log2(r + 1) for r in hits)
    ideal = sum(1.0 / np.log2(r + 1) for r in range(1, min(k, len(test_positives)) + 1))
    ndcg = dcg / ideal
    return recall, precision, ndcg


def score_matrix(model) -> np.ndarray:
    user_rows, item_rows = model.inference()
    return user_rows @ item_rows.T


def evaluate(model, dataset: Dataset, split: str, ks=(10, 20),
             config_echo: dict | None = None) -> EvalReport:
    """Mean per-user metrics over evaluable users for one split."""
    if split not in ("valid", "test"):
        raise ContractError("split must be valid or test")
    t0 = time.perf_counter()
    scores = score_matrix(model)
    target_pos = dataset.positives(split)
    mask_pos = dataset.positives("train")
    if split == "test":
        valid_pos = dataset.positives("valid")
        mask_pos = [a | b for a, b in zip(mask_pos, valid_pos)]

    sums = {k: np.zeros(3) for k in ks}
    count = 0
    for u in range(dataset.user_count):
        if not target_pos[u]:
            continue
        ranked = rank_items(scores[u], mask_pos[u])
        count += 1
        for k in ks:
            m = metrics_at_k(ranked, target_pos[u], k)
            sums[k] += np.asarray(m)
    metrics = {}
    for k in ks:
        if count:
            r, p, n = (sums[k] / count).tolist()
        else:
            r = p = n = 0.0
        metrics[k] = {"recall": r, "precision": p, "ndcg": n}
    return EvalReport(metrics=metrics, evaluated_users=count, split=split,
                      wall_time_s=time.perf_counter() - t0,
                      config=config_echo or {})
