"""Full forward pass, prediction scores, BPR loss and the total objective.

Prediction is the inner product of the user structural representation
with the sum of the item content and structural representations; no
learned mapping sits in between since both live in the same latent space.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .contrastive import total_contrastive
from .data import Dataset, ModalFeatureTable, read_matrix, save_matrix
from .errors import ConfigError, ContractError
from .fusion import AttentionBlock, ContentState, content_representation
from .graph import BipartiteGraph
from .structure import propagate, structural_representation

ABLATIONS = ("none", "no_content", "content_no_contrast", "content_no_id",
             "structure_no_id")


@dataclass
class ModelConfig:
    embedding_dim: int = 128
    layers: int = 2
    tau: float = 0.5
    beta: float = 0.3
    gamma: float = 0.3
    l2: float = 1e-4
    learning_rate: float = 5e-4
    batch_size: int = 1024
    ablation: str = "none"
    modalities: str = "tv"
    enhanced: bool = True
    negatives: str = "in_batch"           # or "catalog"
    temperature_mode: str = "scaled"      # or "literal"
    user_modal_layer0: str = "shared"     # or "per_modality"
    seed: int = 0
    dtype: str = "float32"
    max_epochs: int = 1000
    patience: int = 5

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ConfigError("embedding_dim must be positive")
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        for name in ("beta", "gamma", "l2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; one of {ABLATIONS}")
        if self.modalities not in ("t", "v", "tv"):
            raise ConfigError("modalities must be t, v or tv")
        if self.negatives not in ("in_batch", "catalog"):
            raise ConfigError("negatives must be in_batch or catalog")
        if self.temperature_mode not in ("scaled", "literal"):
            raise ConfigError("temperature_mode must be scaled or literal")
        if self.user_modal_layer0 not in ("shared", "per_modality"):
            raise ConfigError("user_modal_layer0 must be shared or per_modality")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def effective_gamma(self) -> float:
        if self.ablation == "structure_no_id" or not self.enhanced:
            return 0.0
        return self.gamma

    @property
    def content_enhanced(self) -> bool:
        return self.enhanced and self.ablation != "content_no_id"

    @property
    def content_active(self) -> bool:
        return self.ablation != "no_content"

    @property
    def contrastive_active(self) -> bool:
        return (self.content_active and self.beta > 0.0
                and self.ablation != "content_no_contrast")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def xavier(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:
        fan_in, fan_out = shape[0], 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class Representations:
    """Everything one forward pass produced over the full catalog."""

    content: ContentState | None
    item_struct: ad.Tensor
    user_struct: ad.Tensor
    struct_weights: dict = field(default_factory=dict)

    def item_total(self) -> ad.Tensor:
        if self.content is None:
            return self.item_struct
        return ad.add(self.content.e_c, self.item_struct)


class IDSFModel:
    """Parameter owner and forward-pass orchestrator."""

    def __init__(self, config: ModelConfig, dataset: Dataset,
                 graph: BipartiteGraph, features: dict):
        self.config = config
        self.dataset = dataset
        self.graph = graph
        self.features = {}
        for m in config.modalities:
            if m not in features:
                raise ConfigError(f"modality {m!r} enabled but no feature table given")
            table: ModalFeatureTable = features[m]
            if table.matrix.shape[0] != dataset.item_count:
                raise ContractError("feature table rows must equal item count")
            self.features[m] = table.matrix.astype(config.np_dtype)
        self.params: dict[str, np.ndarray] = {}
        self.init_params()

    # -- parameters ---------------------------------------------------------

    def init_params(self) -> None:
        cfg = self.config
        d = cfg.embedding_dim
        dt = cfg.np_dtype
        rng = np.random.default_rng(cfg.seed)
        p: dict[str, np.ndarray] = {}
        for m in cfg.modalities:
            raw = self.features[m].shape[1]
            p[f"proj_{m}_w"] = xavier(rng, (raw, d), dt)
            p[f"proj_{m}_b"] = xavier(rng, (d,), dt)
            p[f"item_id_{m}"] = xavier(rng, (self.dataset.item_count, d), dt)
        p["user_id"] = xavier(rng, (self.dataset.user_count, d), dt)
        if cfg.user_modal_layer0 == "per_modality":
            for m in cfg.modalities:
                p[f"user_id_{m}"] = xavier(rng, (self.dataset.user_count, d), dt)
        blocks = ["vt"] if cfg.modalities == "tv" else []
        if "t" in cfg.modalities:
            blocks.append("text")
        if "v" in cfg.modalities:
            blocks.append("visual")
        blocks.append("struct_item")
        blocks.append("struct_user")
        if cfg.modalities != "tv":
            blocks.remove("struct_item")
            blocks.remove("struct_user")
        for name in blocks:
            p[f"att_{name}_q"] = xavier(rng, (d,), dt)
            p[f"att_{name}_w"] = xavier(rng, (d, d), dt)
            p[f"att_{name}_b"] = xavier(rng, (d,), dt)
        self.params = p

    def param_tensors(self, tape: ad.Tape | None, trainable: bool = True) -> dict:
        make = ad.parameter if trainable else ad.constant
        return {k: make(v, tape) for k, v in self.params.items()}

    def _block(self, tensors: dict, name: str) -> AttentionBlock:
        return AttentionBlock(q=tensors[f"att_{name}_q"],
                              w=tensors[f"att_{name}_w"],
                              b=tensors[f"att_{name}_b"])

    # -- forward ------------------------------------------------------------

    def forward_full(self, tape: ad.Tape | None = None,
                     tensors: dict | None = None) -> Representations:
        """Content and structural representations for the whole catalog."""
        cfg = self.config
        if tensors is None:
            tensors = self.param_tensors(tape, trainable=False)

        projected = {}
        for m in cfg.modalities:
            raw = ad.constant(self.features[m], tape)
            projected[m] = ad.add_bias(ad.matmul(raw, tensors[f"proj_{m}_w"]),
                                       tensors[f"proj_{m}_b"])

        content = None
        if cfg.content_active:
            blocks = {}
            for name in ("text", "visual", "vt"):
                if f"att_{name}_q" in tensors:
                    blocks[name] = self._block(tensors, name)
            content = content_representation(
                blocks,
                e_t=projected.get("t"), e_v=projected.get("v"),
                id_t=tensors.get("item_id_t"), id_v=tensors.get("item_id_v"),
                modalities=cfg.modalities, enhanced=cfg.content_enhanced)
        else:
            # contrastive and prediction skip content, but structure still
            # consumes the projected features below
            content = None

        states = {}
        for m in cfg.modalities:
            user0 = tensors.get(f"user_id_{m}", tensors["user_id"])
            states[m] = propagate(
                self.graph, item0=projected[m], user0=user0,
                item_id=tensors[f"item_id_{m}"], user_id=tensors["user_id"],
                gamma=cfg.effective_gamma, layers=cfg.layers)

        item_block = self._block(tensors, "struct_item") if cfg.modalities == "tv" else None
        user_block = self._block(tensors, "struct_user") if cfg.modalities == "tv" else None
        item_s, item_w = structural_representation(states, "item", item_block)
        user_s, user_w = structural_representation(states, "user", user_block)
        return Representations(content=content, item_struct=item_s, user_struct=user_s,
                               struct_weights={"item": item_w, "user": user_w})

    # -- losses -------------------------------------------------------------

    @staticmethod
    def predict(reps: Representations, users, items) -> ad.Tensor:
        """Scores for aligned (user, item) index vectors."""
        eu = ad.gather(reps.user_struct, users)
        ei = ad.gather(reps.item_total(), items)
        return ad.sum_axis1(ad.mul(eu, ei))

    def bpr_loss(self, reps: Representations, triples: np.ndarray) -> ad.Tensor:
        """Mean over triples of -ln sigma(score(u,i) - score(u,j))."""
        s_pos = self.predict(reps, triples[:, 0], triples[:, 1])
        s_neg = self.predict(reps, triples[:, 0], triples[:, 2])
        return ad.scale(ad.mean_all(ad.log_sigmoid(ad.sub(s_pos, s_neg))), -1.0)

    def l2_penalty(self, tensors: dict) -> ad.Tensor:
        total = None
        for name in sorted(tensors):
            sq = ad.sum_squares(tensors[name])
            total = sq if total is None else ad.add(total, sq)
        return total

    def total_loss(self, reps: Representations, tensors: dict,
                   triples: np.ndarray) -> ad.Tensor:
        """L = L_BPR + beta * L_C + l2 * ||params||^2 for one batch."""
        cfg = self.config
        loss = self.bpr_loss(reps, triples)
        if cfg.contrastive_active:
            batch_items = np.unique(triples[:, 1])
            if batch_items.size >= 2:
                lc = total_contrastive(
                    reps.content, batch_items, cfg.tau,
                    modalities=cfg.modalities, enhanced=cfg.content_enhanced,
                    temperature_mode=cfg.temperature_mode, negatives=cfg.negatives)
                if lc is not None:
                    loss = ad.add(loss, ad.scale(lc, cfg.beta))
        if cfg.l2 > 0.0:
            loss = ad.add(loss, ad.scale(self.l2_penalty(tensors), cfg.l2))
        return loss

    # -- inference ----------------------------------------------------------

    def inference(self) -> tuple[np.ndarray, np.ndarray]:
        """(user rows, combined item rows) as plain arrays for ranking."""
        tape = ad.Tape()
        reps = self.forward_full(tape)
        return reps.user_struct.values, reps.item_total().values

    # -- checkpointing ------------------------------------------------------

    def save_checkpoint(self, directory, extra: dict | None = None) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {"config": self.config.to_dict(), "tensors": {}}
        if extra:
            manifest.update(extra)
        for name in sorted(self.params):
            arr = self.params[name]
            mat = arr if arr.ndim == 2 else arr[None, :]
            fname = f"{name}.mat"
            save_matrix(directory / fname, mat, [f"r{k}" for k in range(mat.shape[0])])
            manifest["tensors"][name] = {"file": fname, "shape": list(arr.shape)}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2),
                                                 encoding="utf-8")

    def load_checkpoint(self, directory) -> dict:
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        for name, meta in manifest["tensors"].items():
            mat, _ = read_matrix(directory / meta["file"])
            arr = mat.reshape(meta["shape"]).astype(self.config.np_dtype)
            if name not in self.params:
                raise ConfigError(f"checkpoint tensor {name!r} unknown to this model")
            if tuple(arr.shape) != self.params[name].shape:
                raise ConfigError(f"checkpoint tensor {name!r} has shape {arr.shape}, "
                                  f"expected {self.params[name].shape}")
            self.params[name] = arr
        return manifest
