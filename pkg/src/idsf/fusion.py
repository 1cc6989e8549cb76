"""Hierarchical attention fusion producing the item content representation.

Three blocks with separate trainable parameters: Text Attention fuses the
projected text feature with the text-space item ID embedding, Visual
Attention does the same for the visual side, and VT Attention fuses the
two enhanced branches into the final content vector.  Each block scores
an input as q . tanh(W e + b), softmaxes the two scores and returns the
convex combination of the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError


@dataclass
class AttentionBlock:
    """Trainable (q, W, b) triple for one attention site."""

    q: ad.Tensor  # (d,)
    w: ad.Tensor  # (d, d)
    b: ad.Tensor  # (d,)

    def score(self, x: ad.Tensor) -> ad.Tensor:
        """q . tanh(W x + b) applied rowwise: (n, d) -> (n,)."""
        h = ad.tanh(ad.add_bias(ad.matmul(x, self.w, transpose_b=True), self.b))
        return ad.matvec(h, self.q)


def attend(block: AttentionBlock, first: ad.Tensor, second: ad.Tensor):
    """Fuse two (n, d) inputs; returns (fused rows, (n, 2) weights)."""
    if first.shape != second.shape:
        raise ContractError(f"attend: input shapes differ {first.shape} vs {second.shape}")
    scores = ad.stack_cols([block.score(first), block.score(second)])
    weights = ad.softmax(scores)
    fused = ad.add(ad.rowscale(first, ad.column(weights, 0)),
                   ad.rowscale(second, ad.column(weights, 1)))
    return fused, weights


def attend_single(block: AttentionBlock, e0: np.ndarray, e1: np.ndarray):
    """Convenience wrapper for two single d-vectors (non-batched API)."""
    tape = ad.Tape()
    f, w = attend(block,
                  ad.constant(np.asarray(e0)[None, :], tape),
                  ad.constant(np.asarray(e1)[None, :], tape))
    return f.values[0], w.values[0]


@dataclass
class ContentState:
    """All content-side representations for one forward pass (full catalog)."""

    e_t: ad.Tensor | None = None       # projected text features
    e_v: ad.Tensor | None = None       # projected visual features
    id_t: ad.Tensor | None = None      # text-space item ID rows
    id_v: ad.Tensor | None = None      # visual-space item ID rows
    t_prime: ad.Tensor | None = None   # enhanced text branch
    v_prime: ad.Tensor | None = None   # enhanced visual branch
    e_c: ad.Tensor | None = None       # fused content representation
    weights: dict = None


def content_representation(blocks: dict, e_t, e_v, id_t, id_v,
                           modalities: str = "tv", enhanced: bool = True) -> ContentState:
    """Run the hierarchy under a modality-availability mask.

    modalities in {"t", "v", "tv"}; enhanced=False skips the ID-enhancement
    stage (the "original" rows of the modality-missing experiments).  With
    a single modality the VT stage is bypassed and the sole branch passes
    through unchanged.
    """
    if modalities not in ("t", "v", "tv"):
        raise ConfigError(f"modalities must be t, v or tv, got {modalities!r}")
    state = ContentState(e_t=e_t, e_v=e_v, id_t=id_t, id_v=id_v, weights={})

    if "t" in modalities:
        if enhanced:
            state.t_prime, state.weights["text"] = attend(blocks["text"], e_t, id_t)
        else:
            state.t_prime = e_t
    if "v" in modalities:
        if enhanced:
            state.v_prime, state.weights["visual"] = attend(blocks["visual"], e_v, id_v)
        else:
            state.v_prime = e_v

    if modalities == "tv":
        state.e_c, state.weights["vt"] = attend(blocks["vt"], state.t_prime, state.v_prime)
    elif modalities == "t":
        state.e_c = state.t_prime
    else:
        state.e_c = state.v_prime
    return state
