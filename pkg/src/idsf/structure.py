"""Modality-specific lightweight propagation with ID retention.

Per layer k:
  item[k] = sum_{u in N_i} c_ui * user[k-1]  + gamma * item_id_m
  user[k] = sum_{i in N_u} c_ui * item[k-1]  + gamma * user_id
Layer-0 item embeddings are the projected modal features; layer-0 user
embeddings are the shared user ID table (per-modality user tables are
available behind a flag).  Structural representations are the unweighted
layer mean per modality, combined across modalities by a dedicated
attention block per side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import autodiff as ad
from .errors import ContractError
from .fusion import AttentionBlock, attend
from .graph import BipartiteGraph, aggregate


@dataclass
class PropagationState:
    """Layer stacks for one modality (index 0..K, users and items)."""

    item_layers: list = field(default_factory=list)
    user_layers: list = field(default_factory=list)


def propagate(graph: BipartiteGraph, item0: ad.Tensor, user0: ad.Tensor,
              item_id: ad.Tensor, user_id: ad.Tensor, gamma: float,
              layers: int) -> PropagationState:
    """Run K propagation layers for one modality; returns the full stacks."""
    if layers < 1:
        raise ContractError("layer count K must be >= 1")
    state = PropagationState(item_layers=[item0], user_layers=[user0])
    for _ in range(layers):
        prev_item = state.item_layers[-1]
        prev_user = state.user_layers[-1]
        item_next = aggregate(graph, "users_to_items", prev_user)
        user_next = aggregate(graph, "items_to_users", prev_item)
        if gamma != 0.0:
            item_next = ad.add(item_next, ad.scale(item_id, gamma))
            user_next = ad.add(user_next, ad.scale(user_id, gamma))
        state.item_layers.append(item_next)
        state.user_layers.append(user_next)
    return state


def layer_mean(layers: list) -> ad.Tensor:
    total = layers[0]
    for t in layers[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(layers))


def structural_representation(states: dict, side: str,
                              block: AttentionBlock | None):
    """Combine per-modality layer means into e^s rows for one side.

    states: modality tag -> PropagationState; a single modality passes its
    layer mean through unchanged, two modalities are fused by attention.
    """
    if side not in ("user", "item"):
        raise ContractError(f"unknown side {side!r}")
    means = {}
    for m, st in states.items():
        stack = st.user_layers if side == "user" else st.item_layers
        means[m] = layer_mean(stack)
    tags = sorted(means)
    if len(tags) == 1:
        return means[tags[0]], None
    if block is None:
        raise ContractError("two modalities need a structural attention block")
    fused, weights = attend(block, means[tags[0]], means[tags[1]])
    return fused, weights
