"""Self-supervised contrastive alignment of pre- and post-fusion rows.

For an anchor row a_i with positive row f_i, the per-item term is
log( I_ii / (I_ii + I_ij) ) with I_ii the temperature-scaled exponential
cosine of (a_i, f_i) and I_ij summing the same quantity over every other
item's positive row and every other item's anchor row.  Three such pair
losses (text branch, visual branch, cross-branch) add up to the total.

Temperature placement: the default "scaled" mode uses exp(cos/tau).  The
"literal" mode applies 1/tau outside the exponential, under which tau
cancels from the ratio; it exists purely for fidelity experiments.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError
from .fusion import ContentState


def _exponent_scale(tau: float, temperature_mode: str) -> float:
    if tau <= 0:
        raise ContractError("temperature must be positive")
    if temperature_mode == "scaled":
        return 1.0 / tau
    if temperature_mode == "literal":
        # exp(f)/tau: the 1/tau factor multiplies every term of the ratio
        # and cancels, so the exponent is left unscaled
        return 1.0
    raise ConfigError(f"unknown temperature mode {temperature_mode!r}")


def mutual_info_term(anchor: ad.Tensor, positive_pool: ad.Tensor,
                     anchor_pool: ad.Tensor, idx, tau: float,
                     temperature_mode: str = "scaled") -> ad.Tensor:
    """Mean over the batch of log(I_ii / (I_ii + I_ij)).

    anchor: (n, d) batch anchor rows; positive_pool / anchor_pool: the
    candidate rows negatives are drawn from (the batch itself for in-batch
    negatives, the full catalog otherwise); idx[k] locates anchor k inside
    the pools.
    """
    n = anchor.shape[0]
    if n < 2 or positive_pool.shape[0] < 2:
        raise ContractError("contrastive batch needs at least 2 items")
    s = _exponent_scale(tau, temperature_mode)
    idx = np.asarray(idx, dtype=np.int64)

    na = ad.normalize_rows(anchor)
    npos = ad.normalize_rows(positive_pool)
    nanc = ad.normalize_rows(anchor_pool)
    sim_pos = ad.matmul(na, npos, transpose_b=True)   # (n, P)
    sim_anc = ad.matmul(na, nanc, transpose_b=True)
    e_pos = ad.exp(ad.scale(sim_pos, s))
    e_anc = ad.exp(ad.scale(sim_anc, s))
    # I_ii + I_ij = row sums minus the anchor's own self-similarity term
    denom = ad.sub(ad.add(ad.sum_axis1(e_pos), ad.sum_axis1(e_anc)),
                   ad.take_per_row(e_anc, idx))
    pos_logit = ad.scale(ad.take_per_row(sim_pos, idx), s)
    return ad.mean_all(ad.sub(pos_logit, ad.log(denom)))


def pair_loss(first: ad.Tensor, second: ad.Tensor, fused: ad.Tensor,
              tau: float, temperature_mode: str = "scaled",
              pools: tuple | None = None, idx=None) -> ad.Tensor:
    """Contrastive loss for one (A, B, Fused) triple.

    -(1/4) * mean_i [ I(a_i, f) + I(f, a) + I(b_i, f) + I(f, b) ];
    the 1/|batch| lives inside mutual_info_term's mean.
    """
    n = first.shape[0]
    if pools is None:
        pools = (first, second, fused)
        idx = np.arange(n)
    pool_a, pool_b, pool_f = pools
    terms = [
        mutual_info_term(first, pool_f, pool_a, idx, tau, temperature_mode),
        mutual_info_term(fused, pool_a, pool_f, idx, tau, temperature_mode),
        mutual_info_term(second, pool_f, pool_b, idx, tau, temperature_mode),
        mutual_info_term(fused, pool_b, pool_f, idx, tau, temperature_mode),
    ]
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, -0.25)


def total_contrastive(state: ContentState, batch_items, tau: float,
                      modalities: str = "tv", enhanced: bool = True,
                      temperature_mode: str = "scaled",
                      negatives: str = "in_batch") -> ad.Tensor | None:
    """Sum of the active pair losses for a batch of item indices.

    Which triples exist depends on the availability mask: ID-enhancement
    triples need enhanced=True and their modality present; the cross-branch
    triple needs both modalities.  Returns None when no triple is active.
    """
    if negatives not in ("in_batch", "catalog"):
        raise ConfigError(f"unknown negatives mode {negatives!r}")
    batch_items = np.asarray(sorted(set(int(i) for i in batch_items)), dtype=np.int64)
    if batch_items.size < 2:
        raise ContractError("contrastive batch needs at least 2 distinct items")

    def rows(t):
        return ad.gather(t, batch_items)

    def one(a_full, b_full, f_full):
        a, b, f = rows(a_full), rows(b_full), rows(f_full)
        if negatives == "in_batch":
            return pair_loss(a, b, f, tau, temperature_mode)
        return pair_loss(a, b, f, tau, temperature_mode,
                         pools=(a_full, b_full, f_full), idx=batch_items)

    losses = []
    if enhanced and "t" in modalities:
        losses.append(one(state.e_t, state.id_t, state.t_prime))
    if enhanced and "v" in modalities:
        losses.append(one(state.e_v, state.id_v, state.v_prime))
    if modalities == "tv":
        losses.append(one(state.t_prime, state.v_prime, state.e_c))
    if not losses:
        return None
    total = losses[0]
    for t in losses[1:]:
        total = ad.add(total, t)
    return total
