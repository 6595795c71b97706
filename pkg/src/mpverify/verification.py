"""Cross-passage attention between answer candidates and the verification score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ndcore import ContractError, ParamStore, Tensor, concat, index, log, masked_softmax, swapaxes

LOG_FLOOR = 1e-30


@dataclass
class VerifyParams:
    w: Tensor  # 3D x 1, no bias

    @classmethod
    def create(cls, store: ParamStore, repr_dim: int) -> "VerifyParams":
        return cls(store.matrix("verify.w", 3 * repr_dim, 1))


@dataclass
class VerificationOutput:
    similarity: Tensor  # [B, n, n], zero diagonal
    attention: Tensor   # [B, n, n]
    attended: Tensor    # [B, n, D]
    scores: Tensor      # [B, n]
    probs: Tensor       # [B, n]


def _batched(r: Tensor, present):
    single = r.ndim == 2
    if single:
        r = r.reshape(1, *r.shape)
    n = r.shape[1]
    present = np.ones((r.shape[0], n), dtype=bool) if present is None else np.asarray(present, dtype=bool)
    if single and present.ndim == 1:
        present = present[None]
    return r, present, single


def cross_attend(r: Tensor, present: np.ndarray | None = None, mask_self: bool = False):
    """Each candidate attends over all candidates with a zeroed self-similarity.

    The diagonal keeps weight ``exp(0)`` unless ``mask_self`` removes it; a
    candidate with no peers then attends to itself.  Returns
    ``(similarity, attention, attended)`` for [n, D] or [B, n, D] input.
    """
    r, present, single = _batched(r, present)
    n = r.shape[1]
    if n < 1:
        raise ContractError("cross-attention needs at least one candidate")
    off_diag = 1.0 - np.eye(n)
    sim = (r @ swapaxes(r, -1, -2)) * off_diag
    allowed = np.broadcast_to(present[:, None, :], sim.shape).copy()
    if mask_self:
        allowed &= off_diag.astype(bool)
        lonely = ~allowed.any(axis=-1)
        allowed |= lonely[..., None] & np.eye(n, dtype=bool)
    # rows of absent candidates never reach the output; keep them defined
    allowed |= ~present[:, :, None] & np.eye(n, dtype=bool)
    attn = masked_softmax(sim, allowed, axis=-1)
    attended = attn @ r
    if single:
        return sim.reshape(n, n), attn.reshape(n, n), attended.reshape(n, r.shape[-1])
    return sim, attn, attended


def verify_scores(params: VerifyParams, r: Tensor, attended: Tensor,
                  present: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Scores ``w . [r; r~; r * r~]`` and their softmax over the candidates."""
    r, present, single = _batched(r, present)
    if single:
        attended = attended.reshape(1, *attended.shape)
    fused = concat([r, attended, r * attended], axis=-1)
    g = fused @ params.w
    g = g.reshape(g.shape[:-1])
    p = masked_softmax(g, present, axis=-1)
    if single:
        return g.reshape(g.shape[1:]), p.reshape(p.shape[1:])
    return g, p


def verify(params: VerifyParams, r: Tensor, present: np.ndarray | None = None,
           mask_self: bool = False) -> VerificationOutput:
    sim, attn, attended = cross_attend(r, present, mask_self)
    g, p = verify_scores(params, r, attended, present)
    return VerificationOutput(sim, attn, attended, g, p)


def verification_loss(probs: Tensor, gold: np.ndarray) -> Tensor:
    """Mean of ``-log p[gold]`` over the batch; ``probs`` is [B, n]."""
    gold = np.asarray(gold)
    n = probs.shape[-1]
    if ((gold < 0) | (gold >= n)).any():
        raise ContractError(f"gold candidate index out of range for {n} candidates")
    rows = np.arange(len(gold))
    return -log(index(probs, (rows, gold)), floor=LOG_FLOOR).mean()
