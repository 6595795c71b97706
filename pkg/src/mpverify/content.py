"""Per-word answer-content probabilities and the answer representation they induce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ndcore import ContractError, ParamStore, Tensor, log, relu, sigmoid, tsum

CE_FLOOR = 1e-12


@dataclass
class ContentParams:
    hidden_w: Tensor  # 2H x H
    out_w: Tensor     # H x 1

    @classmethod
    def create(cls, store: ParamStore, hidden: int) -> "ContentParams":
        return cls(store.matrix("content.hidden_w", 2 * hidden, hidden),
                   store.matrix("content.out_w", hidden, 1))


def content_probs(params: ContentParams, v: Tensor) -> Tensor:
    """``sigmoid(w . relu(W v_k))`` independently at every position of ``v`` [..., T, 2H]."""
    logits = relu(v @ params.hidden_w) @ params.out_w
    return sigmoid(logits.reshape(logits.shape[:-1]))


def content_loss(probs: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Binary cross-entropy averaged over each instance's real words, then over the batch.

    ``probs``, ``labels`` and ``mask`` are [B, ...]; all trailing axes are
    pooled per instance.
    """
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if (labels[~mask] != 0).any():
        raise ContractError("content label set on a masked position")
    m = mask.astype(np.float64)
    ce = labels * log(probs, floor=CE_FLOOR) + (1.0 - labels) * log(1.0 - probs, floor=CE_FLOOR)
    axes = tuple(range(1, m.ndim))
    per_instance = tsum(ce * m, axis=axes) / np.maximum(m.sum(axis=axes), 1.0)
    return -per_instance.mean()


def answer_representation(probs: Tensor, embeddings: Tensor, mask: np.ndarray) -> Tensor:
    """``(1/|P|) sum_k p_k [e_k; c_k]`` per passage, with |P| the real token count.

    ``probs`` is [..., T], ``embeddings`` [..., T, D]; returns [..., D].
    """
    m = np.asarray(mask, dtype=np.float64)
    weights = probs * m
    total = tsum(embeddings * weights.reshape(*weights.shape, 1), axis=-2)
    return total / np.maximum(m.sum(axis=-1, keepdims=True), 1.0)


def content_score(span: tuple[int, int], probs: np.ndarray) -> float:
    """Mean content probability over the inclusive span."""
    s, e = span
    probs = np.asarray(probs)
    if not 0 <= s <= e < len(probs):
        raise ContractError(f"span {span} outside passage of length {len(probs)}")
    return float(np.mean(probs[s:e + 1]))
