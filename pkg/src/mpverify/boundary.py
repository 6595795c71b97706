"""Pointer-network start/end prediction over all passages of a question."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import OffsetTable
from .ndcore import (ContractError, LSTMParams, ParamStore, Tensor, index, log, lstm_cell,
                     masked_softmax, tanh)

LOG_FLOOR = 1e-30


@dataclass
class BoundaryParams:
    init_w: Tensor   # 2H x H: question summary -> decoder state
    init_b: Tensor
    attn_v: Tensor   # 2H x H (passage half of the scoring matrix)
    attn_h: Tensor   # H x H  (decoder-state half)
    attn_out: Tensor  # H x 1
    decoder: LSTMParams

    @classmethod
    def create(cls, store: ParamStore, hidden: int) -> "BoundaryParams":
        # scoring matrix over [v; h] is stored as two blocks sharing one fan-in
        bound = 1.0 / np.sqrt(3 * hidden)
        attn = store.rng.uniform(-bound, bound, size=(3 * hidden, hidden))
        attn_v = store.add("boundary.attn_v", attn[:2 * hidden], decay=True)
        attn_h = store.add("boundary.attn_h", attn[2 * hidden:], decay=True)
        return cls(store.matrix("boundary.init_w", 2 * hidden, hidden),
                   store.vector("boundary.init_b", hidden),
                   attn_v, attn_h,
                   store.matrix("boundary.attn_out", hidden, 1),
                   LSTMParams.create(store, "boundary.decoder", 2 * hidden, hidden))


@dataclass
class BoundaryDistribution:
    """Start/end probabilities in the padded [passages * Tp] layout."""

    start: Tensor        # [B, L]
    end: Tensor          # [B, L]
    mask: np.ndarray     # [B, L]

    def global_probs(self, b: int, table: OffsetTable) -> tuple[np.ndarray, np.ndarray]:
        """Probabilities indexed by position in the concatenation of real tokens."""
        return self.start.data[b, table.slots], self.end.data[b, table.slots]


def predict_boundary(params: BoundaryParams, v: Tensor, mask: np.ndarray,
                     question_summary: Tensor) -> BoundaryDistribution:
    """Two attention-decoder steps; their attention weights are the start and end distributions.

    ``v`` is the [B, L, 2H] concatenation of matched passages and
    ``question_summary`` the [B, 2H] final question-encoder state.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ContractError("boundary prediction over fully masked positions")
    B, L, _ = v.shape
    hidden = params.attn_h.shape[0]
    h = question_summary @ params.init_w + params.init_b
    c = Tensor(np.zeros((B, hidden)))
    proj_v = v @ params.attn_v                                   # [B, L, H]
    dists = []
    for step in range(2):
        hh = (h @ params.attn_h).reshape(B, 1, hidden)
        scores = (tanh(proj_v + hh) @ params.attn_out).reshape(B, L)
        alpha = masked_softmax(scores, mask, axis=-1)
        dists.append(alpha)
        if step == 0:
            context = (alpha.reshape(B, 1, L) @ v).reshape(B, v.shape[-1])
            h, c = lstm_cell(context, h, c, params.decoder)
    return BoundaryDistribution(dists[0], dists[1], mask)


def boundary_loss(dist: BoundaryDistribution, gold_start: np.ndarray, gold_end: np.ndarray) -> Tensor:
    """Mean over the batch of ``-(log p_start[y1] + log p_end[y2])``; positions are padded-layout slots."""
    gold_start = np.asarray(gold_start)
    gold_end = np.asarray(gold_end)
    rows = np.arange(len(gold_start))
    if not (dist.mask[rows, gold_start].all() and dist.mask[rows, gold_end].all()):
        raise ContractError("gold boundary position is masked")
    ls = log(index(dist.start, (rows, gold_start)), floor=LOG_FLOOR)
    le = log(index(dist.end, (rows, gold_end)), floor=LOG_FLOOR)
    return -(ls + le).mean()


@dataclass
class AnswerCandidate:
    passage: int
    start: int              # local, inclusive
    end: int
    global_start: int
    global_end: int
    boundary_score: float
    content_score: float = 1.0
    verification_score: float = 1.0
    tokens: list[str] = field(default_factory=list)

    @property
    def answer(self) -> str:
        return " ".join(self.tokens)


def best_span(start_probs: np.ndarray, end_probs: np.ndarray, max_span_len: int) -> tuple[int, int, float]:
    """Argmax of ``start[s] * end[e]`` over ``s <= e < s + max_span_len``.

    Row-major argmax over (s, e) gives ties to the smaller start, then the
    shorter span.
    """
    n = len(start_probs)
    scores = np.outer(start_probs, end_probs)
    s_idx, e_idx = np.indices((n, n))
    allowed = (e_idx >= s_idx) & (e_idx - s_idx < max_span_len)
    scores = np.where(allowed, scores, -1.0)
    flat = int(np.argmax(scores))
    s, e = divmod(flat, n)
    return s, e, float(start_probs[s] * end_probs[e])


def extract_candidates(start_probs: np.ndarray, end_probs: np.ndarray, table: OffsetTable,
                       max_span_len: int = 30, passages: list[list[str]] | None = None) -> list[AnswerCandidate]:
    """Best span inside each passage; probabilities are over global positions."""
    if max_span_len < 1:
        raise ContractError("max_span_len must be positive")
    out = []
    for p, n in enumerate(table.lengths):
        if n == 0:
            continue
        g0 = table.starts[p]
        s, e, score = best_span(start_probs[g0:g0 + n], end_probs[g0:g0 + n], max_span_len)
        toks = passages[p][s:e + 1] if passages is not None else []
        out.append(AnswerCandidate(p, s, e, g0 + s, g0 + e, score, tokens=list(toks)))
    return out
