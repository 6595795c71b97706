"""The joint model: shared encoder/matcher feeding boundary, content and verification heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..boundary import (AnswerCandidate, BoundaryDistribution, BoundaryParams, boundary_loss,
                        extract_candidates, predict_boundary)
from ..content import (ContentParams, answer_representation, content_loss, content_probs,
                       content_score)
from ..data import PAD, Batch, Example, Vocabulary, make_batch
from ..encoder import EncoderParams, embed, encode, match
from ..ndcore import ParamStore, Tensor, index
from ..verification import VerificationOutput, VerifyParams, verification_loss, verify
from .config import ModelConfig

SCORE_FLOOR = 1e-30
# parameters that only the auxiliary heads read
HEAD_PREFIXES = {"content": "content.", "verification": "verify."}


class NoAnswerError(RuntimeError):
    """Prediction found no candidate span in any passage."""


def joint_loss(boundary, content, verification, content_weight: float, verify_weight: float):
    """``boundary + content_weight * content + verify_weight * verification``.

    Zero-weight terms are skipped so they may be ``None``.
    """
    total = boundary
    if content_weight != 0.0:
        total = total + content * content_weight
    if verify_weight != 0.0:
        total = total + verification * verify_weight
    return total


@dataclass
class ForwardResult:
    boundary: BoundaryDistribution
    content: Tensor | None            # [B, N, Tp]
    verification: VerificationOutput | None
    losses: dict[str, Tensor] = field(default_factory=dict)
    loss: Tensor | None = None


class MRCModel:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, pretrained: np.ndarray | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.store = ParamStore(np.random.default_rng(cfg.seed))
        H = cfg.hidden
        self.encoder = EncoderParams.create(self.store, vocab.n_tokens, vocab.n_chars, cfg.word_dim,
                                            cfg.char_dim, H, pretrained)
        self.boundary = BoundaryParams.create(self.store, H)
        self.content = ContentParams.create(self.store, H)
        self.verify = VerifyParams.create(self.store, cfg.word_dim + cfg.char_dim)

    @property
    def params(self):
        return self.store.trainable()

    def active_heads(self, training: bool) -> set[str]:
        cfg = self.cfg
        heads = set()
        if (training and cfg.content_weight > 0) or (not training and cfg.use_content_score):
            heads.add("content")
        if (training and cfg.verify_weight > 0) or (not training and cfg.use_verification_score):
            heads.add("verification")
        if "verification" in heads:
            heads.add("content")  # candidate representations come from content probabilities
        return heads

    def trained_params(self):
        """Parameters the training objective can reach; others get no L2 either."""
        skip = [HEAD_PREFIXES[h] for h in HEAD_PREFIXES
                if (h == "content" and self.cfg.content_weight == 0)
                or (h == "verification" and self.cfg.verify_weight == 0)]
        return [p for p in self.params if not any(p.name.startswith(s) for s in skip)]

    def batch(self, examples, require_gold: bool = False) -> Batch:
        c = self.cfg
        return make_batch(examples, self.vocab, c.max_question_len, c.max_passage_len, c.max_passages,
                          c.max_word_len, require_gold=require_gold)

    def forward(self, batch: Batch, heads: set[str] | None = None, with_loss: bool = False) -> ForwardResult:
        if heads is None:
            heads = {"content", "verification"}
        B, N, Tp = batch.p_ids.shape
        q_emb = embed(self.encoder, batch.q_ids, batch.q_chars)
        p_emb = embed(self.encoder, batch.p_ids.reshape(B * N, Tp),
                      batch.p_chars.reshape(B * N, Tp, -1))
        p_mask = batch.p_mask.reshape(B * N, Tp)
        uq, q_final, up = encode(self.encoder, q_emb, batch.q_mask, p_emb, p_mask,
                                 batch.passage_mask.reshape(-1))
        rows = np.repeat(np.arange(B), N)
        matched = match(self.encoder, index(uq, rows), batch.q_mask[rows], up, p_mask)
        width = matched.v.shape[-1]
        dist = predict_boundary(self.boundary, matched.v.reshape(B, N * Tp, width),
                                batch.p_mask.reshape(B, N * Tp), q_final)
        probs = ver = None
        if "content" in heads or "verification" in heads:
            probs = content_probs(self.content, matched.v).reshape(B, N, Tp)
        if "verification" in heads:
            r = answer_representation(probs, p_emb.reshape(B, N, Tp, -1), batch.p_mask)
            ver = verify(self.verify, r, batch.passage_mask, self.cfg.mask_self_attention)
        out = ForwardResult(dist, probs, ver)
        if with_loss:
            gs, ge = batch.gold_slots()
            out.losses["boundary"] = boundary_loss(dist, gs, ge)
            if probs is not None and "content" in heads:
                out.losses["content"] = content_loss(probs, batch.content_labels, batch.p_mask)
            if ver is not None:
                out.losses["verification"] = verification_loss(ver.probs, batch.gold_passage)
            cw = self.cfg.content_weight if "content" in out.losses else 0.0
            vw = self.cfg.verify_weight if "verification" in out.losses else 0.0
            out.loss = joint_loss(out.losses["boundary"], out.losses.get("content"),
                                  out.losses.get("verification"), cw, vw)
        return out

    def zero_pad_grads(self, grads: dict[str, np.ndarray]) -> None:
        for name in ("embed.word", "embed.char"):
            if name in grads:
                grads[name][PAD] = 0.0


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

@dataclass
class Prediction:
    id: str
    chosen: AnswerCandidate
    candidates: list[AnswerCandidate]
    score: float

    def to_json(self) -> dict:
        c = self.chosen
        return {"id": self.id, "answer": c.tokens, "answer_text": c.answer, "passage": c.passage,
                "start": c.start, "end": c.end, "boundary_score": c.boundary_score,
                "content_score": c.content_score, "verification_score": c.verification_score,
                "score": self.score}


def combined_score(c: AnswerCandidate, use_content: bool = True, use_verification: bool = True) -> float:
    score = max(c.boundary_score, SCORE_FLOOR)
    if use_content:
        score *= max(c.content_score, SCORE_FLOOR)
    if use_verification:
        score *= max(c.verification_score, SCORE_FLOOR)
    return score


def select_answer(candidates: list[AnswerCandidate], use_content: bool = True,
                  use_verification: bool = True) -> tuple[int, float]:
    """Index and score of the candidate with the largest score product; ties keep the first."""
    if not candidates:
        raise NoAnswerError("no answer candidates")
    scores = [combined_score(c, use_content, use_verification) for c in candidates]
    best = int(np.argmax(scores))
    return best, scores[best]


def predict_batch(model: MRCModel, batch: Batch) -> list[Prediction]:
    cfg = model.cfg
    heads = model.active_heads(training=False)
    out = model.forward(batch, heads)
    preds = []
    for b, ex in enumerate(batch.examples):
        table = batch.offsets[b]
        start, end = out.boundary.global_probs(b, table)
        cands = extract_candidates(start, end, table, cfg.max_span_len, ex.passages)
        for c in cands:
            if out.content is not None:
                c.content_score = content_score((c.start, c.end), out.content.data[b, c.passage])
            if out.verification is not None:
                c.verification_score = float(out.verification.probs.data[b, c.passage])
        best, score = select_answer(cands, cfg.use_content_score and out.content is not None,
                                    cfg.use_verification_score and out.verification is not None)
        preds.append(Prediction(ex.id, cands[best], cands, score))
    return preds


def predict(model: MRCModel, example: Example) -> Prediction:
    return predict_batch(model, model.batch([example]))[0]


def predict_all(model: MRCModel, examples: list[Example], batch_size: int | None = None) -> list[Prediction]:
    bs = batch_size or model.cfg.batch_size
    preds = []
    for i in range(0, len(examples), bs):
        preds.extend(predict_batch(model, model.batch(examples[i:i + bs])))
    return preds
