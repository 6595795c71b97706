"""Word+character embeddings, BiLSTM encoders and question-passage matching."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import PAD, UNK, Vocabulary
from .ndcore import (BiLSTMParams, ContractError, ParamStore, Tensor, bilstm, concat, index,
                     masked_max, masked_softmax, swapaxes, tsum)


@dataclass
class EncoderParams:
    word: Tensor
    char: Tensor
    unk: Tensor | None  # trainable UNK row when the word table is frozen
    question: BiLSTMParams
    passage: BiLSTMParams
    fusion: BiLSTMParams

    @property
    def embed_dim(self) -> int:
        return self.word.shape[1] + self.char.shape[1]

    @classmethod
    def create(cls, store: ParamStore, n_words: int, n_chars: int, word_dim: int, char_dim: int,
               hidden: int, pretrained: np.ndarray | None = None) -> "EncoderParams":
        rng = store.rng
        if pretrained is not None:
            if pretrained.shape != (n_words, word_dim):
                raise ContractError(f"pretrained table {pretrained.shape} != {(n_words, word_dim)}")
            table = pretrained.copy()
            table[PAD] = 0.0
            table[UNK] = 0.0
            word = store.add("embed.word", table, trainable=False)
            unk = store.add("embed.unk", rng.normal(size=word_dim))
        else:
            table = rng.normal(size=(n_words, word_dim))
            table[PAD] = 0.0
            word = store.add("embed.word", table)
            unk = None
        chars = rng.normal(size=(n_chars, char_dim))
        chars[PAD] = 0.0
        char = store.add("embed.char", chars)
        d = word_dim + char_dim
        return cls(word, char, unk,
                   BiLSTMParams.create(store, "encode.question", d, hidden),
                   BiLSTMParams.create(store, "encode.passage", d, hidden),
                   BiLSTMParams.create(store, "match.fusion", 8 * hidden, hidden))


def load_pretrained(path: str | Path, vocab: Vocabulary, dim: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Read ``token f1 ... fdim`` lines into a table aligned with ``vocab``.

    Vocabulary tokens missing from the file fall back to UNK at lookup time,
    so their rows stay random but are never used.
    """
    table = rng.normal(scale=0.1, size=(vocab.n_tokens, dim))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                raise ContractError(f"{path}:{lineno}: expected token and {dim} floats")
            tok = parts[0]
            if tok in vocab.stoi:
                table[vocab.stoi[tok]] = np.array(parts[1:], dtype=np.float64)
    return table


def restrict_vocab_to_pretrained(vocab: Vocabulary, path: str | Path) -> Vocabulary:
    """Keep only tokens with a pretrained vector; others map to UNK."""
    with open(path, encoding="utf-8") as fh:
        known = {line.split(" ", 1)[0] for line in fh}
    return Vocabulary([t for t in vocab.itos[2:] if t in known], vocab.itoc[2:])


def embed(params: EncoderParams, ids: np.ndarray, char_ids: np.ndarray) -> Tensor:
    """Row per token: ``[word vector; sum of character vectors]``."""
    ids = np.asarray(ids)
    words = index(params.word, ids)
    if params.unk is not None:
        is_unk = (ids == UNK).astype(np.float64)[..., None]
        words = words + is_unk * params.unk
    chars = tsum(index(params.char, np.asarray(char_ids)), axis=-2)
    return concat([words, chars], axis=-1)


def encode(params: EncoderParams, q_emb: Tensor, q_mask: np.ndarray, p_emb: Tensor,
           p_mask: np.ndarray, present: np.ndarray | None = None) -> tuple[Tensor, Tensor, Tensor]:
    """Contextual encodings: ``(u_question, question_final_state, u_passages)``.

    ``p_emb`` is [P, Tp, D] with one row per passage; passages never see
    each other here.  Rows outside ``present`` are batch padding.
    """
    nonempty = np.asarray(p_mask, dtype=bool).any(axis=-1)
    required = np.ones_like(nonempty) if present is None else np.asarray(present, dtype=bool)
    if (required & ~nonempty).any():
        raise ContractError("empty passage")
    uq, q_final = bilstm(q_emb, params.question, q_mask, return_final=True)
    up = bilstm(p_emb, params.passage, p_mask)
    return uq, q_final, up


@dataclass
class MatchedPassage:
    v: Tensor               # [P, Tp, 2H]
    mask: np.ndarray        # [P, Tp]
    similarity: Tensor      # [P, Tq, Tp]
    c2q: Tensor             # [P, Tq, Tp]; column k is the attention over question words
    q2c: Tensor             # [P, Tp]


def attention_flow(uq: Tensor, q_mask: np.ndarray, up: Tensor, p_mask: np.ndarray):
    """Dot-product similarity plus both attention directions.

    ``uq`` is [P, Tq, 2H] (question rows already aligned with passages).
    Returns the merged [P, Tp, 8H] input of the fusion layer and the
    intermediate attentions.
    """
    q_mask = np.asarray(q_mask, dtype=bool)
    p_mask = np.asarray(p_mask, dtype=bool)
    if not q_mask.any(axis=-1).all():
        raise ContractError("question is fully masked")
    sim = uq @ swapaxes(up, -1, -2)                            # [P, Tq, Tp]
    c2q = masked_softmax(sim, q_mask[:, :, None], axis=1)
    attended_q = swapaxes(c2q, -1, -2) @ uq                    # [P, Tp, 2H]
    # padded (absent) passages get a dummy row so the softmax stays defined
    live = p_mask | ~p_mask.any(axis=-1, keepdims=True)
    q2c = masked_softmax(masked_max(sim, q_mask[:, :, None], axis=1), live, axis=-1)
    summary = q2c.reshape(q2c.shape[0], 1, q2c.shape[1]) @ up  # [P, 1, 2H]
    merged = concat([up, attended_q, up * attended_q, up * summary], axis=-1)
    return merged, sim, c2q, q2c


def match(params: EncoderParams, uq: Tensor, q_mask: np.ndarray, up: Tensor,
          p_mask: np.ndarray) -> MatchedPassage:
    """Question-aware passage vectors from attention flow and the fusion BiLSTM.

    Accepts one passage ([Tq, 2H] / [Tp, 2H]) or aligned stacks.
    """
    single = up.ndim == 2
    if single:
        uq = uq.reshape(1, *uq.shape)
        up = up.reshape(1, *up.shape)
        q_mask = np.asarray(q_mask)[None]
        p_mask = np.asarray(p_mask)[None]
    merged, sim, c2q, q2c = attention_flow(uq, q_mask, up, p_mask)
    v = bilstm(merged, params.fusion, p_mask)
    return MatchedPassage(v, np.asarray(p_mask, dtype=bool), sim, c2q, q2c)
