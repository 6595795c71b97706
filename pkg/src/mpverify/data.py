"""Dataset ingestion, gold-label derivation, batching and the synthetic task."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import rouge_from_lcs, tokens_of
from .ndcore import ContractError

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"


class IngestionError(ValueError):
    """Raised when a dataset file has malformed or inconsistent records."""


@dataclass
class Example:
    id: str
    question: list[str]
    passages: list[list[str]]
    gold_span: tuple[int, int, int] | None = None  # (passage, start, end), inclusive
    gold_passage: int | None = None
    references: list[str] = field(default_factory=list)

    def answer_tokens(self) -> list[str] | None:
        if self.gold_span is None:
            return None
        p, s, e = self.gold_span
        return self.passages[p][s:e + 1]

    def to_json(self) -> dict:
        out = {"id": self.id, "question": self.question, "passages": self.passages,
               "references": self.references}
        if self.gold_span is not None:
            out["answer_spans"] = list(self.gold_span)
        if self.gold_passage is not None:
            out["gold_passage"] = self.gold_passage
        return out


# ---------------------------------------------------------------------------
# gold labels
# ---------------------------------------------------------------------------

def derive_gold_span(passage: Sequence[str], references: Sequence[str],
                     lowercase: bool = True) -> tuple[int, int, float]:
    """Span of ``passage`` with the highest ROUGE-L against any reference.

    Ties go to the shorter span, then the earlier start.  LCS rows are
    extended one token at a time per start, so the search is O(n^2 m).
    """
    if not passage:
        raise ContractError("derive_gold_span needs a nonempty passage")
    if not references:
        raise ContractError("derive_gold_span needs at least one reference")
    refs = [r for r in (tokens_of(x, lowercase) for x in references) if r]
    toks = [t.lower() for t in passage] if lowercase else list(passage)
    best = (0, 0, 0.0)
    best_key = (-0.0, 1, 0)
    n = len(toks)
    for s in range(n):
        rows = [[0] * (len(r) + 1) for r in refs]
        for e in range(s, n):
            tok = toks[e]
            score = 0.0
            for ri, ref in enumerate(refs):
                prev = rows[ri]
                cur = [0]
                for j, y in enumerate(ref):
                    cur.append(prev[j] + 1 if tok == y else max(prev[j + 1], cur[j]))
                rows[ri] = cur
                score = max(score, rouge_from_lcs(cur[-1], e - s + 1, len(ref)))
            key = (-score, e - s + 1, s)
            if key < best_key:
                best_key = key
                best = (s, e, score)
    return best


def derive_content_labels(span: tuple[int, int], length: int) -> np.ndarray:
    s, e = span
    if not 0 <= s <= e < length:
        raise ContractError(f"span {span} invalid for passage length {length}")
    labels = np.zeros(length, dtype=np.int64)
    labels[s:e + 1] = 1
    return labels


def derive_gold_passage(example: Example, lowercase: bool = True) -> int:
    """Explicitly marked passage, else the one whose best span scores highest."""
    if example.gold_passage is not None:
        return example.gold_passage
    if example.gold_span is not None:
        return example.gold_span[0]
    scores = [derive_gold_span(p, example.references, lowercase)[2] for p in example.passages]
    return int(np.argmax(scores))


def attach_gold(example: Example, lowercase: bool = True) -> Example:
    """Fill ``gold_span``/``gold_passage`` from references when absent.

    Leaves ``gold_span`` empty when no span overlaps any reference.
    """
    if example.gold_span is None and example.references:
        gp = derive_gold_passage(example, lowercase)
        s, e, score = derive_gold_span(example.passages[gp], example.references, lowercase)
        if score > 0.0:
            example.gold_span = (gp, s, e)
            example.gold_passage = gp
    elif example.gold_span is not None and example.gold_passage is None:
        example.gold_passage = example.gold_span[0]
    return example


# ---------------------------------------------------------------------------
# JSONL ingestion
# ---------------------------------------------------------------------------

def _parse_span(raw, gold_passage: int | None) -> tuple[int, int, int]:
    if isinstance(raw, list) and raw and isinstance(raw[0], list):
        raw = raw[0]
    if not isinstance(raw, list) or len(raw) not in (2, 3) or not all(isinstance(v, int) for v in raw):
        raise ValueError(f"answer_spans must be [start, end] or [passage, start, end], got {raw!r}")
    if len(raw) == 2:
        return (gold_passage if gold_passage is not None else 0, raw[0], raw[1])
    return tuple(raw)  # type: ignore[return-value]


def example_from_json(obj: dict, default_id: str, derive: bool = True) -> Example:
    qid = str(obj.get("id", default_id))
    for key in ("question", "passages"):
        if key not in obj:
            raise IngestionError(f"example {qid}: missing required field '{key}'")
    question = [str(t) for t in obj["question"]]
    passages = [[str(t) for t in p] for p in obj["passages"]]
    if not passages:
        raise IngestionError(f"example {qid}: no passages")
    if any(len(p) == 0 for p in passages):
        raise IngestionError(f"example {qid}: empty passage")
    gold_passage = obj.get("gold_passage")
    if gold_passage is not None and not 0 <= gold_passage < len(passages):
        raise IngestionError(f"example {qid}: gold_passage {gold_passage} out of range")
    span = None
    if obj.get("answer_spans") not in (None, []):
        try:
            span = _parse_span(obj["answer_spans"], gold_passage)
        except ValueError as err:
            raise IngestionError(f"example {qid}: {err}") from None
        p, s, e = span
        if not 0 <= p < len(passages) or not 0 <= s <= e < len(passages[p]):
            raise IngestionError(f"example {qid}: span {list(span)} out of range")
    refs = obj.get("references", [])
    if isinstance(refs, str):
        refs = [refs]
    ex = Example(qid, question, passages, span, gold_passage, [str(r) for r in refs])
    return attach_gold(ex) if derive else ex


def load_jsonl(path: str | Path, derive: bool = True) -> list[Example]:
    """Read one example per line; all problems are reported together."""
    examples, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise IngestionError(f"line {lineno}: expected a JSON object")
                examples.append(example_from_json(obj, f"line{lineno}", derive))
            except json.JSONDecodeError as err:
                errors.append(f"line {lineno}: invalid JSON ({err.msg})")
            except IngestionError as err:
                errors.append(f"line {lineno}: {err}")
    if errors:
        raise IngestionError("; ".join(errors))
    return examples


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

class Vocabulary:
    """Dense token and character ids with PAD=0 and UNK=1."""

    def __init__(self, tokens: Iterable[str] = (), chars: Iterable[str] = ()):
        self.itos = [PAD_TOKEN, UNK_TOKEN]
        self.stoi = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        self.itoc = [PAD_TOKEN, UNK_TOKEN]
        self.ctoi = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for t in tokens:
            self.add_token(t)
        for c in chars:
            self.add_char(c)

    def add_token(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    def add_char(self, ch: str) -> int:
        if ch not in self.ctoi:
            self.ctoi[ch] = len(self.itoc)
            self.itoc.append(ch)
        return self.ctoi[ch]

    @classmethod
    def build(cls, examples: Iterable[Example], min_count: int = 1) -> "Vocabulary":
        counts: Counter = Counter()
        for ex in examples:
            counts.update(ex.question)
            for p in ex.passages:
                counts.update(p)
        toks = sorted(t for t, n in counts.items() if n >= min_count)
        chars = sorted({c for t in counts for c in t})
        return cls(toks, chars)

    def token_id(self, tok: str) -> int:
        return self.stoi.get(tok, UNK)

    def char_ids(self, tok: str) -> list[int]:
        return [self.ctoi.get(c, UNK) for c in tok]

    @property
    def n_tokens(self) -> int:
        return len(self.itos)

    @property
    def n_chars(self) -> int:
        return len(self.itoc)

    def to_json(self) -> dict:
        return {"tokens": self.itos[2:], "chars": self.itoc[2:]}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(obj["tokens"], obj["chars"])


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

@dataclass
class OffsetTable:
    """Maps (passage, local position) to a position in the concatenation of passages."""

    lengths: list[int]
    padded_len: int

    def __post_init__(self):
        self.starts = np.concatenate([[0], np.cumsum(self.lengths)[:-1]]).astype(int).tolist()
        slots = [p * self.padded_len + k for p, n in enumerate(self.lengths) for k in range(n)]
        self.slots = np.array(slots, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(sum(self.lengths))

    def to_global(self, passage: int, local: int) -> int:
        if not 0 <= local < self.lengths[passage]:
            raise ContractError(f"position {local} outside passage {passage}")
        return self.starts[passage] + local

    def to_local(self, g: int) -> tuple[int, int]:
        if not 0 <= g < self.total:
            raise ContractError(f"global position {g} out of range")
        p = int(np.searchsorted(self.starts, g, side="right") - 1)
        while self.lengths[p] == 0 or g - self.starts[p] >= self.lengths[p]:
            p += 1
        return p, g - self.starts[p]

    def slot(self, g: int) -> int:
        """Index into the padded [passages * padded_len] layout."""
        return int(self.slots[g])


@dataclass
class Batch:
    ids: list[str]
    examples: list[Example]  # truncated copies
    q_ids: np.ndarray        # [B, Tq]
    q_mask: np.ndarray
    q_chars: np.ndarray      # [B, Tq, L]
    p_ids: np.ndarray        # [B, N, Tp]
    p_mask: np.ndarray
    p_chars: np.ndarray      # [B, N, Tp, L]
    passage_mask: np.ndarray  # [B, N]
    offsets: list[OffsetTable]
    gold_start: np.ndarray   # global positions, -1 if unknown
    gold_end: np.ndarray
    gold_passage: np.ndarray
    content_labels: np.ndarray  # [B, N, Tp]
    warnings: Counter = field(default_factory=Counter)

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def has_gold(self) -> bool:
        return bool((self.gold_start >= 0).all())

    def gold_slots(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.array([o.slot(g) for o, g in zip(self.offsets, self.gold_start)])
        e = np.array([o.slot(g) for o, g in zip(self.offsets, self.gold_end)])
        return s, e


def truncate_example(ex: Example, max_question_len: int, max_passage_len: int, max_passages: int,
                     warnings: Counter) -> Example | None:
    """Clip lengths; ``None`` when the gold span no longer fits."""
    q = ex.question
    if len(q) > max_question_len:
        warnings["truncated_question"] += 1
        q = q[:max_question_len]
    passages = ex.passages[:max_passages]
    if len(ex.passages) > max_passages:
        warnings["dropped_passages"] += 1
    if any(len(p) > max_passage_len for p in passages):
        warnings["truncated_passage"] += 1
    passages = [p[:max_passage_len] for p in passages]
    span = ex.gold_span
    gp = ex.gold_passage
    if span is not None:
        p, s, e = span
        if p >= len(passages) or e >= len(passages[p]):
            warnings["dropped_gold_outside_window"] += 1
            return None
    if gp is not None and gp >= len(passages):
        gp = None
    return Example(ex.id, q, passages, span, gp, list(ex.references))


def _char_matrix(tokens: Sequence[str], vocab: Vocabulary, max_word_len: int) -> list[list[int]]:
    return [vocab.char_ids(t)[:max_word_len] for t in tokens]


def make_batch(examples: Sequence[Example], vocab: Vocabulary, max_question_len: int = 32,
               max_passage_len: int = 64, max_passages: int = 10, max_word_len: int = 16,
               require_gold: bool = False) -> Batch:
    """Pad a list of examples into arrays.

    With ``require_gold`` examples lacking a gold span (or whose span is cut
    off by truncation) are dropped and counted in ``warnings``.
    """
    warnings: Counter = Counter()
    kept: list[Example] = []
    for ex in examples:
        if require_gold and ex.gold_span is None:
            warnings["dropped_no_gold"] += 1
            continue
        t = truncate_example(ex, max_question_len, max_passage_len, max_passages, warnings)
        if t is None:
            if require_gold:
                continue
            t = truncate_example(Example(ex.id, ex.question, ex.passages, None, None, ex.references),
                                 max_question_len, max_passage_len, max_passages, warnings)
        kept.append(t)
    if not kept:
        raise ContractError("no usable examples in batch")
    B = len(kept)
    Tq = max(max(len(e.question) for e in kept), 1)
    N = max(len(e.passages) for e in kept)
    Tp = max(len(p) for e in kept for p in e.passages)
    L = max([len(t[:max_word_len]) for e in kept for t in e.question] +
            [len(t[:max_word_len]) for e in kept for p in e.passages for t in p] + [1])

    q_ids = np.zeros((B, Tq), dtype=np.int64)
    q_chars = np.zeros((B, Tq, L), dtype=np.int64)
    p_ids = np.zeros((B, N, Tp), dtype=np.int64)
    p_chars = np.zeros((B, N, Tp, L), dtype=np.int64)
    labels = np.zeros((B, N, Tp), dtype=np.int64)
    passage_mask = np.zeros((B, N), dtype=bool)
    gold_start = np.full(B, -1, dtype=np.int64)
    gold_end = np.full(B, -1, dtype=np.int64)
    gold_passage = np.full(B, -1, dtype=np.int64)
    offsets = []
    for b, ex in enumerate(kept):
        q_ids[b, :len(ex.question)] = [vocab.token_id(t) for t in ex.question]
        for k, cids in enumerate(_char_matrix(ex.question, vocab, max_word_len)):
            q_chars[b, k, :len(cids)] = cids
        for i, p in enumerate(ex.passages):
            passage_mask[b, i] = True
            p_ids[b, i, :len(p)] = [vocab.token_id(t) for t in p]
            for k, cids in enumerate(_char_matrix(p, vocab, max_word_len)):
                p_chars[b, i, k, :len(cids)] = cids
        table = OffsetTable([len(p) for p in ex.passages] + [0] * (N - len(ex.passages)), Tp)
        offsets.append(table)
        if ex.gold_span is not None:
            pi, s, e = ex.gold_span
            gold_start[b] = table.to_global(pi, s)
            gold_end[b] = table.to_global(pi, e)
            labels[b, pi, :len(ex.passages[pi])] = derive_content_labels((s, e), len(ex.passages[pi]))
        if ex.gold_passage is not None:
            gold_passage[b] = ex.gold_passage
    q_mask = np.zeros((B, Tq), dtype=bool)
    p_mask = np.zeros((B, N, Tp), dtype=bool)
    for b, ex in enumerate(kept):
        q_mask[b, :len(ex.question)] = True
        for i, p in enumerate(ex.passages):
            p_mask[b, i, :len(p)] = True
    if warnings:
        log.debug("batch warnings: %s", dict(warnings))
    return Batch([e.id for e in kept], kept, q_ids, q_mask, q_chars, p_ids, p_mask, p_chars,
                 passage_mask, offsets, gold_start, gold_end, gold_passage, labels, warnings)


def iterate_batches(examples: Sequence[Example], batch_size: int, rng: np.random.Generator | None = None):
    order = np.arange(len(examples))
    if rng is not None:
        rng.shuffle(order)
    for i in range(0, len(order), batch_size):
        yield [examples[j] for j in order[i:i + batch_size]]


# ---------------------------------------------------------------------------
# synthetic multi-passage task
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    """Knobs for the generated key/value lookup task."""

    n_train: int = 50
    n_dev: int = 200
    n_passages: int = 5
    passage_len: int = 12
    answer_len: int = 2
    n_fillers: int = 40
    n_keys: int = 12
    n_values: int = 16
    distractor_rate: float = 0.4
    noise_facts: int = 1


def _synth_example(rng: np.random.Generator, cfg: SynthConfig, qid: str) -> Example:
    key = int(rng.integers(cfg.n_keys))
    value = [f"v{int(v)}" for v in rng.integers(cfg.n_values, size=cfg.answer_len)]
    n = cfg.n_passages
    n_distract = min(int(round(cfg.distractor_rate * n)), (n - 1) // 2)
    roles = np.array([True] * (n - n_distract) + [False] * n_distract)
    rng.shuffle(roles)
    used = {tuple(value)}
    passages, spans = [], []
    for majority in roles:
        if majority:
            val = value
        else:
            while True:
                val = [f"v{int(v)}" for v in rng.integers(cfg.n_values, size=cfg.answer_len)]
                if tuple(val) not in used:
                    used.add(tuple(val))
                    break
        fact = [f"k{key}"] + val
        facts = [fact]
        for _ in range(cfg.noise_facts):
            other = int(rng.integers(cfg.n_keys - 1))
            other += other >= key
            facts.append([f"k{other}"] + [f"v{int(v)}" for v in rng.integers(cfg.n_values, size=cfg.answer_len)])
        order = rng.permutation(len(facts))
        n_fill = max(cfg.passage_len - sum(len(f) for f in facts), len(facts) + 1)
        fill = [f"w{int(w)}" for w in rng.integers(cfg.n_fillers, size=n_fill)]
        cuts = np.sort(rng.choice(np.arange(n_fill + 1), size=len(facts), replace=False))
        toks: list[str] = []
        start = -1
        prev = 0
        for cut, fi in zip(cuts, order):
            toks.extend(fill[prev:cut])
            if fi == 0:
                start = len(toks) + 1
            toks.extend(facts[fi])
            prev = cut
        toks.extend(fill[prev:])
        passages.append(toks)
        spans.append((start, start + cfg.answer_len - 1))
    majority_idx = [i for i, m in enumerate(roles) if m]
    gp = int(majority_idx[int(rng.integers(len(majority_idx)))])
    s, e = spans[gp]
    question = ["what", "is", "the", "value", "of", f"k{key}", "?"]
    return Example(qid, question, passages, (gp, s, e), gp, [" ".join(value)])


def generate_synthetic(cfg: SynthConfig, seed: int) -> tuple[list[Example], list[Example]]:
    """Deterministic (train, dev) split of the key/value task for ``seed``."""
    rng = np.random.default_rng(seed)
    train = [_synth_example(rng, cfg, f"train-{i}") for i in range(cfg.n_train)]
    dev = [_synth_example(rng, cfg, f"dev-{i}") for i in range(cfg.n_dev)]
    return train, dev
