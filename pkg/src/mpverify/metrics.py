"""Answer-quality metrics: ROUGE-L, BLEU-1, token F1 and dataset statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .ndcore import ContractError

ROUGE_BETA = 1.2
VALID_SPAN_F1 = 0.7


def lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_from_lcs(lcs: int, cand_len: int, ref_len: int, beta: float = ROUGE_BETA) -> float:
    if lcs == 0 or cand_len == 0 or ref_len == 0:
        return 0.0
    p = lcs / cand_len
    r = lcs / ref_len
    return (1.0 + beta * beta) * p * r / (r + beta * beta * p)


def rouge_l(candidate: Sequence, reference: Sequence, beta: float = ROUGE_BETA) -> float:
    """LCS F-measure weighted towards recall by ``beta``."""
    if not reference:
        raise ContractError("rouge_l needs a nonempty reference")
    return rouge_from_lcs(lcs_length(candidate, reference), len(candidate), len(reference), beta)


def best_rouge_l(candidate: Sequence, references: Sequence[Sequence], beta: float = ROUGE_BETA) -> float:
    return max((rouge_l(candidate, r, beta) for r in references if r), default=0.0)


def token_f1(candidate: Sequence, reference: Sequence) -> float:
    common = Counter(candidate) & Counter(reference)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    p = overlap / len(candidate)
    r = overlap / len(reference)
    return 2 * p * r / (p + r)


def bleu_1(candidates: Sequence[Sequence], references: Sequence[Sequence[Sequence]]) -> float:
    """Corpus BLEU-1: clipped unigram precision times a brevity penalty.

    ``references[i]`` is the list of reference token lists for candidate i.
    """
    if not candidates:
        raise ContractError("bleu_1 over an empty corpus")
    if len(candidates) != len(references):
        raise ContractError("candidates and references are not aligned")
    clipped = 0
    c_len = 0
    r_len = 0
    for cand, refs in zip(candidates, references):
        refs = [r for r in refs if r] or [[]]
        counts = Counter(cand)
        max_ref: Counter = Counter()
        for r in refs:
            for tok, n in Counter(r).items():
                max_ref[tok] = max(max_ref[tok], n)
        clipped += sum(min(n, max_ref[tok]) for tok, n in counts.items())
        c_len += len(cand)
        # closest reference length, shorter wins ties
        r_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
    if c_len == 0 or clipped == 0:
        return 0.0
    precision = clipped / c_len
    bp = 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)
    return bp * precision


def normalize_answer(text: str, lowercase: bool = True) -> str:
    text = " ".join(text.split())
    return text.lower() if lowercase else text


def tokens_of(text: str, lowercase: bool = True) -> list[str]:
    return normalize_answer(text, lowercase).split()


def span_validity_stats(dataset, threshold: float = VALID_SPAN_F1, lowercase: bool = True) -> dict:
    """Fraction of questions with several distinct answers / several valid passages.

    A passage counts if some span in it reaches token F1 above ``threshold``
    against any reference.  Duplicate references (after whitespace and case
    normalization) count once.
    """
    n = 0
    multi_answers = 0
    multi_spans = 0
    for ex in dataset:
        n += 1
        refs = {normalize_answer(r, lowercase) for r in ex.references if r.strip()}
        if len(refs) >= 2:
            multi_answers += 1
        ref_toks = [r.split() for r in refs]
        valid = 0
        for passage in ex.passages:
            toks = [t.lower() for t in passage] if lowercase else list(passage)
            if _has_valid_span(toks, ref_toks, threshold):
                valid += 1
        if valid >= 2:
            multi_spans += 1
    if n == 0:
        return {"questions": 0, "multiple_answers": 0.0, "multiple_spans": 0.0}
    return {"questions": n, "multiple_answers": multi_answers / n, "multiple_spans": multi_spans / n}


def _has_valid_span(passage: list[str], refs: list[list[str]], threshold: float) -> bool:
    for ref in refs:
        if not set(ref) & set(passage):
            continue
        # F1 > 0.7 forces span length within a factor of ~2 of the reference
        max_len = 2 * len(ref) + 1
        for s in range(len(passage)):
            for e in range(s, min(len(passage), s + max_len)):
                if token_f1(passage[s:e + 1], ref) > threshold:
                    return True
    return False


@dataclass
class EvalReport:
    rouge_l: float
    bleu_1: float
    exact_span: float | None
    count: int
    rows: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rouge_l": self.rouge_l, "bleu_1": self.bleu_1, "exact_span": self.exact_span,
                "count": self.count, "rows": self.rows}


def evaluate(predictions: dict[str, list[str]], gold: dict[str, dict], lowercase: bool = True,
             beta: float = ROUGE_BETA) -> EvalReport:
    """Score predicted answer tokens against references, case by case.

    ``gold[id]`` holds ``references`` (strings) and optionally ``answer``
    (gold span tokens) for exact-span accuracy.
    """
    rows = []
    cands, refs_all = [], []
    exact_hits, exact_n = 0, 0
    for qid in sorted(gold):
        g = gold[qid]
        pred = predictions.get(qid, [])
        cand = [t.lower() for t in pred] if lowercase else list(pred)
        refs = [tokens_of(r, lowercase) for r in g.get("references", [])]
        refs = [r for r in refs if r]
        score = best_rouge_l(cand, refs, beta) if refs else 0.0
        row = {"id": qid, "rouge_l": score}
        if g.get("answer") is not None:
            hit = list(pred) == list(g["answer"])
            exact_hits += hit
            exact_n += 1
            row["exact"] = hit
        rows.append(row)
        if refs:
            cands.append(cand)
            refs_all.append(refs)
    count = len(rows)
    rl = sum(r["rouge_l"] for r in rows) / count if count else 0.0
    bl = bleu_1(cands, refs_all) if cands else 0.0
    return EvalReport(rl, bl, exact_hits / exact_n if exact_n else None, count, rows)
