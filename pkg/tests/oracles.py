"""Exhaustive reference implementations used as test oracles."""

import itertools

from mpverify.metrics import rouge_l


def brute_lcs(a, b):
    """Longest subsequence of ``a`` (by exhaustive subset enumeration) that is a subsequence of ``b``."""

    def is_subseq(sub, seq):
        it = iter(seq)
        return all(tok in it for tok in sub)

    for k in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            if is_subseq([a[i] for i in idx], b):
                return k
    return 0


def rouge_by_formula(lcs, c, r, beta=1.2):
    if lcs == 0:
        return 0.0
    p, rec = lcs / c, lcs / r
    return (1 + beta ** 2) * p * rec / (rec + beta ** 2 * p)


def brute_gold_span(passage, reference):
    """Enumerate every span and rank by (-ROUGE-L, length, start)."""
    best = None
    for s in range(len(passage)):
        for e in range(s, len(passage)):
            key = (-rouge_l(passage[s:e + 1], reference), e - s + 1, s)
            if best is None or key < best[0]:
                best = (key, (s, e, -key[0]))
    return best[1]


def brute_candidates(start, end, lengths, max_len):
    """Per passage, the (s, e) maximising start[s] * end[e] found by double loop."""
    out, g0 = [], 0
    for p, n in enumerate(lengths):
        best = None
        for s in range(n):
            for e in range(s, min(n, s + max_len)):
                score = start[g0 + s] * end[g0 + e]
                if best is None or score > best[2]:
                    best = (s, e, score)
        if n:
            out.append((p,) + best)
        g0 += n
    return out
