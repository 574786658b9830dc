"""Sequence evaluation: WER with edit decomposition, corpus BLEU, ROUGE-L.

All three operate on pre-tokenized sequences (any hashable token type). WER's
traceback breaks cost ties in the fixed order substitution, deletion,
insertion, so the reported decomposition is deterministic even when several
minimal edit scripts exist.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class WerBreakdown:
    """Edit counts against a reference plus the combined error rate."""

    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        return self.errors / self.reference_length


def _tokens(seq) -> list:
    return list(seq.tokens) if hasattr(seq, "tokens") else list(seq)


def wer(hypothesis, reference) -> WerBreakdown:
    """Minimal edit distance from reference to hypothesis, decomposed.

    Rows index the reference (cost i deletions to reach an empty hypothesis),
    columns the hypothesis (cost j insertions from an empty reference).
    """
    hyp, ref = _tokens(hypothesis), _tokens(reference)
    if not ref:
        raise ValueError("WER needs a nonempty reference")
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev = dist[i], dist[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WerBreakdown(substitutions=subs, insertions=ins, deletions=dels,
                        reference_length=n)


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, max_n: int = 4) -> list:
    """Corpus-level BLEU@1..max_n: clipped precision, geometric mean, brevity.

    No smoothing: any order with zero clipped matches zeroes every BLEU@k
    that includes it. Returns [BLEU@1, ..., BLEU@max_n].
    """
    hyps = [_tokens(h) for h in hypotheses]
    refs = [_tokens(r) for r in references]
    if not hyps or len(hyps) != len(refs):
        raise ValueError("need equal, nonzero hypothesis and reference corpus sizes")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = sum(len(h) for h in hyps)
    ref_len = sum(len(r) for r in refs)
    for hyp, ref in zip(hyps, refs):
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    brevity = 1.0 if hyp_len >= ref_len else (
        math.exp(1.0 - ref_len / hyp_len) if hyp_len > 0 else 0.0)
    scores = []
    for k in range(1, max_n + 1):
        precisions = []
        for n in range(k):
            precisions.append(matches[n] / totals[n] if totals[n] else 0.0)
        if any(p == 0.0 for p in precisions):
            scores.append(0.0)
            continue
        log_mean = sum(math.log(p) for p in precisions) / k
        scores.append(brevity * math.exp(log_mean))
    return scores


def rouge_l(hypothesis, reference) -> float:
    """Longest-common-subsequence F1 with balanced precision/recall weighting."""
    hyp, ref = _tokens(hypothesis), _tokens(reference)
    if not ref:
        raise ValueError("ROUGE-L needs a nonempty reference")
    if not hyp:
        return 0.0
    n, m = len(ref), len(hyp)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if ref[i - 1] == hyp[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    lcs = table[n][m]
    if lcs == 0:
        return 0.0
    precision = lcs / m
    recall = lcs / n
    return 2.0 * precision * recall / (precision + recall)
