"""ROUGE-1, ROUGE-2 and ROUGE-L over lowercase token sequences.

No stemming and no stopword removal: tokens match exactly. Multi-sentence
summaries are scored as one flat token sequence.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

Variant = Literal["rouge-1", "rouge-2", "rouge-l"]
VARIANTS: tuple[Variant, ...] = ("rouge-1", "rouge-2", "rouge-l")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> RougeScore:
        total = precision + recall
        f1 = 2.0 * precision * recall / total if total > 0 else 0.0
        return cls(precision, recall, f1)


ZERO = RougeScore(0.0, 0.0, 0.0)


def _ngrams(tokens: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(reference: Sequence[str], candidate: Sequence[str], n: int) -> RougeScore:
    """Clipped n-gram overlap."""
    if n not in (1, 2):
        raise ValueError(f"ROUGE-N is computed for n in (1, 2), got {n}")
    ref, cand = _ngrams(reference, n), _ngrams(candidate, n)
    ref_total, cand_total = ref.total(), cand.total()
    if ref_total == 0 or cand_total == 0:
        return ZERO
    overlap = (ref & cand).total()
    return RougeScore.from_pr(overlap / cand_total, overlap / ref_total)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Two rolling rows of the standard DP table.
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(reference: Sequence[str], candidate: Sequence[str]) -> RougeScore:
    """Longest-common-subsequence precision/recall."""
    if not reference or not candidate:
        return ZERO
    lcs = lcs_length(reference, candidate)
    return RougeScore.from_pr(lcs / len(candidate), lcs / len(reference))


def score(reference: Sequence[str], candidate: Sequence[str], variant: Variant) -> RougeScore:
    if variant == "rouge-1":
        return rouge_n(reference, candidate, 1)
    if variant == "rouge-2":
        return rouge_n(reference, candidate, 2)
    if variant == "rouge-l":
        return rouge_l(reference, candidate)
    raise ValueError(f"unknown ROUGE variant {variant!r}; expected one of {VARIANTS}")


def score_all(reference: Sequence[str], candidate: Sequence[str]) -> dict[Variant, RougeScore]:
    return {v: score(reference, candidate, v) for v in VARIANTS}


def corpus_rouge(
    pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
) -> dict[Variant, RougeScore]:
    """Arithmetic mean of per-pair precision, recall and F1 for every variant."""
    if not pairs:
        raise ValueError("corpus ROUGE needs at least one (reference, candidate) pair")
    per_pair = [score_all(ref, cand) for ref, cand in pairs]
    averaged = {}
    for v in VARIANTS:
        scores = [s[v] for s in per_pair]
        averaged[v] = RougeScore(
            float(np.mean([s.precision for s in scores])),
            float(np.mean([s.recall for s in scores])),
            float(np.mean([s.f1 for s in scores])),
        )
    return averaged
