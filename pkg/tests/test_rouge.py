"""Tests for ROUGE scoring."""

from __future__ import annotations

import itertools
from collections import Counter

import numpy as np
import pytest

from nsesum.core.rouge import corpus_rouge, lcs_length, rouge_l, rouge_n, score, score_all

SYMBOLS = ("a", "b", "c")


def _all_sequences(
    max_len: int, symbols: tuple[str, ...] = SYMBOLS
) -> list[tuple[str, ...]]:
    return [s for n in range(max_len + 1) for s in itertools.product(symbols, repeat=n)]


def _is_subsequence(sub: tuple[str, ...], seq: tuple[str, ...]) -> bool:
    it = iter(seq)
    return all(tok in it for tok in sub)


def _brute_lcs(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    best = 0
    for mask in range(1 << len(a)):
        sub = tuple(tok for i, tok in enumerate(a) if mask >> i & 1)
        if len(sub) > best and _is_subsequence(sub, b):
            best = len(sub)
    return best


def _brute_overlap(a: tuple[str, ...], b: tuple[str, ...], n: int) -> int:
    grams_a = Counter(a[i:i + n] for i in range(len(a) - n + 1))
    grams_b = Counter(b[i:i + n] for i in range(len(b) - n + 1))
    return sum(min(count, grams_b[g]) for g, count in grams_a.items())


class TestLcs:
    def test_matches_brute_force_on_all_short_pairs(self) -> None:
        sequences = _all_sequences(4)
        for a in sequences:
            for b in sequences:
                assert lcs_length(a, b) == _brute_lcs(a, b), (a, b)

    def test_random_longer_pairs(self, rng: np.random.Generator) -> None:
        for _ in range(30):
            a = tuple(rng.choice(SYMBOLS, size=rng.integers(0, 11)))
            b = tuple(rng.choice(SYMBOLS, size=rng.integers(0, 41)))
            assert lcs_length(a, b) == _brute_lcs(a, b)


class TestRougeN:
    @pytest.mark.parametrize("n", [1, 2])
    def test_matches_clipped_overlap(self, rng: np.random.Generator, n: int) -> None:
        for _ in range(200):
            ref = tuple(rng.choice(SYMBOLS, size=rng.integers(0, 40)))
            cand = tuple(rng.choice(SYMBOLS, size=rng.integers(0, 40)))
            s = rouge_n(ref, cand, n)
            ref_grams, cand_grams = max(len(ref) - n + 1, 0), max(len(cand) - n + 1, 0)
            if not ref_grams or not cand_grams:
                assert s.f1 == 0.0
                continue
            overlap = _brute_overlap(ref, cand, n)
            assert s.precision == pytest.approx(overlap / cand_grams)
            assert s.recall == pytest.approx(overlap / ref_grams)

    def test_clipping(self) -> None:
        s = rouge_n(["the", "cat"], ["the", "the", "the"], 1)
        assert s.precision == pytest.approx(1 / 3)
        assert s.recall == pytest.approx(1 / 2)
        assert s.f1 == pytest.approx(0.4)

    def test_unsupported_order(self) -> None:
        with pytest.raises(ValueError):
            rouge_n(["a"], ["a"], 3)


def _random_pair(rng: np.random.Generator) -> tuple[tuple[str, ...], tuple[str, ...]]:
    ref = tuple(rng.choice(SYMBOLS, size=rng.integers(0, 15)))
    cand = tuple(rng.choice(SYMBOLS, size=rng.integers(0, 15)))
    return ref, cand


@pytest.mark.parametrize("variant", ["rouge-1", "rouge-2", "rouge-l"])
class TestInvariants:
    def test_swap_exchanges_precision_and_recall(
        self, rng: np.random.Generator, variant: str
    ) -> None:
        for _ in range(200):
            ref, cand = _random_pair(rng)
            forward, backward = score(ref, cand, variant), score(cand, ref, variant)
            assert backward.precision == forward.recall
            assert backward.recall == forward.precision
            assert backward.f1 == pytest.approx(forward.f1)

    def test_relabeling_leaves_scores_unchanged(
        self, rng: np.random.Generator, variant: str
    ) -> None:
        for _ in range(200):
            ref, cand = _random_pair(rng)
            relabel = dict(zip(SYMBOLS, rng.permutation(["x", "y", "z"]), strict=True))
            renamed = score([relabel[t] for t in ref], [relabel[t] for t in cand], variant)
            assert renamed == score(ref, cand, variant)

    def test_appending_reference_token_never_lowers_recall(
        self, rng: np.random.Generator, variant: str
    ) -> None:
        for _ in range(200):
            ref, cand = _random_pair(rng)
            if not ref:
                continue
            extended = (*cand, ref[rng.integers(len(ref))])
            assert score(ref, extended, variant).recall >= score(ref, cand, variant).recall


class TestScore:
    def test_identical_scores_one(self) -> None:
        tokens = "police killed the gunman".split()
        for s in score_all(tokens, tokens).values():
            assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_disjoint_scores_zero(self) -> None:
        for s in score_all(["a", "b"], ["c", "d"]).values():
            assert s.f1 == 0.0

    def test_empty_candidate_is_zero(self) -> None:
        assert rouge_l(["a"], []).f1 == 0.0

    def test_rouge_l_example(self) -> None:
        s = score("a b c d e".split(), "a b x".split(), "rouge-l")
        assert s.precision == pytest.approx(2 / 3)
        assert s.recall == pytest.approx(2 / 5)
        assert s.f1 == pytest.approx(0.5)

    def test_unknown_variant(self) -> None:
        with pytest.raises(ValueError):
            score(["a"], ["a"], "rouge-su4")


class TestCorpusRouge:
    def test_mean_of_per_pair_scores(self) -> None:
        result = corpus_rouge([(["a", "b"], ["a", "b"]), (["a", "b"], ["c"])])
        assert result["rouge-1"].f1 == pytest.approx(0.5)
        assert result["rouge-l"].recall == pytest.approx(0.5)

    def test_needs_pairs(self) -> None:
        with pytest.raises(ValueError):
            corpus_rouge([])
