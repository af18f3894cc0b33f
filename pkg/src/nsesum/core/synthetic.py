"""Synthetic toy corpora for sanity-checking training at desk scale.

- copy task: the summary repeats the article; some tokens can be replaced by
  one-off words that fall outside any vocabulary built from the corpus.
- first-word task: the summary is the first word of every article sentence,
  which forces the decoder to reach across sentence boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vocab import RESERVED


@dataclass(frozen=True)
class SyntheticPair:
    article: str
    summary: str


def word_pool(vocab_size: int) -> list[str]:
    """``vocab_size - 4`` plain words, so a built vocabulary has exactly ``vocab_size`` ids."""
    n = vocab_size - len(RESERVED)
    if n <= 0:
        raise ValueError(f"vocabulary size must exceed {len(RESERVED)}, got {vocab_size}")
    return [f"w{i:02d}" for i in range(n)]


def copy_task(
    rng: np.random.Generator,
    n_pairs: int = 50,
    vocab_size: int = 30,
    length: int = 8,
    oov_rate: float = 0.0,
) -> list[SyntheticPair]:
    """Article equals summary; ``oov_rate`` of positions get unique ``oovN`` words."""
    if not 0.0 <= oov_rate < 1.0:
        raise ValueError(f"oov_rate must be in [0, 1), got {oov_rate}")
    words = word_pool(vocab_size)
    pairs = []
    fresh = 0
    for _ in range(n_pairs):
        tokens = [words[i] for i in rng.integers(0, len(words), size=length)]
        for j in np.flatnonzero(rng.random(length) < oov_rate):
            tokens[j] = f"oov{fresh}"
            fresh += 1
        text = " ".join(tokens)
        pairs.append(SyntheticPair(text, text))
    return pairs


def first_word_task(
    rng: np.random.Generator,
    n_pairs: int = 50,
    sentences: int = 6,
    words_per_sentence: int = 6,
    vocab_size: int = 30,
) -> list[SyntheticPair]:
    """Sentences of ``words_per_sentence`` words closed by ``.``; summary = first words."""
    words = word_pool(vocab_size - 1)  # "." takes one id
    pairs = []
    for _ in range(n_pairs):
        grid = rng.integers(0, len(words), size=(sentences, words_per_sentence))
        article = " ".join(" ".join(words[i] for i in row) + " ." for row in grid)
        summary = " ".join(words[row[0]] for row in grid)
        pairs.append(SyntheticPair(article, summary))
    return pairs
