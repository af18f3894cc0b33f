"""Tokenization, truncation and batching of corpus examples.

Shaping modes:

- ``flat``: lowercased whitespace tokens, capped per role.
- ``hier``: sentence-split, then a fixed ``S × T`` token grid with PAD fill.
- ``factored``: every factored word becomes three stream tokens (surface, lemma,
  pos). The cap applies to the stream in multiples of 3 so no triple is split.
- ``hier-factored``: as ``hier`` over factored words; a sentence row holds
  ``3 × T`` stream tokens.

Summaries are always shaped as one stream, never as a grid.
"""

from __future__ import annotations

import logging
import queue
import threading
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from typing import Literal, TypeVar

import numpy as np

from .parser import TERMINAL_PUNCT, FactoredToken, parse_factored_stream
from .vocab import (
    PAD,
    RESERVED,
    START,
    STOP,
    ExtendedVocabMap,
    Vocabulary,
    input_ids,
    map_extended,
    map_targets,
)

log = logging.getLogger(__name__)

ShapeMode = Literal["flat", "hier", "factored", "hier-factored"]
SHAPE_MODES: tuple[ShapeMode, ...] = ("flat", "hier", "factored", "hier-factored")
Role = Literal["article", "summary"]

PAD_TOKEN = RESERVED[PAD]
FACTORS = 3

_T = TypeVar("_T")


@dataclass(frozen=True)
class ShapeLimits:
    max_article_tokens: int = 400
    max_summary_tokens: int = 100
    factored_article_tokens: int = 800
    factored_summary_tokens: int = 300
    max_sentences: int = 20
    max_sentence_words: int = 20

    def cap(self, role: Role, factored: bool) -> int:
        if factored:
            cap = (
                self.factored_article_tokens if role == "article" else self.factored_summary_tokens
            )
            return cap - cap % FACTORS
        return self.max_article_tokens if role == "article" else self.max_summary_tokens


DEFAULT_LIMITS = ShapeLimits()


@dataclass(frozen=True)
class ShapedText:
    """Tokens ready for id mapping.

    ``tokens`` is the flat stream. In grid modes ``grid`` holds the PAD-filled
    rows and ``tokens`` their live tokens in reading order.
    """

    tokens: list[str]
    grid: list[list[str]] | None
    original_length: int

    @property
    def truncated(self) -> bool:
        return len(self.tokens) < self.original_length

    @property
    def live_sentences(self) -> int:
        if self.grid is None:
            return 0
        return sum(1 for row in self.grid if row[0] != PAD_TOKEN)


def is_sentence_end(token: str) -> bool:
    return token in TERMINAL_PUNCT or token[-1] in TERMINAL_PUNCT


def split_sentences(tokens: Sequence[_T], ends: Sequence[bool]) -> list[list[_T]]:
    """Cut a token sequence after every position flagged in ``ends``."""
    sentences: list[list[_T]] = []
    current: list[_T] = []
    for tok, end in zip(tokens, ends, strict=True):
        current.append(tok)
        if end:
            sentences.append(current)
            current = []
    if current:
        sentences.append(current)
    return sentences


def _factored_stream(words: Iterable[FactoredToken]) -> list[str]:
    stream: list[str] = []
    for w in words:
        stream.extend((w.surface.lower(), w.lemma.lower(), w.pos))
    return stream


def _pad_grid(rows: list[list[str]], n_rows: int, width: int) -> list[list[str]]:
    grid = [row[:width] + [PAD_TOKEN] * (width - len(row[:width])) for row in rows[:n_rows]]
    grid.extend([PAD_TOKEN] * width for _ in range(n_rows - len(grid)))
    return grid


def tokenize_and_truncate(
    text: str,
    mode: ShapeMode,
    role: Role = "article",
    limits: ShapeLimits = DEFAULT_LIMITS,
) -> ShapedText:
    """Shape one article or summary.

    Raises:
        ValueError: If the text is empty after tokenization or the mode is unknown.
        FactoredTokenError: If a factored mode meets a malformed word.
    """
    if mode not in SHAPE_MODES:
        raise ValueError(f"unknown shaping mode {mode!r}; expected one of {SHAPE_MODES}")
    factored = mode in ("factored", "hier-factored")
    grid_mode = mode in ("hier", "hier-factored") and role == "article"

    if factored:
        words = parse_factored_stream(text)
        if not words:
            raise ValueError(f"empty {role} after tokenization")
        stream = _factored_stream(words)
    else:
        stream = text.lower().split()
        if not stream:
            raise ValueError(f"empty {role} after tokenization")

    if not grid_mode:
        cap = limits.cap(role, factored)
        return ShapedText(stream[:cap], None, len(stream))

    if factored:
        sentences = [
            _factored_stream(s)
            for s in split_sentences(words, [w.surface in TERMINAL_PUNCT for w in words])
        ]
        width = FACTORS * limits.max_sentence_words
    else:
        sentences = split_sentences(stream, [is_sentence_end(t) for t in stream])
        width = limits.max_sentence_words
    grid = _pad_grid(sentences, limits.max_sentences, width)
    kept = [tok for row in grid for tok in row if tok != PAD_TOKEN]
    return ShapedText(kept, grid, len(stream))


def shape_mode_for(mode: Literal["plain", "factored"], hier: bool) -> ShapeMode:
    """Shaping mode for a model setup (corpus mode × encoder variant)."""
    if hier:
        return "hier-factored" if mode == "factored" else "hier"
    return "factored" if mode == "factored" else "flat"


# --- id mapping ---


@dataclass(frozen=True)
class EncodedExample:
    """One article/summary pair mapped to ids.

    ``source_ids`` are extended ids aligned with the encoder memory slots (the
    flattened grid in hierarchical mode); ``article_ids`` are the embedding ids
    (OOV read as UNK) in the encoder's shape. ``target_ids`` end with STOP and
    ``decoder_inputs`` are START followed by the gold prefix with OOV as UNK.
    """

    source_ids: np.ndarray
    article_ids: np.ndarray
    target_ids: np.ndarray
    decoder_inputs: np.ndarray
    oov: ExtendedVocabMap
    reference: list[str]

    @property
    def hier(self) -> bool:
        return self.article_ids.ndim == 2

    @property
    def source_mask(self) -> np.ndarray:
        return self.source_ids != PAD


def encode_example(
    article: ShapedText, summary: ShapedText | None, vocab: Vocabulary
) -> EncodedExample:
    source_tokens = (
        [tok for row in article.grid for tok in row] if article.grid is not None else article.tokens
    )
    source_ids, oov = map_extended(source_tokens, vocab)
    article_ids = input_ids(source_ids, vocab.size)
    if article.grid is not None:
        article_ids = article_ids.reshape(len(article.grid), -1)

    reference = summary.tokens if summary is not None else []
    targets = np.append(map_targets(reference, vocab, oov), STOP).astype(np.int64)
    decoder_inputs = np.concatenate([[START], input_ids(targets[:-1], vocab.size)]).astype(np.int64)
    return EncodedExample(source_ids, article_ids, targets, decoder_inputs, oov, list(reference))


def surface_projection(stream: Sequence[str]) -> list[str]:
    """Every first token of each factored triple."""
    return list(stream[::FACTORS])


# --- batching ---


def make_batches(
    examples: Sequence[_T], batch_size: int, rng: np.random.Generator | None = None
) -> list[list[_T]]:
    """Split into batches of ``batch_size``; shuffled when ``rng`` is given."""
    if batch_size <= 0:
        raise ValueError(f"batch size must be positive, got {batch_size}")
    order = np.arange(len(examples))
    if rng is not None:
        order = rng.permutation(len(examples))
    return [
        [examples[i] for i in order[start:start + batch_size]]
        for start in range(0, len(examples), batch_size)
    ]


_DONE = object()


def prefetch(items: Iterable[_T], maxsize: int = 2) -> Iterator[_T]:
    """Produce ``items`` on a daemon thread through a bounded queue.

    Order is preserved; a producer exception is re-raised in the consumer.
    """
    buffer: queue.Queue = queue.Queue(maxsize=maxsize)
    stop = threading.Event()

    def produce() -> None:
        try:
            for item in items:
                if stop.is_set():
                    return
                buffer.put(item)
        except BaseException as exc:  # noqa: BLE001
            buffer.put(exc)
            return
        buffer.put(_DONE)

    worker = threading.Thread(target=produce, name="nsesum-prefetch", daemon=True)
    worker.start()
    try:
        while True:
            item = buffer.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        # Unblock a producer waiting on a full queue.
        while not buffer.empty():
            buffer.get_nowait()


@dataclass
class EncodeStats:
    examples: int = 0
    skipped: int = 0
    truncated_articles: int = 0
    truncated_summaries: int = 0
    article_tokens: int = 0
    sentences: int = 0


def shape_record(
    article: str, summary: str | None, mode: ShapeMode, limits: ShapeLimits = DEFAULT_LIMITS
) -> tuple[ShapedText, ShapedText | None]:
    shaped_summary = None
    if summary is not None:
        shaped_summary = tokenize_and_truncate(summary, mode, "summary", limits)
    return tokenize_and_truncate(article, mode, "article", limits), shaped_summary


def encode_records(
    records: Iterable[tuple[str, str | None]],
    vocab: Vocabulary,
    mode: ShapeMode,
    limits: ShapeLimits = DEFAULT_LIMITS,
    require_summary: bool = True,
) -> tuple[list[EncodedExample], EncodeStats]:
    """Shape and encode ``(article, summary)`` pairs; unreadable records are skipped."""
    stats = EncodeStats()
    examples = []
    for n, (article, summary) in enumerate(records, 1):
        if require_summary and summary is None:
            log.warning("record %d has no summary; skipped", n)
            stats.skipped += 1
            continue
        try:
            shaped_article, shaped_summary = shape_record(article, summary, mode, limits)
        except ValueError as e:
            log.warning("record %d skipped: %s", n, e)
            stats.skipped += 1
            continue
        stats.examples += 1
        stats.article_tokens += len(shaped_article.tokens)
        stats.sentences += shaped_article.live_sentences
        stats.truncated_articles += shaped_article.truncated
        stats.truncated_summaries += shaped_summary is not None and shaped_summary.truncated
        examples.append(encode_example(shaped_article, shaped_summary, vocab))
    return examples, stats
