"""Vocabulary and per-document extended (OOV) vocabulary maps."""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK, START, STOP = 0, 1, 2, 3
RESERVED = ("[PAD]", "[UNK]", "[START]", "[STOP]")
DEFAULT_VOCAB_SIZE = 50000


class VocabError(ValueError):
    """Inconsistent vocabulary or OOV map."""


@dataclass
class Vocabulary:
    """Fixed bijection between ids ``0..V-1`` and tokens; ids 0-3 are reserved."""

    tokens: list[str]
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[: len(RESERVED)]) != RESERVED:
            raise VocabError(f"vocabulary must start with {RESERVED}")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise VocabError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def save(self, path: str | Path) -> Path:
        """One token per line; the line number is the id."""
        path = Path(path)
        path.write_text("".join(f"{tok}\n" for tok in self.tokens), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocab(tokens: Iterable[str], size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    """Top ``size - 4`` tokens by frequency, ties broken lexicographically."""
    if size <= len(RESERVED):
        raise VocabError(f"vocabulary size must exceed {len(RESERVED)}, got {size}")
    counts = Counter(tok for tok in tokens if tok not in RESERVED)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    words = [tok for tok, _ in ranked[: size - len(RESERVED)]]
    if len(words) < size - len(RESERVED):
        log.warning(
            "corpus has only %d distinct tokens; vocabulary size %d instead of %d",
            len(words), len(words) + len(RESERVED), size,
        )
    return Vocabulary([*RESERVED, *words])


@dataclass
class ExtendedVocabMap:
    """Per-document OOV surfaces mapped to ids ``V..V+n-1`` in first-occurrence order."""

    base_size: int
    oov: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.oov)

    @property
    def extended_size(self) -> int:
        return self.base_size + len(self.oov)

    def add(self, token: str) -> int:
        if token not in self.oov:
            self.oov[token] = self.base_size + len(self.oov)
        return self.oov[token]

    def token_of(self, token_id: int, vocab: Vocabulary) -> str:
        if token_id < self.base_size:
            return vocab.token_of(token_id)
        for tok, i in self.oov.items():
            if i == token_id:
                return tok
        raise VocabError(f"id {token_id} is outside the extended vocabulary")

    def validate(self) -> None:
        ids = sorted(self.oov.values())
        if ids != list(range(self.base_size, self.base_size + len(ids))):
            raise VocabError(
                f"OOV ids {ids} collide or leave gaps above base size {self.base_size}"
            )


def map_extended(tokens: Sequence[str], vocab: Vocabulary) -> tuple[np.ndarray, ExtendedVocabMap]:
    """Extended ids for article tokens; OOV tokens get per-document ids."""
    oov = ExtendedVocabMap(vocab.size)
    ids = [vocab.id_of(tok) if tok in vocab else oov.add(tok) for tok in tokens]
    return np.array(ids, dtype=np.int64), oov


def map_targets(tokens: Sequence[str], vocab: Vocabulary, oov: ExtendedVocabMap) -> np.ndarray:
    """Summary ids: base id, copied OOV id, or UNK when the word cannot be produced."""
    ids = []
    for tok in tokens:
        if tok in vocab:
            ids.append(vocab.id_of(tok))
        else:
            ids.append(oov.oov.get(tok, UNK))
    return np.array(ids, dtype=np.int64)


def input_ids(ids: np.ndarray, vocab_size: int) -> np.ndarray:
    """Embedding ids: extended OOV ids read the UNK row."""
    return np.where(ids >= vocab_size, UNK, ids)
