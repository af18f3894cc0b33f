"""Slot memories and their erase/write update.

A memory is a ``k × l`` slot matrix plus a validity mask. PAD slots are masked:
attention never reaches them, so the update leaves them untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import EmbeddingTable
from .tensor import ShapeError, Tensor
from .vocab import PAD

NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class Memory:
    slots: Tensor
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.slots.ndim != 2 or self.mask.shape != (self.slots.shape[0],):
            raise ShapeError(
                f"memory slots {self.slots.shape} do not match mask {self.mask.shape}"
            )

    @property
    def k(self) -> int:
        return self.slots.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.slots.shape[1]


# Document memory: one slot per sentence.
DocumentMemory = Memory


@dataclass(frozen=True)
class SentenceMemoryBank:
    """One fixed-size word memory per sentence slot of the document grid."""

    memories: tuple[Memory, ...]
    sentence_mask: np.ndarray

    def __post_init__(self) -> None:
        if len(self.memories) != self.sentence_mask.shape[0]:
            raise ShapeError(
                f"{len(self.memories)} sentence memories vs mask {self.sentence_mask.shape}"
            )
        if len({m.k for m in self.memories}) > 1:
            raise ShapeError("sentence memories must share one slot count")

    @property
    def num_sentences(self) -> int:
        return len(self.memories)

    @property
    def sentence_len(self) -> int:
        return self.memories[0].k

    def replace(self, index: int, memory: Memory) -> SentenceMemoryBank:
        memories = list(self.memories)
        memories[index] = memory
        return SentenceMemoryBank(tuple(memories), self.sentence_mask)


def memory_update(memory: Memory, z: Tensor, h: Tensor) -> Memory:
    """Erase the attended slots by ``z`` and write ``h`` into them.

    Row ``i`` becomes ``(1 - z_i) * M_i + z_i * h``, computed in the outer-product
    form ``M ⊙ (1 - z ⊗ e_l) + z ⊗ h``.
    """
    if z.shape != (memory.k,):
        raise ShapeError(f"memory_update: attention shape {z.shape} for {memory.k} slots")
    if h.shape != (memory.l,):
        raise ShapeError(f"memory_update: write shape {h.shape} for slot width {memory.l}")
    total = float(z.values.sum())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"memory_update: attention sums to {total}, not 1")
    ones = Tensor(np.ones(memory.l))
    erase = T.outer(1.0 - z, ones)
    return Memory(memory.slots * erase + T.outer(z, h), memory.mask)


def init_flat_memory(embeddings: EmbeddingTable, ids: np.ndarray) -> Memory:
    """One slot per input token, initialized to its embedding row."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("cannot build a memory from an empty input")
    return Memory(embeddings.lookup_many(ids), ids != PAD)


def init_hier_memories(
    embeddings: EmbeddingTable, grid: np.ndarray
) -> tuple[SentenceMemoryBank, DocumentMemory]:
    """Sentence memories from word vectors; document rows are the sentence means.

    ``grid`` is an ``S_in × T_in`` id array with PAD fill. PAD words are left out
    of each mean; a fully padded sentence gets a zero, masked document row.
    """
    grid = np.asarray(grid, dtype=np.int64)
    if grid.ndim != 2:
        raise ShapeError(f"hierarchical input must be a 2-d id grid, got {grid.shape}")
    word_mask = grid != PAD
    sentence_mask = word_mask.any(axis=1)
    if not sentence_mask.any():
        raise ValueError("cannot build memories for an empty document")

    n_sent, n_words = grid.shape
    memories = tuple(
        Memory(embeddings.lookup_many(grid[i]), word_mask[i]) for i in range(n_sent)
    )
    averaging = np.zeros((n_sent, n_sent * n_words))
    for i in range(n_sent):
        live = word_mask[i].sum()
        if live:
            averaging[i, i * n_words:(i + 1) * n_words] = word_mask[i] / live
    doc = Tensor(averaging) @ embeddings.lookup_many(grid.ravel())
    return SentenceMemoryBank(memories, sentence_mask), Memory(doc, sentence_mask)


def init_memories(
    embeddings: EmbeddingTable, ids: np.ndarray, hier: bool
) -> Memory | tuple[SentenceMemoryBank, DocumentMemory]:
    return init_hier_memories(embeddings, ids) if hier else init_flat_memory(embeddings, ids)
