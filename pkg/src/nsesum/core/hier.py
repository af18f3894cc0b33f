"""Hierarchical NSE: one word memory per sentence plus a document memory.

The encoder reads the document sentence by sentence. Each word step attends to
the active sentence's memory and to the document memory, composes both
retrievals with the read state, and writes the same write vector into both
memories. Inactive sentence memories stay frozen. By default document rows of
sentences not yet read are hidden from the encoder; with ``causal=False`` every
live row is visible from the first word on. The decoder then works against all
sentence memories concatenated into one word-level memory and the full
document memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import AdditiveAttention, EmbeddingTable, LstmCell, Module, OutputProjection
from .memory import (
    DocumentMemory,
    Memory,
    SentenceMemoryBank,
    init_hier_memories,
    memory_update,
)
from .nse import NseState, PointerHead, pointer_generator_mix
from .tensor import ShapeError, Tensor
from .vocab import PAD, ExtendedVocabMap

MAX_SENTENCES = 20
MAX_SENTENCE_WORDS = 20

__all__ = [
    "DocumentMemory",
    "HierDecodeStep",
    "HierNseCell",
    "HierStepOutput",
    "SentenceMemoryBank",
    "assemble_decoder_memory",
    "encode_document",
    "fit_grid",
    "hier_decode_step",
    "hier_encode_step",
]


class HierNseCell(Module):
    def __init__(self, input_dim: int, dim: int, rng: np.random.Generator) -> None:
        self.dim = dim
        self.read = LstmCell(input_dim, dim, rng)
        self.sentence_attention = AdditiveAttention(dim, rng)
        self.document_attention = AdditiveAttention(dim, rng)
        self.compose = LstmCell(3 * dim, dim, rng)
        self.write = LstmCell(dim, dim, rng)

    def initial_state(self) -> NseState:
        return NseState(
            self.read.zero_state(), self.write.zero_state(), self.compose.zero_state()
        )


@dataclass(frozen=True)
class HierStepOutput:
    o: Tensor
    z_s: Tensor
    z_d: Tensor
    m_s: Tensor
    m_d: Tensor
    c: Tensor
    h: Tensor
    sentence_memory: Memory
    document_memory: DocumentMemory
    state: NseState


def hier_encode_step(
    cell: HierNseCell,
    x: Tensor,
    sentence_memory: Memory,
    document_memory: DocumentMemory,
    state: NseState,
) -> HierStepOutput:
    read = cell.read(x, state.read)
    o = read.h
    z_s = cell.sentence_attention(sentence_memory.slots, o, sentence_memory.mask)
    z_d = cell.document_attention(document_memory.slots, o, document_memory.mask)
    m_s = z_s @ sentence_memory.slots
    m_d = z_d @ document_memory.slots
    compose = cell.compose(T.concat([o, m_s, m_d]), state.compose)
    c = compose.h
    write = cell.write(c, state.write)
    h = write.h
    # Both memories take the same write vector.
    return HierStepOutput(
        o, z_s, z_d, m_s, m_d, c, h,
        memory_update(sentence_memory, z_s, h),
        memory_update(document_memory, z_d, h),
        NseState(read, write, compose),
    )


def fit_grid(grid: np.ndarray, max_sentences: int, max_words: int) -> np.ndarray:
    """Truncate or PAD-fill an id grid to exactly ``max_sentences × max_words``."""
    grid = np.asarray(grid, dtype=np.int64)
    if grid.ndim != 2:
        raise ShapeError(f"document must be a 2-d id grid, got shape {grid.shape}")
    out = np.full((max_sentences, max_words), PAD, dtype=np.int64)
    rows, cols = min(grid.shape[0], max_sentences), min(grid.shape[1], max_words)
    out[:rows, :cols] = grid[:rows, :cols]
    return out


def encode_document(
    cell: HierNseCell,
    embeddings: EmbeddingTable,
    grid: np.ndarray,
    max_sentences: int = MAX_SENTENCES,
    max_words: int = MAX_SENTENCE_WORDS,
    causal: bool = True,
) -> tuple[SentenceMemoryBank, DocumentMemory, NseState, list[HierStepOutput]]:
    """Encode sentences in order; LSTM states run on across sentence boundaries.

    With ``causal`` set, document attention only reaches rows ``0..i`` while sentence
    ``i`` is read, so a sentence's final memory never depends on sentences that follow
    it. Without it the initial rows of later sentences are attended from the start.
    """
    grid = fit_grid(grid, max_sentences, max_words)
    if not (grid != PAD).any():
        raise ValueError("cannot encode an empty document")
    bank, doc = init_hier_memories(embeddings, grid)
    state = cell.initial_state()
    outputs: list[HierStepOutput] = []
    for i in range(max_sentences):
        if not bank.sentence_mask[i]:
            continue
        sentence = bank.memories[i]
        visible = doc.mask & (np.arange(doc.k) <= i) if causal else doc.mask
        read_so_far = Memory(doc.slots, visible)
        for token_id in grid[i]:
            if token_id == PAD:
                continue
            x = embeddings.lookup(int(token_id))
            out = hier_encode_step(cell, x, sentence, read_so_far, state)
            sentence, read_so_far, state = out.sentence_memory, out.document_memory, out.state
            outputs.append(out)
        bank = bank.replace(i, sentence)
        doc = Memory(read_so_far.slots, doc.mask)
    return bank, doc, state, outputs


def assemble_decoder_memory(
    bank: SentenceMemoryBank, doc: DocumentMemory
) -> tuple[Memory, DocumentMemory]:
    """Concatenate sentence memories row-wise, in sentence order."""
    words = Memory(
        T.concat([m.slots for m in bank.memories], axis=0),
        np.concatenate([m.mask for m in bank.memories]),
    )
    return words, doc


@dataclass(frozen=True)
class HierDecodeStep:
    distribution: Tensor
    p_gen: Tensor
    output: HierStepOutput


def hier_decode_step(
    cell: HierNseCell,
    pointer: PointerHead,
    projection: OutputProjection,
    y_prev: Tensor,
    words: Memory,
    doc: DocumentMemory,
    state: NseState,
    source_ids: np.ndarray,
    oov: ExtendedVocabMap,
) -> HierDecodeStep:
    """Decoder step over the concatenated word memory and the document memory.

    Copying follows the word-level attention, aligned with the flattened source grid.
    """
    out = hier_encode_step(cell, y_prev, words, doc, state)
    p_gen = pointer(out.m_s, out.h, out.o)
    dist = pointer_generator_mix(p_gen, projection(out.h), out.z_s, source_ids, oov)
    return HierDecodeStep(dist, p_gen, out)
