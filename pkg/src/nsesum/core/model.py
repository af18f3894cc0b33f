"""Summarizer: embeddings, NSE encoder/decoder and the pointer-generator head.

Training and decoding only use three methods, :meth:`Summarizer.encode`,
:meth:`Summarizer.decode_step` and :meth:`Summarizer.teacher_forced`, so any
object offering them can stand in for a model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Protocol

import numpy as np

from .batching import EncodedExample
from .embeddings import random_table
from .hier import (
    MAX_SENTENCE_WORDS,
    MAX_SENTENCES,
    HierNseCell,
    assemble_decoder_memory,
    encode_document,
    hier_decode_step,
)
from .layers import EmbeddingTable, Module, OutputProjection
from .memory import DocumentMemory, Memory
from .nse import NseCell, NseState, PointerHead, encode_sequence, nse_decode_step
from .tensor import Tensor
from .vocab import PAD, START, UNK, ExtendedVocabMap

ModelVariant = Literal["vanilla", "improved", "hier"]
MODEL_VARIANTS: tuple[ModelVariant, ...] = ("vanilla", "improved", "hier")


@dataclass(frozen=True)
class ModelConfig:
    variant: ModelVariant
    vocab_size: int
    dim: int = 300
    max_sentences: int = MAX_SENTENCES
    max_sentence_words: int = MAX_SENTENCE_WORDS
    causal_document: bool = True

    def __post_init__(self) -> None:
        if self.variant not in MODEL_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {MODEL_VARIANTS}")
        if self.dim <= 0 or self.vocab_size <= 4:
            raise ValueError(f"invalid model dims: dim={self.dim}, vocab_size={self.vocab_size}")

    @property
    def hier(self) -> bool:
        return self.variant == "hier"


@dataclass(frozen=True)
class DecoderState:
    """Everything the decoder carries from one step to the next."""

    memory: Memory
    document: DocumentMemory | None
    state: NseState
    source_ids: np.ndarray
    oov: ExtendedVocabMap


class SequenceModel(Protocol):
    def encode(self, example: EncodedExample) -> DecoderState: ...

    def decode_step(self, state: DecoderState, prev_id: int) -> tuple[Tensor, DecoderState]: ...

    def teacher_forced(self, example: EncodedExample) -> list[Tensor]: ...


class Summarizer(Module):
    def __init__(
        self,
        config: ModelConfig,
        rng: np.random.Generator,
        embedding: EmbeddingTable | None = None,
    ) -> None:
        if embedding is None:
            embedding = EmbeddingTable(random_table(config.vocab_size, config.dim, rng))
        if (embedding.vocab_size, embedding.dim) != (config.vocab_size, config.dim):
            raise ValueError(
                f"embedding table {embedding.vocab_size}×{embedding.dim} does not match "
                f"model {config.vocab_size}×{config.dim}"
            )
        self.config = config
        self.embedding = embedding
        if config.hier:
            self.encoder = HierNseCell(config.dim, config.dim, rng)
            self.decoder = HierNseCell(config.dim, config.dim, rng)
        else:
            self.encoder = NseCell(config.variant, config.dim, config.dim, rng)
            self.decoder = NseCell(config.variant, config.dim, config.dim, rng)
        self.pointer = PointerHead(config.dim, rng)
        self.projection = OutputProjection(config.dim, config.vocab_size, (PAD, START), rng)

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def encode(self, example: EncodedExample) -> DecoderState:
        """Run the encoder; the decoder starts from its final memory and LSTM states."""
        if example.hier != self.config.hier:
            raise ValueError(
                f"{self.config.variant} model cannot read a "
                f"{'grid' if example.hier else 'flat'} example"
            )
        if self.config.hier:
            bank, doc, state, _ = encode_document(
                self.encoder, self.embedding, example.article_ids, *example.article_ids.shape,
                causal=self.config.causal_document,
            )
            words, doc = assemble_decoder_memory(bank, doc)
            return DecoderState(words, doc, state, example.source_ids, example.oov)
        memory, outputs = encode_sequence(
            self.encoder, self.embedding, example.article_ids, max_tokens=example.article_ids.size
        )
        state = outputs[-1].state if outputs else self.encoder.initial_state()
        return DecoderState(memory, None, state, example.source_ids, example.oov)

    def decode_step(self, state: DecoderState, prev_id: int) -> tuple[Tensor, DecoderState]:
        """Feed the previous token (OOV read as UNK) and return the extended distribution."""
        y_prev = self.embedding.lookup(prev_id if prev_id < self.vocab_size else UNK)
        if self.config.hier:
            step = hier_decode_step(
                self.decoder, self.pointer, self.projection, y_prev,
                state.memory, state.document, state.state, state.source_ids, state.oov,
            )
            out = step.output
            return step.distribution, replace(
                state,
                memory=out.sentence_memory,
                document=out.document_memory,
                state=out.state,
            )
        step = nse_decode_step(
            self.decoder, self.pointer, self.projection, y_prev,
            state.memory, state.state, state.source_ids, state.oov,
        )
        return step.distribution, replace(state, memory=step.output.memory, state=step.output.state)

    def teacher_forced(self, example: EncodedExample) -> list[Tensor]:
        """One distribution per target position, fed the gold previous tokens."""
        state = self.encode(example)
        dists = []
        for prev_id in example.decoder_inputs:
            dist, state = self.decode_step(state, int(prev_id))
            dists.append(dist)
        return dists
