"""Flat Neural Semantic Encoder: read, retrieve, compose, write, update.

The vanilla cell scores memory slots with a dot product and composes with an
MLP; the improved cell scores with additive attention and composes with an
LSTM that carries its own state across timesteps. Both feed a pointer-generator
head when used as a decoder.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import tensor as T
from .layers import (
    AdditiveAttention,
    EmbeddingTable,
    LstmCell,
    LstmState,
    Mlp,
    Module,
    OutputProjection,
    dot_attention,
    uniform,
)
from .memory import Memory, init_flat_memory, memory_update
from .tensor import ShapeError, Tensor
from .vocab import PAD, ExtendedVocabMap

log = logging.getLogger(__name__)

Variant = Literal["vanilla", "improved"]
MAX_ARTICLE_TOKENS = 400
SUM_TOL = 1e-6


@dataclass(frozen=True)
class NseState:
    read: LstmState
    write: LstmState
    compose: LstmState | None = None


@dataclass(frozen=True)
class NseStepOutput:
    o: Tensor
    z: Tensor
    m_r: Tensor
    c: Tensor
    h: Tensor
    memory: Memory
    state: NseState


class NseCell(Module):
    """Read/compose/write networks of one flat NSE (encoder or decoder side)."""

    def __init__(self, variant: Variant, input_dim: int, dim: int, rng: np.random.Generator):
        if variant not in ("vanilla", "improved"):
            raise ValueError(f"unknown NSE variant {variant!r}")
        self.variant = variant
        self.dim = dim
        self.read = LstmCell(input_dim, dim, rng)
        if variant == "vanilla":
            self.compose = Mlp([2 * dim, dim, dim], rng)
            self.attention = None
        else:
            self.compose = LstmCell(2 * dim, dim, rng)
            self.attention = AdditiveAttention(dim, rng)
        self.write = LstmCell(dim, dim, rng)

    def initial_state(self) -> NseState:
        compose = self.compose.zero_state() if isinstance(self.compose, LstmCell) else None
        return NseState(self.read.zero_state(), self.write.zero_state(), compose)


def vanilla_nse_step(cell: NseCell, x: Tensor, memory: Memory, state: NseState) -> NseStepOutput:
    read = cell.read(x, state.read)
    o = read.h
    z = dot_attention(memory.slots, o, memory.mask)
    m_r = z @ memory.slots
    c = cell.compose(T.concat([o, m_r]))
    write = cell.write(c, state.write)
    h = write.h
    return NseStepOutput(o, z, m_r, c, h, memory_update(memory, z, h), NseState(read, write))


def improved_nse_step(cell: NseCell, x: Tensor, memory: Memory, state: NseState) -> NseStepOutput:
    read = cell.read(x, state.read)
    o = read.h
    z = cell.attention(memory.slots, o, memory.mask)
    m_r = z @ memory.slots
    compose = cell.compose(T.concat([o, m_r]), state.compose)
    c = compose.h
    write = cell.write(c, state.write)
    h = write.h
    return NseStepOutput(
        o, z, m_r, c, h, memory_update(memory, z, h), NseState(read, write, compose)
    )


def nse_step(cell: NseCell, x: Tensor, memory: Memory, state: NseState) -> NseStepOutput:
    step = vanilla_nse_step if cell.variant == "vanilla" else improved_nse_step
    return step(cell, x, memory, state)


def encode_sequence(
    cell: NseCell,
    embeddings: EmbeddingTable,
    token_ids: Sequence[int] | np.ndarray,
    max_tokens: int = MAX_ARTICLE_TOKENS,
) -> tuple[Memory, list[NseStepOutput]]:
    """Initialize one slot per token, then evolve the memory once per token."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot encode an empty sequence")
    if ids.size > max_tokens:
        log.debug("truncating %d input tokens to %d", ids.size, max_tokens)
        ids = ids[:max_tokens]
    memory = init_flat_memory(embeddings, ids)
    state = cell.initial_state()
    outputs: list[NseStepOutput] = []
    for token_id in ids:
        if token_id == PAD:
            continue
        out = nse_step(cell, embeddings.lookup(int(token_id)), memory, state)
        memory, state = out.memory, out.state
        outputs.append(out)
    return memory, outputs


# --- pointer-generator output head ---


class PointerHead(Module):
    """Generation switch ``p_gen = σ(W_m·m_r + W_h·h + W_o·o + b_ptr)``."""

    def __init__(self, dim: int, rng: np.random.Generator) -> None:
        self.W_m = uniform(rng, (dim,))
        self.W_h = uniform(rng, (dim,))
        self.W_o = uniform(rng, (dim,))
        self.b_ptr = uniform(rng, (1,))

    def __call__(self, m_r: Tensor, h: Tensor, o: Tensor) -> Tensor:
        return T.sigmoid(m_r @ self.W_m + h @ self.W_h + o @ self.W_o + self.b_ptr)


def pointer_generator_mix(
    p_gen: Tensor,
    p_vocab: Tensor,
    z: Tensor,
    source_ids: Sequence[int] | np.ndarray,
    oov: ExtendedVocabMap,
) -> Tensor:
    """Mix generation and copying into one distribution over the extended vocabulary.

    ``p(w) = p_gen · p_vocab(w) + (1 - p_gen) · Σ_{i: w_i = w} z_i``
    """
    source_ids = np.asarray(source_ids, dtype=np.int64)
    oov.validate()
    if p_vocab.shape != (oov.base_size,):
        raise ShapeError(f"p_vocab shape {p_vocab.shape} vs vocabulary size {oov.base_size}")
    if z.shape != source_ids.shape:
        raise ShapeError(f"copy attention shape {z.shape} vs source ids {source_ids.shape}")
    if p_gen.shape != (1,):
        raise ShapeError(f"p_gen must be a scalar, got shape {p_gen.shape}")
    for label, dist in (("p_vocab", p_vocab), ("copy attention", z)):
        total = float(dist.values.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"{label} sums to {total}, not 1")
    if source_ids.size and source_ids.max() >= oov.extended_size:
        raise ValueError(
            f"source id {int(source_ids.max())} outside extended vocabulary {oov.extended_size}"
        )

    generate = p_gen * p_vocab
    if len(oov):
        generate = T.concat([generate, Tensor(np.zeros(len(oov)))])
    copy = T.scatter_add(z, source_ids, oov.extended_size)
    return generate + (1.0 - p_gen) * copy


@dataclass(frozen=True)
class DecodeStep:
    distribution: Tensor
    p_gen: Tensor
    output: NseStepOutput


def nse_decode_step(
    cell: NseCell,
    pointer: PointerHead,
    projection: OutputProjection,
    y_prev: Tensor,
    memory: Memory,
    state: NseState,
    source_ids: np.ndarray,
    oov: ExtendedVocabMap,
) -> DecodeStep:
    """One decoder step over the encoder's evolving memory."""
    out = nse_step(cell, y_prev, memory, state)
    p_gen = pointer(out.m_r, out.h, out.o)
    dist = pointer_generator_mix(p_gen, projection(out.h), out.z, source_ids, oov)
    return DecodeStep(dist, p_gen, out)
