"""Neural building blocks: LSTM cell, MLP, embedding table, attention heads.

Every block is a :class:`Module` whose trainable tensors are discovered in
attribute declaration order, which keeps parameter names (and therefore
checkpoint layout) stable across runs.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

INIT_RANGE = 0.08
FORGET_BIAS = 1.0

GATES = ("input", "forget", "output", "candidate")


def uniform(rng: np.random.Generator, shape: tuple[int, ...], bound: float = INIT_RANGE) -> Tensor:
    """Trainable tensor drawn from uniform(-bound, bound)."""
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    """Container that exposes its trainable tensors by dotted name."""

    def named_tensors(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        """Every tensor the module owns, trainable or frozen."""
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_tensors(f"{name}.")

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        return ((n, t) for n, t in self.named_tensors(prefix) if t.requires_grad)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


class Linear(Module):
    """Affine map ``x @ W + b``."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator) -> None:
        self.W = uniform(rng, (in_dim, out_dim))
        self.b = uniform(rng, (out_dim,))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


# --- LSTM ---


@dataclass(frozen=True)
class LstmState:
    h: Tensor
    c: Tensor


class LstmCell(Module):
    """Single-layer LSTM cell with one weight matrix and bias per gate."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> None:
        if input_dim <= 0 or hidden_dim <= 0:
            raise ValueError(f"LSTM dims must be positive, got {input_dim}, {hidden_dim}")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        for gate in GATES:
            setattr(self, f"W_{gate}", uniform(rng, (input_dim + hidden_dim, hidden_dim)))
            bias = uniform(rng, (hidden_dim,))
            if gate == "forget":
                bias.values[:] = FORGET_BIAS
            setattr(self, f"b_{gate}", bias)

    def zero_state(self) -> LstmState:
        return LstmState(Tensor(np.zeros(self.hidden_dim)), Tensor(np.zeros(self.hidden_dim)))

    def __call__(self, x: Tensor, state: LstmState) -> LstmState:
        return lstm_step(self, x, state)


def lstm_step(cell: LstmCell, x: Tensor, state: LstmState) -> LstmState:
    """One LSTM step: sigmoid gates, tanh candidate, ``h' = o * tanh(c')``."""
    if x.shape != (cell.input_dim,):
        raise ShapeError(f"lstm_step: input shape {x.shape}, expected ({cell.input_dim},)")
    if state.h.shape != (cell.hidden_dim,) or state.c.shape != (cell.hidden_dim,):
        raise ShapeError(
            f"lstm_step: state shapes {state.h.shape}/{state.c.shape}, "
            f"expected ({cell.hidden_dim},)"
        )
    xh = T.concat([x, state.h])
    i = T.sigmoid(xh @ cell.W_input + cell.b_input)
    f = T.sigmoid(xh @ cell.W_forget + cell.b_forget)
    o = T.sigmoid(xh @ cell.W_output + cell.b_output)
    g = T.tanh(xh @ cell.W_candidate + cell.b_candidate)
    c = f * state.c + i * g
    h = o * T.tanh(c)
    return LstmState(h, c)


# --- MLP ---


class Mlp(Module):
    """Stack of tanh-activated affine layers."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator) -> None:
        if len(dims) < 2:
            raise ValueError(f"MLP needs at least input and output dims, got {list(dims)}")
        self.dims = tuple(dims)
        for n, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:], strict=True)):
            setattr(self, f"layer{n}", Linear(d_in, d_out, rng))

    def __call__(self, x: Tensor) -> Tensor:
        for n in range(len(self.dims) - 1):
            x = T.tanh(getattr(self, f"layer{n}")(x))
        return x


# --- embeddings ---


class EmbeddingTable(Module):
    """Vocabulary-size × dim lookup table."""

    def __init__(self, matrix: np.ndarray, trainable: bool = True) -> None:
        self.weight = Tensor(matrix, requires_grad=trainable)
        self.trainable = trainable

    @property
    def vocab_size(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def lookup(self, token_id: int) -> Tensor:
        return T.row(self.weight, token_id)

    def lookup_many(self, ids: Sequence[int] | np.ndarray) -> Tensor:
        return T.gather(self.weight, ids)


# --- attention ---


def dot_attention(memory: Tensor, key: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """``softmax(M · key)`` over memory slots."""
    if memory.ndim != 2 or memory.shape[0] == 0:
        raise ShapeError(f"dot_attention: memory must be a non-empty matrix, got {memory.shape}")
    if key.shape != (memory.shape[1],):
        raise ShapeError(f"dot_attention: key shape {key.shape} vs memory shape {memory.shape}")
    return T.masked_softmax(memory @ key, mask)


class AdditiveAttention(Module):
    """Additive scorer ``v · tanh(W M_i + U key + b_attn)`` over memory rows."""

    def __init__(self, dim: int, rng: np.random.Generator) -> None:
        self.dim = dim
        self.W = uniform(rng, (dim, dim))
        self.U = uniform(rng, (dim, dim))
        self.v = uniform(rng, (dim,))
        self.b_attn = uniform(rng, (dim,))

    def __call__(self, memory: Tensor, key: Tensor, mask: np.ndarray | None = None) -> Tensor:
        return additive_attention(self, memory, key, mask)


def additive_attention(
    attn: AdditiveAttention, memory: Tensor, key: Tensor, mask: np.ndarray | None = None
) -> Tensor:
    if memory.ndim != 2 or memory.shape[0] == 0 or memory.shape[1] != attn.dim:
        raise ShapeError(
            f"additive_attention: memory shape {memory.shape} vs attention dim {attn.dim}"
        )
    if key.shape != (attn.dim,):
        raise ShapeError(f"additive_attention: key shape {key.shape}, expected ({attn.dim},)")
    # W applies per row, so the head is independent of the slot count.
    hidden = T.tanh(memory @ attn.W + (key @ attn.U + attn.b_attn))
    return T.masked_softmax(hidden @ attn.v, mask)


class OutputProjection(Module):
    """Write state → vocabulary distribution, never emitting PAD or START."""

    def __init__(self, dim: int, vocab_size: int, blocked: Sequence[int], rng: np.random.Generator):
        self.linear = Linear(dim, vocab_size, rng)
        self.mask = np.ones(vocab_size, dtype=bool)
        self.mask[list(blocked)] = False

    def __call__(self, h: Tensor) -> Tensor:
        return T.masked_softmax(self.linear(h), self.mask)
