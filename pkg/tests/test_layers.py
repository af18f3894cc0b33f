"""Tests for the neural building blocks."""

from __future__ import annotations

import numpy as np
import pytest

from nsesum.core import tensor as T
from nsesum.core.layers import (
    AdditiveAttention,
    EmbeddingTable,
    LstmCell,
    LstmState,
    Mlp,
    OutputProjection,
    dot_attention,
)
from nsesum.core.tensor import ShapeError, Tensor
from nsesum.core.vocab import PAD, START

TOL = 1e-6


class TestLstm:
    def test_forget_bias_is_one(self, rng: np.random.Generator) -> None:
        cell = LstmCell(3, 4, rng)
        assert np.all(cell.b_forget.values == 1.0)

    def test_parameter_order_is_stable(self) -> None:
        names = [n for n, _ in LstmCell(2, 2, np.random.default_rng(1)).named_parameters()]
        assert names == [
            "W_input", "b_input", "W_forget", "b_forget",
            "W_output", "b_output", "W_candidate", "b_candidate",
        ]

    def test_step_gradients(self, rng: np.random.Generator) -> None:
        cell = LstmCell(3, 2, rng)
        x1, x2 = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))

        def loss() -> Tensor:
            s = cell(x2, cell(x1, cell.zero_state()))
            return T.sum(s.h * s.c)

        assert T.grad_check_parameters(loss, cell.parameters()) < TOL

    def test_hidden_state_bounded(self, rng: np.random.Generator) -> None:
        cell = LstmCell(2, 3, rng)
        state = cell(Tensor([50.0, -50.0]), cell.zero_state())
        assert np.all(np.abs(state.h.values) < 1.0)

    def test_wrong_input_shape(self, rng: np.random.Generator) -> None:
        cell = LstmCell(3, 2, rng)
        with pytest.raises(ShapeError):
            cell(Tensor(np.zeros(2)), cell.zero_state())
        with pytest.raises(ShapeError):
            cell(Tensor(np.zeros(3)), LstmState(Tensor(np.zeros(3)), Tensor(np.zeros(2))))


class TestMlp:
    def test_gradients(self, rng: np.random.Generator) -> None:
        mlp = Mlp([4, 3, 2], rng)
        x = Tensor(rng.normal(size=4))
        assert T.grad_check_parameters(lambda: T.sum(mlp(x)), mlp.parameters()) < TOL

    def test_needs_two_dims(self, rng: np.random.Generator) -> None:
        with pytest.raises(ValueError):
            Mlp([4], rng)


class TestEmbeddingTable:
    def test_frozen_table_has_no_parameters(self) -> None:
        table = EmbeddingTable(np.eye(3), trainable=False)
        assert table.parameters() == []
        assert [n for n, _ in table.named_tensors()] == ["weight"]

    def test_lookup_gradient_scatters_rows(self) -> None:
        table = EmbeddingTable(np.eye(3))
        T.sum(table.lookup_many([2, 2, 0])).backward()
        assert table.weight.grad.sum(axis=1).tolist() == [3.0, 0.0, 6.0]


class TestAttention:
    def test_dot_attention_normalizes(self, rng: np.random.Generator) -> None:
        memory = Tensor(rng.normal(size=(4, 3)))
        z = dot_attention(memory, Tensor(rng.normal(size=3)), np.array([1, 1, 0, 1], bool))
        assert z.values[2] == 0.0
        assert z.values.sum() == pytest.approx(1.0)

    def test_additive_gradients(self, rng: np.random.Generator) -> None:
        attn = AdditiveAttention(3, rng)
        memory = Tensor(rng.normal(size=(5, 3)))
        key = Tensor(rng.normal(size=3))
        w = Tensor(rng.normal(size=5))
        mask = np.array([1, 1, 1, 0, 1], bool)
        err = T.grad_check_parameters(lambda: attn(memory, key, mask) @ w, attn.parameters())
        assert err < TOL

    def test_additive_zero_v_is_uniform(self, rng: np.random.Generator) -> None:
        attn = AdditiveAttention(3, rng)
        attn.v.values[:] = 0.0
        mask = np.array([1, 0, 1, 1, 0], bool)
        z = attn(Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=3)), mask)
        np.testing.assert_allclose(z.values, [1 / 3, 0.0, 1 / 3, 1 / 3, 0.0])

    def test_additive_independent_of_slot_count(self, rng: np.random.Generator) -> None:
        attn = AdditiveAttention(3, rng)
        key = Tensor(rng.normal(size=3))
        for k in (1, 7, 40):
            z = attn(Tensor(rng.normal(size=(k, 3))), key)
            assert z.shape == (k,)

    def test_additive_shape_errors(self, rng: np.random.Generator) -> None:
        attn = AdditiveAttention(3, rng)
        with pytest.raises(ShapeError):
            attn(Tensor(np.zeros((2, 4))), Tensor(np.zeros(3)))
        with pytest.raises(ShapeError):
            attn(Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)))


class TestOutputProjection:
    def test_blocks_pad_and_start(self, rng: np.random.Generator) -> None:
        proj = OutputProjection(3, 8, [PAD, START], rng)
        p = proj(Tensor(rng.normal(size=3)))
        assert p.values[PAD] == 0.0
        assert p.values[START] == 0.0
        assert p.values.sum() == pytest.approx(1.0)
