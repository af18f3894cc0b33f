"""Tests for pre-trained embedding loading."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pytest

from nsesum.core.embeddings import INIT_BOUND, load_embeddings, random_table
from nsesum.core.vocab import PAD, Vocabulary


class TestRandomTable:
    def test_bounds_and_zero_pad(self, rng: np.random.Generator) -> None:
        m = random_table(6, 4, rng)
        assert not m[PAD].any()
        assert np.abs(m).max() <= INIT_BOUND


class TestLoadEmbeddings:
    def test_copies_known_vectors(
        self, tmp_path: Path, small_vocab: Vocabulary, rng: np.random.Generator
    ) -> None:
        path = tmp_path / "glove.txt"
        path.write_text("a 1 2 3\nzebra 4 5 6\n[PAD] 9 9 9\n", encoding="utf-8")
        table = load_embeddings(path, small_vocab, rng, dim=3)
        assert table.weight.values[small_vocab.id_of("a")].tolist() == [1.0, 2.0, 3.0]
        assert not table.weight.values[PAD].any()
        assert table.trainable

    def test_skips_malformed_lines(
        self,
        tmp_path: Path,
        small_vocab: Vocabulary,
        rng: np.random.Generator,
        caplog: pytest.LogCaptureFixture,
    ) -> None:
        path = tmp_path / "glove.txt"
        path.write_text("b 1 x 3\nlonely\nc nan 1 1\nd 1 1 1\n", encoding="utf-8")
        with caplog.at_level(logging.WARNING):
            table = load_embeddings(path, small_vocab, rng, dim=3, trainable=False)
        assert "skipped 3 malformed" in caplog.text
        assert table.weight.values[small_vocab.id_of("d")].tolist() == [1.0, 1.0, 1.0]
        assert table.parameters() == []

    def test_dimension_mismatch(
        self, tmp_path: Path, small_vocab: Vocabulary, rng: np.random.Generator
    ) -> None:
        path = tmp_path / "glove.txt"
        path.write_text("a 1 2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="expected 3"):
            load_embeddings(path, small_vocab, rng, dim=3)
