"""Pre-trained word vectors in GloVe text format (``token v1 ... v_dim`` per line)."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .layers import EmbeddingTable
from .vocab import PAD, Vocabulary

log = logging.getLogger(__name__)

DEFAULT_DIM = 300
INIT_BOUND = 0.1


def random_table(vocab_size: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """uniform(-0.1, 0.1) rows with a zero PAD row."""
    matrix = rng.uniform(-INIT_BOUND, INIT_BOUND, size=(vocab_size, dim))
    matrix[PAD] = 0.0
    return matrix


def load_embeddings(
    path: str | Path,
    vocab: Vocabulary,
    rng: np.random.Generator,
    dim: int = DEFAULT_DIM,
    trainable: bool = True,
) -> EmbeddingTable:
    """Copy vectors for vocabulary tokens found in the file; others stay random.

    Malformed lines (unparseable floats) are skipped and counted.

    Raises:
        ValueError: If a well-formed line carries a vector of the wrong dimension.
    """
    matrix = random_table(vocab.size, dim, rng)
    found = skipped = 0
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                skipped += 1
                continue
            token, raw = parts[0], parts[1:]
            try:
                vector = np.array([float(x) for x in raw])
            except ValueError:
                skipped += 1
                continue
            if vector.size != dim:
                raise ValueError(
                    f"{path}:{n}: vector for {token!r} has {vector.size} values, expected {dim}"
                )
            if not np.isfinite(vector).all():
                skipped += 1
                continue
            if token in vocab and vocab.id_of(token) != PAD:
                matrix[vocab.id_of(token)] = vector
                found += 1
    if skipped:
        log.warning("skipped %d malformed embedding lines in %s", skipped, path)
    log.info("loaded %d of %d vocabulary vectors from %s", found, vocab.size, path)
    return EmbeddingTable(matrix, trainable=trainable)
