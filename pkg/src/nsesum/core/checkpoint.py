"""Checkpoint file: versioned header, YAML metadata block, named float64 tensors.

Layout::

    magic    8 bytes   b"NSESUM\\x00\\x01"
    version  uint32    little-endian
    meta     uint32 length + UTF-8 YAML (model config, vocabulary, training state)
    count    uint32
    tensors  count × (uint16 name length, name, uint8 rank, rank × uint32 dims,
                      dims-product × float64 little-endian)

Optimizer moments are stored as ordinary tensors named ``adam.m/<param>`` and
``adam.v/<param>``. Output bytes depend only on the model and its metadata.
"""

from __future__ import annotations

import logging
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .model import ModelConfig, Summarizer
from .vocab import Vocabulary

log = logging.getLogger(__name__)

MAGIC = b"NSESUM\x00\x01"
VERSION = 1
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")


class CheckpointError(ValueError):
    """The file is not a readable checkpoint or does not fit the request."""


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    mode: str
    tensors: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def variant(self) -> str:
        return self.config.variant


def _write_tensor(out: list[bytes], name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    out.append(_U16.pack(len(raw)))
    out.append(raw)
    out.append(struct.pack("<B", arr.ndim))
    out.extend(_U32.pack(d) for d in arr.shape)
    out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    meta = {
        "model": asdict(ckpt.config),
        "mode": ckpt.mode,
        "vocab": list(ckpt.vocab.tokens),
        **ckpt.meta,
    }
    meta_raw = yaml.safe_dump(meta, sort_keys=True, allow_unicode=True).encode("utf-8")
    entries = {**ckpt.tensors, **ckpt.optimizer}
    out = [MAGIC, _U32.pack(VERSION), _U32.pack(len(meta_raw)), meta_raw, _U32.pack(len(entries))]
    for name, arr in entries.items():
        _write_tensor(out, name, arr)
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes, path: Path) -> None:
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_checkpoint(data: bytes, path: Path) -> Checkpoint:
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not an nsesum checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = yaml.safe_load(r.take(r.u32()).decode("utf-8"))
        config = ModelConfig(**meta.pop("model"))
        vocab = Vocabulary(meta.pop("vocab"))
        mode = meta.pop("mode")
    except (yaml.YAMLError, KeyError, TypeError, AttributeError) as e:
        raise CheckpointError(f"{path}: unreadable metadata block: {e}") from e

    tensors: dict[str, np.ndarray] = {}
    optimizer: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(_U16.unpack(r.take(2))[0]).decode("utf-8")
        rank = r.take(1)[0]
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape))
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
        (optimizer if name.startswith("adam.") else tensors)[name] = arr
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes")
    return Checkpoint(config, vocab, mode, tensors, optimizer, meta)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Write atomically: a partial file never replaces a good checkpoint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(encode_checkpoint(ckpt))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    log.info("wrote checkpoint %s", path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Raises:
        FileNotFoundError: If the file doesn't exist.
        CheckpointError: If the file is not a valid checkpoint.
    """
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), path)


def model_checkpoint(
    model: Summarizer,
    vocab: Vocabulary,
    mode: str,
    optimizer: dict[str, np.ndarray] | None = None,
    **meta: Any,
) -> Checkpoint:
    tensors = {name: t.values.copy() for name, t in model.named_tensors()}
    return Checkpoint(model.config, vocab, mode, tensors, dict(optimizer or {}), meta)


def load_parameters(model: Summarizer, ckpt: Checkpoint) -> None:
    """Copy checkpoint tensors into ``model`` in place.

    Raises:
        CheckpointError: On a variant, name or shape mismatch.
    """
    if ckpt.config != model.config:
        raise CheckpointError(
            f"checkpoint holds a {ckpt.config.variant} model {ckpt.config}, "
            f"expected {model.config}"
        )
    own = dict(model.named_tensors())
    if own.keys() != ckpt.tensors.keys():
        missing = sorted(own.keys() ^ ckpt.tensors.keys())
        raise CheckpointError(f"checkpoint tensor names differ from the model: {missing[:5]}")
    for name, t in own.items():
        arr = ckpt.tensors[name]
        if arr.shape != t.shape:
            raise CheckpointError(f"tensor {name}: shape {arr.shape}, model has {t.shape}")
        t.values[...] = arr


def restore_model(ckpt: Checkpoint, expected_variant: str | None = None) -> Summarizer:
    """Build a model of the recorded configuration and load its tensors."""
    if expected_variant is not None and expected_variant != ckpt.variant:
        raise CheckpointError(
            f"checkpoint variant {ckpt.variant!r} does not match requested {expected_variant!r}"
        )
    model = Summarizer(ckpt.config, np.random.default_rng(0))
    load_parameters(model, ckpt)
    return model
