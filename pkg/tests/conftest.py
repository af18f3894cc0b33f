"""Shared test fixtures."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pytest

from nsesum.core import tensor as T
from nsesum.core.batching import EncodedExample, encode_example, tokenize_and_truncate
from nsesum.core.layers import AdditiveAttention, LstmCell
from nsesum.core.model import ModelConfig, Summarizer
from nsesum.core.synthetic import copy_task
from nsesum.core.tensor import Tensor
from nsesum.core.vocab import RESERVED, START, ExtendedVocabMap, Vocabulary, build_vocab

# Trimmed from a factored CNN/DM article, including its cut-off last word.
FACTORED_ARTICLE = (
    "The | the | DT build-up | build-up | NN for | for | IN the | the | DT "
    "blockbuster | blockbust | NN fight | fight | NN between | between | IN "
    "Floyd | floyd | NNP Mayweather | mayweath | NNP and | and | CC "
    "Manny | manni | NNP Pacquiao | pacquiao | NNP . | . | . "
    "The | the | DT session | session | NN will | will | MD be | be | VB "
    "streamed | stream | VBN live | live | JJ # | # | # from | from | IN "
    "12am | 12am | . | ."
)
FACTORED_SUMMARY = (
    "floyd | floyd | nnp mayweather | mayweath | nnp holds | hold | vbz "
    "an | an | dt open | open | jj media | media | nns workout | workout | nn . "
    "the | the | dt american | american | jj takes | take | vbz on | on | in "
    "manny | manni | nnp pacquiao | pacquiao | nnp ."
)

# Complete factored articles, reference summaries and model outputs from CNN/DM,
# one ``name<TAB>text`` per line.
FACTORED_SAMPLES: dict[str, str] = dict(
    line.split("\t", 1)
    for line in (Path(__file__).parent / "fixtures" / "factored_samples.tsv")
    .read_text(encoding="utf-8")
    .splitlines()
    if line
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def small_vocab() -> Vocabulary:
    """Reserved ids plus a..f (V = 10)."""
    return Vocabulary([*RESERVED, "a", "b", "c", "d", "e", "f"])


def make_example(
    targets: Sequence[int],
    vocab_size: int,
    source: Sequence[int] = (4, 5),
    reference: Sequence[str] = (),
) -> EncodedExample:
    """Hand-built flat example; ``targets`` should already end with STOP."""
    source_ids = np.asarray(source, dtype=np.int64)
    target_ids = np.asarray(targets, dtype=np.int64)
    return EncodedExample(
        source_ids=source_ids,
        article_ids=source_ids.copy(),
        target_ids=target_ids,
        decoder_inputs=np.concatenate([[START], target_ids[:-1]]).astype(np.int64),
        oov=ExtendedVocabMap(vocab_size),
        reference=list(reference),
    )


# Plain numpy versions of the cell equations, for checking the autodiff graph.


def ref_sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def ref_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    e = np.where(mask, np.exp(scores - scores[mask].max()), 0.0)
    return e / e.sum()


def ref_lstm(
    cell: LstmCell, x: np.ndarray, h: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    xh = np.concatenate([x, h])

    def gate(name: str) -> np.ndarray:
        return xh @ getattr(cell, f"W_{name}").values + getattr(cell, f"b_{name}").values

    c = ref_sigmoid(gate("forget")) * c + ref_sigmoid(gate("input")) * np.tanh(gate("candidate"))
    return ref_sigmoid(gate("output")) * np.tanh(c), c


def ref_additive(
    attn: AdditiveAttention, memory: np.ndarray, key: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    hidden = np.tanh(memory @ attn.W.values + key @ attn.U.values + attn.b_attn.values)
    return ref_softmax(hidden @ attn.v.values, mask)


def ref_update(memory: np.ndarray, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    return (1.0 - z)[:, None] * memory + z[:, None] * h


class ScriptedModel:
    """Stands in for a summarizer: returns a fixed distribution per decoder step.

    The last distribution repeats once the script runs out.
    """

    def __init__(self, distributions: Sequence[Sequence[float]]) -> None:
        self.distributions = [np.asarray(d, dtype=np.float64) for d in distributions]

    def _at(self, step: int) -> Tensor:
        return Tensor(self.distributions[min(step, len(self.distributions) - 1)])

    def encode(self, example: EncodedExample) -> int:
        return 0

    def decode_step(self, state: int, prev_id: int) -> tuple[Tensor, int]:
        return self._at(state), state + 1

    def teacher_forced(self, example: EncodedExample) -> list[Tensor]:
        return [self._at(t) for t in range(len(example.target_ids))]


class LogitModel:
    """One trainable logit row per decoder step, softmax-normalized."""

    def __init__(self, steps: int, vocab_size: int, rng: np.random.Generator) -> None:
        self.logits = Tensor(rng.normal(size=(steps, vocab_size)), requires_grad=True)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [("logits", self.logits)]

    def encode(self, example: EncodedExample) -> int:
        return 0

    def decode_step(self, state: int, prev_id: int) -> tuple[Tensor, int]:
        step = min(state, self.logits.shape[0] - 1)
        return T.masked_softmax(T.row(self.logits, step)), state + 1

    def teacher_forced(self, example: EncodedExample) -> list[Tensor]:
        return [T.masked_softmax(T.row(self.logits, t)) for t in range(len(example.target_ids))]


@pytest.fixture
def copy_corpus() -> list[tuple[str, str]]:
    pairs = copy_task(np.random.default_rng(3), n_pairs=6, vocab_size=12, length=4)
    return [(p.article, p.summary) for p in pairs]


@pytest.fixture
def copy_vocab(copy_corpus: list[tuple[str, str]]) -> Vocabulary:
    return build_vocab((tok for a, s in copy_corpus for tok in (a + " " + s).split()), 12)


@pytest.fixture
def copy_examples(
    copy_corpus: list[tuple[str, str]], copy_vocab: Vocabulary
) -> list[EncodedExample]:
    return [
        encode_example(
            tokenize_and_truncate(a, "flat"),
            tokenize_and_truncate(s, "flat", "summary"),
            copy_vocab,
        )
        for a, s in copy_corpus
    ]


@pytest.fixture
def tiny_model() -> Callable[..., Summarizer]:
    """Factory for small summarizers: ``tiny_model(variant, vocab_size, dim=4, seed=0)``."""

    def make(variant: str, vocab_size: int, dim: int = 4, seed: int = 0, **kw) -> Summarizer:
        return Summarizer(ModelConfig(variant, vocab_size, dim, **kw), np.random.default_rng(seed))

    return make


@pytest.fixture
def corpus_file(tmp_path: Path, copy_corpus: list[tuple[str, str]]) -> Path:
    path = tmp_path / "corpus.txt"
    path.write_text("".join(f"{a}\t{s}\n" for a, s in copy_corpus), encoding="utf-8")
    return path
