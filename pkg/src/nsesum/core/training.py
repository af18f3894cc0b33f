"""Maximum-likelihood and self-critical training, Adam, and the decoders.

The models trained here are anything that satisfies
:class:`nsesum.core.model.SequenceModel` and exposes ``named_parameters()``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import tensor as T
from .batching import EncodedExample, make_batches, prefetch, surface_projection
from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_parameters,
    model_checkpoint,
    save_checkpoint,
)
from .model import SequenceModel, Summarizer
from .rouge import VARIANTS, RougeScore, Variant, corpus_rouge, score
from .tensor import GraphError, NonFiniteError, ShapeError, Tensor
from .vocab import START, STOP, Vocabulary
from .writer import METRICS_HEADER, format_metrics_line, write_lines

log = logging.getLogger(__name__)

TrainMode = Literal["mle", "rl"]
PROB_FLOOR = 1e-12


class TrainingError(ValueError):
    """Training cannot start or had to stop."""


@dataclass(frozen=True)
class TrainConfig:
    lr_mle: float = 0.001
    lr_rl: float = 5e-5
    alpha: float = 1e-4
    batch_size: int = 16
    max_decode_len: int | None = None
    grad_clip_norm: float = 2.0
    seed: int = 1
    epochs: int = 10
    reward: Variant = "rouge-l"
    mle_mix: float = 0.0
    factored: bool = False

    def __post_init__(self) -> None:
        if self.lr_mle <= 0 or self.lr_rl <= 0:
            raise ValueError(f"learning rates must be positive, got {self.lr_mle}, {self.lr_rl}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.mle_mix < 0:
            raise ValueError(f"mle_mix must be non-negative, got {self.mle_mix}")
        if self.batch_size <= 0 or self.epochs < 0 or self.grad_clip_norm <= 0:
            raise ValueError(
                f"invalid batch_size={self.batch_size}, epochs={self.epochs} "
                f"or grad_clip_norm={self.grad_clip_norm}"
            )
        if self.reward not in VARIANTS:
            raise ValueError(f"unknown reward {self.reward!r}; expected one of {VARIANTS}")

    @property
    def decode_limit(self) -> int:
        if self.max_decode_len is not None:
            return self.max_decode_len
        return 300 if self.factored else 100

    def learning_rate(self, mode: TrainMode) -> float:
        return self.lr_rl if mode == "rl" else self.lr_mle


# --- losses ---


@dataclass
class LossStats:
    positions: int = 0
    floored: int = 0


def nll(dist: Tensor, target: int, stats: LossStats | None = None) -> Tensor:
    """``-log p(target)`` with the probability floored at 1e-12."""
    if stats is not None:
        stats.positions += 1
    if target >= dist.size:
        if stats is not None:
            stats.floored += 1
        return Tensor(-math.log(PROB_FLOOR))
    if stats is not None and dist.values[target] <= PROB_FLOOR:
        stats.floored += 1
    return -T.log(T.gather(dist, [target]), floor=PROB_FLOOR)


def mle_loss(
    model: SequenceModel, batch: Sequence[EncodedExample], stats: LossStats | None = None
) -> Tensor:
    """Mean teacher-forced negative log-likelihood over every target position."""
    terms = []
    for example in batch:
        dists = model.teacher_forced(example)
        terms.extend(nll(d, int(t), stats) for d, t in zip(dists, example.target_ids, strict=True))
    if not terms:
        raise ValueError("mle_loss needs at least one target position")
    return T.scale(T.sum(T.concat(terms)), 1.0 / len(terms))


def entropy(dist: Tensor) -> Tensor:
    """``H = -Σ p log p`` of one distribution."""
    return -T.sum(dist * T.log(dist, floor=PROB_FLOOR))


# --- optimizer ---


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    skipped: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> AdamState:
        return cls(
            [np.zeros_like(p.values) for p in params], [np.zeros_like(p.values) for p in params]
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> int:
    """One bias-corrected Adam update in place; returns the number of skipped tensors.

    A tensor whose gradient holds a NaN or infinity keeps its values and moments.
    """
    if not len(params) == len(grads) == len(state.m) == len(state.v):
        raise ShapeError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moments"
        )
    state.t += 1
    skipped = 0
    c1, c2 = 1.0 - beta1**state.t, 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v, strict=True):
        if m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"adam_step: moment shape {m.shape} for parameter {p.shape}")
        if g is None:
            g = np.zeros_like(p.values)
        if not np.isfinite(g).all():
            skipped += 1
            continue
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.values -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    if skipped:
        state.skipped += skipped
        log.warning("adam step %d skipped %d tensors with non-finite gradients", state.t, skipped)
    return skipped


class Adam:
    """Adam over named parameters, with a checkpointable state."""

    def __init__(self, named_params: Sequence[tuple[str, Tensor]], lr: float) -> None:
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.lr = lr
        self.state = AdamState.zeros_like(self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> int:
        return adam_step(self.params, [p.grad for p in self.params], self.state, self.lr)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {f"adam.m/{n}": m.copy() for n, m in zip(self.names, self.state.m, strict=True)}
        out.update({f"adam.v/{n}": v.copy() for n, v in zip(self.names, self.state.v, strict=True)})
        return out

    def load_state_dict(self, tensors: dict[str, np.ndarray], t: int) -> None:
        for i, name in enumerate(self.names):
            m, v = tensors.get(f"adam.m/{name}"), tensors.get(f"adam.v/{name}")
            if m is None or v is None:
                raise TrainingError(f"optimizer state has no moments for {name}")
            self.state.m[i][...] = m
            self.state.v[i][...] = v
        self.state.t = t


def clip_gradients(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    grads = [p.grad for p in params if p.grad is not None]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


# --- decoding ---


@dataclass
class DecodeResult:
    """One decoded summary.

    ``ids`` are extended ids without the final STOP; ``log_probs`` and
    ``entropies`` have one entry per decoder step, including a STOP step.
    """

    ids: list[int] = field(default_factory=list)
    tokens: list[str] = field(default_factory=list)
    log_probs: list[Tensor] = field(default_factory=list)
    entropies: list[Tensor] = field(default_factory=list)
    finished: bool = False

    @property
    def log_prob_values(self) -> list[float]:
        return [lp.item() for lp in self.log_probs]

    @property
    def entropy_values(self) -> list[float]:
        return [h.item() for h in self.entropies]


def _decode(
    model: SequenceModel,
    example: EncodedExample,
    vocab: Vocabulary,
    max_len: int,
    choose: Callable[[np.ndarray], int],
) -> DecodeResult:
    result = DecodeResult()
    state = model.encode(example)
    prev = START
    for _ in range(max_len):
        dist, state = model.decode_step(state, prev)
        token_id = choose(dist.values)
        result.log_probs.append(T.log(T.gather(dist, [token_id]), floor=PROB_FLOOR))
        result.entropies.append(entropy(dist))
        if token_id == STOP:
            result.finished = True
            break
        result.ids.append(token_id)
        result.tokens.append(example.oov.token_of(token_id, vocab))
        prev = token_id
    return result


def greedy_decode(
    model: SequenceModel, example: EncodedExample, vocab: Vocabulary, max_len: int = 100
) -> DecodeResult:
    """Most probable token at every step; ``np.argmax`` breaks ties toward the lowest id."""
    with T.no_grad():
        return _decode(model, example, vocab, max_len, lambda p: int(np.argmax(p)))


def sample_decode(
    model: SequenceModel,
    example: EncodedExample,
    vocab: Vocabulary,
    rng: np.random.Generator,
    max_len: int = 100,
) -> DecodeResult:
    """Ancestral sampling at temperature 1; the graph is kept for policy gradients."""
    return _decode(
        model, example, vocab, max_len, lambda p: int(rng.choice(p.size, p=p / p.sum()))
    )


def reward_tokens(tokens: Sequence[str], factored: bool) -> list[str]:
    """Tokens ROUGE is computed on: the surface projection of a factored stream."""
    return surface_projection(tokens) if factored else list(tokens)


def self_critic_loss(
    sampled: DecodeResult,
    greedy: DecodeResult,
    reference: Sequence[str],
    alpha: float,
    reward: Variant = "rouge-l",
    factored: bool = False,
) -> Tensor:
    """``(r(sample) - r(greedy)) · Σ -log p(sample) - α · Σ H``.

    Rewards enter as constants; gradients flow through the sampled log-probs and
    entropies only.
    """
    ref = reward_tokens(reference, factored)
    advantage = (
        score(ref, reward_tokens(sampled.tokens, factored), reward).f1
        - score(ref, reward_tokens(greedy.tokens, factored), reward).f1
    )
    zero = Tensor(np.zeros(1))
    neg_log_p = -T.sum(T.concat(sampled.log_probs)) if sampled.log_probs else zero
    total_entropy = T.sum(T.concat(sampled.entropies)) if sampled.entropies else zero
    return T.scale(neg_log_p, advantage) - T.scale(total_entropy, alpha)


def rl_loss(
    model: SequenceModel,
    batch: Sequence[EncodedExample],
    vocab: Vocabulary,
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tensor:
    """Mean self-critical loss over a batch, plus ``mle_mix`` × the MLE loss."""
    terms = []
    for example in batch:
        greedy = greedy_decode(model, example, vocab, config.decode_limit)
        sampled = sample_decode(model, example, vocab, rng, config.decode_limit)
        terms.append(
            self_critic_loss(
                sampled, greedy, example.reference, config.alpha, config.reward, config.factored
            )
        )
    loss = T.scale(T.sum(T.concat(terms)), 1.0 / len(terms))
    if config.mle_mix > 0:
        loss = loss + T.scale(mle_loss(model, batch), config.mle_mix)
    return loss


def decode_corpus(
    model: SequenceModel,
    examples: Sequence[EncodedExample],
    vocab: Vocabulary,
    max_len: int,
    workers: int = 1,
) -> list[DecodeResult]:
    """Greedy-decode every example against frozen parameters, in input order."""
    if workers <= 1:
        return [greedy_decode(model, ex, vocab, max_len) for ex in examples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ex: greedy_decode(model, ex, vocab, max_len), examples))


def evaluate_rouge(
    results: Sequence[DecodeResult], examples: Sequence[EncodedExample], factored: bool = False
) -> dict[Variant, RougeScore]:
    return corpus_rouge(
        [
            (reward_tokens(ex.reference, factored), reward_tokens(r.tokens, factored))
            for r, ex in zip(results, examples, strict=True)
        ]
    )


# --- training loop ---


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    dev_loss: float | None = None
    dev_rouge: dict[Variant, RougeScore] | None = None


@dataclass
class TrainResult:
    history: list[EpochMetrics]
    best_epoch: int | None
    checkpoint_path: Path | None


def _dev_loss(model: SequenceModel, dev: Sequence[EncodedExample]) -> float:
    with T.no_grad():
        return mle_loss(model, dev).item()


def _is_better(mode: TrainMode, metrics: EpochMetrics, best: float | None) -> tuple[bool, float]:
    if metrics.dev_loss is None:
        value = metrics.train_loss
        return best is None or value < best, value
    if mode == "rl":
        value = -metrics.dev_rouge["rouge-l"].f1
    else:
        value = metrics.dev_loss
    return best is None or value < best, value


def train_loop(
    model: Summarizer,
    train: Sequence[EncodedExample],
    dev: Sequence[EncodedExample],
    vocab: Vocabulary,
    config: TrainConfig,
    mode: TrainMode = "mle",
    *,
    checkpoint_path: str | Path | None = None,
    metrics_path: str | Path | None = None,
    init_checkpoint: str | Path | None = None,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
) -> TrainResult:
    """Epochs of batch → loss → backward → clip → Adam.

    Writes one train line and (with a dev set) one dev line per epoch to the
    metrics log, and saves the model whenever the dev criterion improves: dev
    loss in ``mle`` mode, dev ROUGE-L in ``rl`` mode.

    Raises:
        TrainingError: If ``rl`` mode has no initial checkpoint, or a loss turns
            non-finite (the best checkpoint written so far is kept).
    """
    if mode not in ("mle", "rl"):
        raise TrainingError(f"unknown training mode {mode!r}")
    if not train:
        raise TrainingError("training corpus is empty")
    init: Checkpoint | None = None
    if init_checkpoint is not None:
        if not Path(init_checkpoint).exists():
            raise TrainingError(f"initial checkpoint {init_checkpoint} does not exist")
        init = load_checkpoint(init_checkpoint)
        load_parameters(model, init)
    elif mode == "rl":
        raise TrainingError("rl training starts from a supervised checkpoint; none was given")

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(list(model.named_parameters()), config.learning_rate(mode))
    if init is not None and init.mode == mode and init.optimizer:
        optimizer.load_state_dict(init.optimizer, int(init.meta.get("adam_step", 0)))

    metrics_lines = [METRICS_HEADER]
    history: list[EpochMetrics] = []
    best: float | None = None
    best_epoch: int | None = None
    saved: Path | None = None

    def flush_metrics() -> None:
        if metrics_path is not None:
            write_lines(metrics_lines, metrics_path)

    flush_metrics()
    for epoch in range(1, config.epochs + 1):
        batch_losses = []
        for batch in prefetch(make_batches(train, config.batch_size, rng)):
            optimizer.zero_grad()
            try:
                if mode == "rl":
                    loss = rl_loss(model, batch, vocab, config, rng)
                else:
                    loss = mle_loss(model, batch)
                if not math.isfinite(loss.item()):
                    raise NonFiniteError(f"loss is {loss.item()}")
                loss.backward()
            except NonFiniteError as e:
                raise TrainingError(
                    f"epoch {epoch}: non-finite loss ({e}); "
                    f"last good checkpoint: {saved if saved else 'none written'}"
                ) from e
            except GraphError as e:
                raise TrainingError(
                    f"epoch {epoch}: loss has no gradient path to the parameters ({e})"
                ) from e
            clip_gradients(optimizer.params, config.grad_clip_norm)
            optimizer.step()
            batch_losses.append(loss.item())

        metrics = EpochMetrics(epoch, float(np.mean(batch_losses)))
        metrics_lines.append(format_metrics_line(epoch, "train", metrics.train_loss, None))
        if dev:
            metrics.dev_loss = _dev_loss(model, dev)
            results = decode_corpus(model, dev, vocab, config.decode_limit)
            metrics.dev_rouge = evaluate_rouge(results, dev, config.factored)
            metrics_lines.append(
                format_metrics_line(epoch, "dev", metrics.dev_loss, metrics.dev_rouge)
            )
        history.append(metrics)
        flush_metrics()
        log.info(
            "epoch %d: train loss %.4f%s", epoch, metrics.train_loss,
            f", dev loss {metrics.dev_loss:.4f}" if metrics.dev_loss is not None else "",
        )
        if on_epoch is not None:
            on_epoch(metrics)

        improved, value = _is_better(mode, metrics, best)
        if improved:
            best, best_epoch = value, epoch
            if checkpoint_path is not None:
                saved = save_checkpoint(
                    model_checkpoint(
                        model, vocab, mode, optimizer.state_dict(),
                        adam_step=optimizer.state.t, epoch=epoch, seed=config.seed,
                        factored=config.factored,
                    ),
                    checkpoint_path,
                )
    return TrainResult(history, best_epoch, saved)
