"""Run configuration: a flat ``key=value`` file over built-in defaults.

Values are typed the YAML way (``0.001``, ``true``, ``16``, ``null``). Resolution
order for every key: command-line flag, then config file, then default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, get_type_hints

import yaml

from .batching import ShapeLimits
from .model import MODEL_VARIANTS, ModelConfig
from .rouge import VARIANTS
from .training import TrainConfig

MODES = ("plain", "factored")
TRAIN_MODES = ("mle", "rl")


class ConfigError(ValueError):
    """Unknown key or badly typed value in a run configuration."""


@dataclass(frozen=True)
class RunConfig:
    variant: str = "improved"
    mode: str = "plain"
    train_mode: str = "mle"
    seed: int = 1
    dim: int = 300
    vocab_size: int = 50000
    max_article_tokens: int = 400
    max_summary_tokens: int = 100
    factored_article_tokens: int = 800
    factored_summary_tokens: int = 300
    max_sentences: int = 20
    max_sentence_words: int = 20
    causal_document: bool = True
    lr_mle: float = 0.001
    lr_rl: float = 5e-5
    alpha: float = 1e-4
    batch_size: int = 16
    max_decode_len: int | None = None
    grad_clip_norm: float = 2.0
    epochs: int = 10
    reward: str = "rouge-l"
    mle_mix: float = 0.0
    train_path: str | None = None
    dev_path: str | None = None
    vocab_path: str | None = None
    embeddings_path: str | None = None
    checkpoint_path: str | None = None
    init_checkpoint: str | None = None
    out_dir: str | None = None
    metrics_path: str | None = None

    def __post_init__(self) -> None:
        for key, allowed in (
            ("variant", MODEL_VARIANTS),
            ("mode", MODES),
            ("train_mode", TRAIN_MODES),
            ("reward", VARIANTS),
        ):
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key}={getattr(self, key)!r}; expected one of {allowed}")

    @property
    def factored(self) -> bool:
        return self.mode == "factored"

    def model_config(self, vocab_size: int | None = None) -> ModelConfig:
        return ModelConfig(
            self.variant,
            vocab_size if vocab_size is not None else self.vocab_size,
            self.dim,
            self.max_sentences,
            self.max_sentence_words,
            self.causal_document,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr_mle=self.lr_mle,
            lr_rl=self.lr_rl,
            alpha=self.alpha,
            batch_size=self.batch_size,
            max_decode_len=self.max_decode_len,
            grad_clip_norm=self.grad_clip_norm,
            seed=self.seed,
            epochs=self.epochs,
            reward=self.reward,
            mle_mix=self.mle_mix,
            factored=self.factored,
        )

    def shape_limits(self) -> ShapeLimits:
        return ShapeLimits(
            self.max_article_tokens,
            self.max_summary_tokens,
            self.factored_article_tokens,
            self.factored_summary_tokens,
            self.max_sentences,
            self.max_sentence_words,
        )


def _allowed_types(key: str) -> tuple[type, ...]:
    hint = get_type_hints(RunConfig)[key]
    args = getattr(hint, "__args__", None)
    types = tuple(args) if args else (hint,)
    if float in types:
        types = (*types, int)
    return types


def _coerce(key: str, raw: str) -> Any:
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"{key}: cannot read value {raw!r}") from e
    types = _allowed_types(key)
    if str in types and value is not None and not isinstance(value, str):
        value = raw.strip()
    if float in types and isinstance(value, str):
        # YAML 1.1 reads exponent forms without a dot ("5e-05") as strings.
        try:
            value = float(value)
        except ValueError as e:
            raise ConfigError(f"{key}: expected float, got {raw!r}") from e
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{key}: expected {types[0].__name__}, got {raw!r}")
    if not isinstance(value, tuple(t for t in types if t is not type(None))) and not (
        value is None and type(None) in types
    ):
        raise ConfigError(f"{key}: expected {types[0].__name__}, got {raw!r}")
    if float in types and isinstance(value, int):
        value = float(value)
    return value


def parse_run_config(text: str, source: str = "<config>") -> dict[str, Any]:
    """Key/value overrides from config text (comments and blank lines ignored)."""
    known = {f.name for f in fields(RunConfig)}
    values: dict[str, Any] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{n}: expected key=value, got {line!r}")
        if key not in known:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_run_config(path: str | Path | None = None, **overrides: Any) -> RunConfig:
    """Defaults, then the file at ``path``, then non-None ``overrides``.

    Raises:
        FileNotFoundError: If ``path`` is given but missing.
        ConfigError: On unknown keys or values of the wrong type.
    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        values.update(parse_run_config(path.read_text(encoding="utf-8"), str(path)))
    known = {f.name for f in fields(RunConfig)}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def format_run_config(config: RunConfig) -> list[str]:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        lines.append(f"{f.name}={'null' if value is None else value}")
    return lines


def save_run_config(config: RunConfig, path: str | Path) -> Path:
    """Every key in declaration order; reloads to an equal config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{line}\n" for line in format_run_config(config)), encoding="utf-8")
    return path


def resolve_path(config: RunConfig, key: str, explicit: str | Path | None = None) -> Path:
    """Resolve a path setting from an explicit value or the config.

    Raises:
        ConfigError: If neither provides one.
    """
    value = explicit if explicit is not None else getattr(config, key)
    if value is None:
        raise ConfigError(f"no {key.removesuffix('_path')} path given (flag or config {key})")
    return Path(value)


def with_overrides(config: RunConfig, **changes: Any) -> RunConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
