"""CLI interface for the nsesum summarizer."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from nsesum.core.batching import (
    EncodedExample,
    EncodeStats,
    ShapedText,
    encode_records,
    is_sentence_end,
    shape_mode_for,
    shape_record,
    surface_projection,
)
from nsesum.core.checkpoint import Checkpoint, load_checkpoint, restore_model
from nsesum.core.config import (
    RunConfig,
    format_run_config,
    load_run_config,
    resolve_path,
    save_run_config,
    with_overrides,
)
from nsesum.core.embeddings import load_embeddings
from nsesum.core.model import MODEL_VARIANTS, Summarizer
from nsesum.core.parser import TERMINAL_PUNCT, read_corpus, read_token_lines
from nsesum.core.rouge import VARIANTS, RougeScore, Variant, corpus_rouge, score_all
from nsesum.core.synthetic import copy_task, first_word_task
from nsesum.core.training import decode_corpus, evaluate_rouge, reward_tokens, train_loop
from nsesum.core.vocab import PAD, RESERVED, Vocabulary, build_vocab
from nsesum.core.writer import format_report, format_shaped, write_corpus, write_lines

console = Console()
log = logging.getLogger("nsesum")


@contextmanager
def _rejecting() -> Iterator[None]:
    """Turn core errors into a one-line ``Error: ...`` and exit code 1."""
    try:
        yield
    except (ValueError, OSError) as e:
        raise click.ClickException(str(e)) from e


def _run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Flags shared by every pipeline command."""
    options = [
        click.option("--config", "-c", "config_path", type=click.Path(dir_okay=False),
                     default=None, help="Run configuration (key=value lines)"),
        click.option("--seed", type=int, default=None, help="Random seed"),
        click.option("--variant", type=click.Choice(MODEL_VARIANTS), default=None,
                     help="Model variant"),
        click.option("--mode", type=click.Choice(["plain", "factored"]), default=None,
                     help="Corpus mode"),
        click.option("--vocab", "vocab_path", type=click.Path(dir_okay=False), default=None,
                     help="Vocabulary file (one token per line)"),
        click.option("--embeddings", "embeddings_path", type=click.Path(dir_okay=False),
                     default=None, help="GloVe-format embeddings"),
        click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False),
                     default=None, help="Checkpoint file"),
        click.option("--out", "out", type=click.Path(), default=None, help="Output path"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load_run(
    config_path: str | None,
    seed: int | None,
    variant: str | None,
    mode: str | None,
    vocab_path: str | None,
    embeddings_path: str | None,
    checkpoint_path: str | None,
    **extra: Any,
) -> RunConfig:
    with _rejecting():
        return load_run_config(
            config_path,
            seed=seed,
            variant=variant,
            mode=mode,
            vocab_path=vocab_path,
            embeddings_path=embeddings_path,
            checkpoint_path=checkpoint_path,
            **extra,
        )


def _shape_mode(config: RunConfig, variant: str | None = None) -> str:
    return shape_mode_for(config.mode, (variant or config.variant) == "hier")


def _open_checkpoint(
    config: RunConfig, explicit_variant: str | None
) -> tuple[Checkpoint, Summarizer]:
    with _rejecting():
        ckpt = load_checkpoint(resolve_path(config, "checkpoint_path"))
        return ckpt, restore_model(ckpt, explicit_variant)


def _stats_table(title: str, stats: EncodeStats, sentences: bool) -> Table:
    table = Table(title=title)
    table.add_column("Statistic", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("examples", str(stats.examples))
    table.add_row("skipped", str(stats.skipped))
    table.add_row("article tokens", str(stats.article_tokens))
    if sentences:
        table.add_row("sentences", str(stats.sentences))
    table.add_row("truncated articles", str(stats.truncated_articles))
    table.add_row("truncated summaries", str(stats.truncated_summaries))
    return table


def _rouge_table(title: str, scores: dict[Variant, RougeScore]) -> Table:
    table = Table(title=title)
    table.add_column("Metric", style="cyan")
    for label in ("Precision", "Recall", "F1"):
        table.add_column(label, justify="right")
    for v in VARIANTS:
        s = scores[v]
        table.add_row(v.upper(), f"{s.precision:.4f}", f"{s.recall:.4f}", f"{s.f1:.4f}")
    return table


def _grid_text(shaped: ShapedText, factored: bool) -> str:
    """Live grid rows as text, each closed by terminal punctuation."""
    pad = RESERVED[PAD]
    width = 3 if factored else 1
    tokens: list[str] = []
    for row in shaped.grid or []:
        live = [t for t in row if t != pad]
        if not live:
            continue
        surface = live[-width]
        if not (surface in TERMINAL_PUNCT if factored else is_sentence_end(surface)):
            live += ["."] * width
        tokens += live
    return format_shaped(tokens, factored)


@click.group()
@click.version_option(package_name="nsesum")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def cli(verbose: bool) -> None:
    """nsesum: neural semantic encoder summarization."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@cli.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@_run_options
def preprocess(corpus: str, out: str | None, **run: Any) -> None:
    """Validate, tokenize and truncate a raw corpus into a normalized one."""
    config = _load_run(**run)
    mode = _shape_mode(config)
    limits = config.shape_limits()
    stats = EncodeStats()
    pairs = []
    with _rejecting():
        records = read_corpus(corpus)
    for record in records:
        try:
            article, summary = shape_record(record.article, record.summary, mode, limits)
        except ValueError as e:
            log.warning("line %d skipped: %s", record.line_no, e)
            stats.skipped += 1
            continue
        stats.examples += 1
        stats.article_tokens += len(article.tokens)
        stats.sentences += article.live_sentences
        stats.truncated_articles += article.truncated
        stats.truncated_summaries += summary is not None and summary.truncated
        article_text = (
            _grid_text(article, config.factored)
            if article.grid is not None
            else format_shaped(article.tokens, config.factored)
        )
        summary_text = format_shaped(summary.tokens, config.factored) if summary else None
        pairs.append((article_text, summary_text))

    out_path = Path(out) if out else Path(corpus).with_suffix(".shaped.txt")
    with _rejecting():
        write_corpus(pairs, out_path)
    console.print(_stats_table(f"Preprocessed ({mode})", stats, "hier" in mode))
    console.print(f"[green]Wrote[/green] {out_path}")


@cli.command("build-vocab")
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--size", type=int, default=None, help="Vocabulary size (default: config)")
@_run_options
def build_vocab_cmd(corpus: str, size: int | None, out: str | None, **run: Any) -> None:
    """Build a frequency-ranked vocabulary from a corpus."""
    config = _load_run(**run)
    mode = _shape_mode(config)
    limits = config.shape_limits()
    tokens: list[str] = []
    with _rejecting():
        for record in read_corpus(corpus):
            try:
                article, summary = shape_record(record.article, record.summary, mode, limits)
            except ValueError as e:
                log.warning("line %d skipped: %s", record.line_no, e)
                continue
            tokens += article.tokens
            if summary is not None:
                tokens += summary.tokens
        vocab = build_vocab(tokens, size or config.vocab_size)
        path = vocab.save(resolve_path(config, "vocab_path", out))
    console.print(f"[green]Wrote[/green] {path} ({vocab.size} tokens)")


@cli.command()
@click.option("--train", "train_path", type=click.Path(dir_okay=False), default=None,
              help="Training corpus (default: config train_path)")
@click.option("--dev", "dev_path", type=click.Path(dir_okay=False), default=None,
              help="Development corpus (default: config dev_path)")
@click.option("--train-mode", type=click.Choice(["mle", "rl"]), default=None,
              help="Maximum likelihood or self-critical training")
@click.option("--init-checkpoint", type=click.Path(dir_okay=False), default=None,
              help="Start from this checkpoint (required for rl)")
@click.option("--epochs", type=int, default=None, help="Number of epochs")
@click.option("--lr", type=float, default=None,
              help="Learning rate for the selected train mode (e.g. 1e-5 to lower the rl rate)")
@click.option("--metrics", "metrics_path", type=click.Path(dir_okay=False), default=None,
              help="Metrics log (default: <out>/metrics.tsv or next to the checkpoint)")
@_run_options
def train(
    train_mode: str | None,
    lr: float | None,
    out: str | None,
    **run: Any,
) -> None:
    """Train a summarizer and keep the best checkpoint."""
    config = _load_run(train_mode=train_mode, out_dir=out, **run)
    if lr is not None:
        key = "lr_rl" if config.train_mode == "rl" else "lr_mle"
        config = with_overrides(config, **{key: lr})
    rng = np.random.default_rng(config.seed)

    with _rejecting():
        checkpoint_path = resolve_path(config, "checkpoint_path")
        if config.train_mode == "rl" and config.init_checkpoint is None:
            raise ValueError("rl training needs --init-checkpoint (a supervised model)")
        if config.init_checkpoint is not None:
            init = load_checkpoint(config.init_checkpoint)
            recorded = init.meta.get("factored")
            if recorded is not None:
                ckpt_mode = "factored" if recorded else "plain"
                if run.get("mode") is not None and run["mode"] != ckpt_mode:
                    raise ValueError(
                        f"{config.init_checkpoint} was trained on {ckpt_mode} text, "
                        f"not --mode {run['mode']}"
                    )
                config = with_overrides(config, mode=ckpt_mode)
            vocab = init.vocab
            model = Summarizer(init.config, rng)
        else:
            vocab = Vocabulary.load(resolve_path(config, "vocab_path"))
            embedding = None
            if config.embeddings_path is not None:
                embedding = load_embeddings(config.embeddings_path, vocab, rng, config.dim)
            model = Summarizer(config.model_config(vocab.size), rng, embedding)

        train_cfg = config.train_config()
        mode = _shape_mode(config, model.config.variant)
        limits = config.shape_limits()
        records = read_corpus(resolve_path(config, "train_path"))
        examples, stats = encode_records(
            ((r.article, r.summary) for r in records), vocab, mode, limits
        )
        dev: list[EncodedExample] = []
        if config.dev_path is not None:
            dev, _ = encode_records(
                ((r.article, r.summary) for r in read_corpus(config.dev_path)), vocab, mode, limits
            )
        if config.metrics_path is not None:
            metrics_path = Path(config.metrics_path)
        elif config.out_dir is not None:
            metrics_path = Path(config.out_dir) / "metrics.tsv"
        else:
            metrics_path = checkpoint_path.with_suffix(".metrics.tsv")

        console.print(
            f"Training [bold]{model.config.variant}[/bold] ({config.mode}, {config.train_mode}) "
            f"on {stats.examples} examples, learning rate "
            f"{train_cfg.learning_rate(config.train_mode)}"
        )
        result = train_loop(
            model, examples, dev, vocab, train_cfg, config.train_mode,
            checkpoint_path=checkpoint_path,
            metrics_path=metrics_path,
            init_checkpoint=config.init_checkpoint,
        )

    table = Table(title="Training")
    table.add_column("Epoch", justify="right", style="cyan")
    table.add_column("Train loss", justify="right")
    table.add_column("Dev loss", justify="right")
    table.add_column("Dev ROUGE-L F1", justify="right")
    for m in result.history:
        table.add_row(
            str(m.epoch),
            f"{m.train_loss:.4f}",
            f"{m.dev_loss:.4f}" if m.dev_loss is not None else "[dim]-[/dim]",
            f"{m.dev_rouge['rouge-l'].f1:.4f}" if m.dev_rouge else "[dim]-[/dim]",
        )
    console.print(table)
    console.print(f"[green]Best epoch[/green] {result.best_epoch}: {result.checkpoint_path}")
    console.print(f"[green]Metrics[/green] {metrics_path}")


@cli.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", type=int, default=1, help="Parallel decoding threads")
@_run_options
def evaluate(corpus: str, workers: int, out: str | None, **run: Any) -> None:
    """Greedy-decode a test corpus and report ROUGE F1."""
    config = _load_run(**run)
    ckpt, model = _open_checkpoint(config, run.get("variant"))
    factored = bool(ckpt.meta.get("factored", config.factored))
    config = with_overrides(config, mode="factored" if factored else "plain")
    with _rejecting():
        examples, stats = encode_records(
            ((r.article, r.summary) for r in read_corpus(corpus)),
            ckpt.vocab,
            _shape_mode(config, ckpt.variant),
            config.shape_limits(),
        )
        if not examples:
            raise ValueError(f"no usable examples in {corpus}")
        results = decode_corpus(
            model, examples, ckpt.vocab, config.train_config().decode_limit, workers
        )
        average = evaluate_rouge(results, examples, factored)
        out_dir = Path(out or config.out_dir or ".")
        write_lines((" ".join(r.tokens) for r in results), out_dir / "hypotheses.txt")
        per_example = [
            score_all(reward_tokens(ex.reference, factored), reward_tokens(r.tokens, factored))
            for r, ex in zip(results, examples, strict=True)
        ]
        write_lines(format_report(per_example, average), out_dir / "rouge.tsv")
    console.print(_rouge_table(f"ROUGE F1 on {stats.examples} examples", average))
    console.print(f"[green]Wrote[/green] {out_dir / 'hypotheses.txt'}, {out_dir / 'rouge.tsv'}")


@cli.command()
@click.argument("articles", type=click.Path(exists=True, dir_okay=False))
@_run_options
def summarize(articles: str, out: str | None, **run: Any) -> None:
    """Print a greedy summary for every article."""
    config = _load_run(**run)
    ckpt, model = _open_checkpoint(config, run.get("variant"))
    factored = bool(ckpt.meta.get("factored", config.factored))
    config = with_overrides(config, mode="factored" if factored else "plain")
    with _rejecting():
        examples, _ = encode_records(
            ((r.article, None) for r in read_corpus(articles)),
            ckpt.vocab,
            _shape_mode(config, ckpt.variant),
            config.shape_limits(),
            require_summary=False,
        )
        results = decode_corpus(model, examples, ckpt.vocab, config.train_config().decode_limit)
    lines = []
    for r in results:
        if factored:
            console.print(format_shaped(r.tokens, factored=True), markup=False)
            line = " ".join(surface_projection(r.tokens))
        else:
            line = " ".join(r.tokens)
        console.print(line, markup=False, highlight=False)
        lines.append(line)
    if out:
        with _rejecting():
            write_lines(lines, out)


@cli.command()
@click.argument("references", type=click.Path(exists=True, dir_okay=False))
@click.argument("hypotheses", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the per-example report here")
def rouge(references: str, hypotheses: str, out: str | None) -> None:
    """Score two parallel files of summaries (one per line)."""
    with _rejecting():
        refs, hyps = read_token_lines(references), read_token_lines(hypotheses)
        if len(refs) != len(hyps):
            raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
        average = corpus_rouge(list(zip(refs, hyps, strict=True)))
        if out:
            per_example = [score_all(r, h) for r, h in zip(refs, hyps, strict=True)]
            write_lines(format_report(per_example, average), out)
    console.print(_rouge_table(f"ROUGE over {len(refs)} pairs", average))


@cli.command()
@click.argument("task", type=click.Choice(["copy", "first-word"]))
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--pairs", type=int, default=50, help="Number of article/summary pairs")
@click.option("--vocab-size", type=int, default=30, help="Vocabulary size of the task")
@click.option("--length", type=int, default=8, help="Copy task sequence length")
@click.option("--oov-rate", type=float, default=0.0, help="Copy task out-of-vocabulary rate")
@click.option("--sentences", type=int, default=6, help="First-word task sentences")
@click.option("--words", type=int, default=6, help="First-word task words per sentence")
@click.option("--seed", type=int, default=1, help="Random seed")
def synth(
    task: str,
    output: str,
    pairs: int,
    vocab_size: int,
    length: int,
    oov_rate: float,
    sentences: int,
    words: int,
    seed: int,
) -> None:
    """Write a synthetic toy corpus."""
    rng = np.random.default_rng(seed)
    with _rejecting():
        if task == "copy":
            data = copy_task(rng, pairs, vocab_size, length, oov_rate)
        else:
            data = first_word_task(rng, pairs, sentences, words, vocab_size)
        write_corpus(((p.article, p.summary) for p in data), output)
    console.print(f"[green]Wrote[/green] {len(data)} {task} pairs to {output}")


@cli.command("show-config")
@_run_options
def show_config(out: str | None, **run: Any) -> None:
    """Show the resolved run configuration."""
    config = _load_run(**run)
    table = Table(title="Run configuration")
    table.add_column("Key", style="cyan")
    table.add_column("Value")
    for line in format_run_config(config):
        key, _, value = line.partition("=")
        table.add_row(key, value)
    console.print(table)
    if out:
        with _rejecting():
            path = save_run_config(config, out)
        console.print(f"[green]Wrote[/green] {path}")


__all__ = ["cli"]

