"""Tests for CLI commands."""

from __future__ import annotations

from pathlib import Path

import pytest
from click.testing import CliRunner

from nsesum.cli.main import cli
from nsesum.core.checkpoint import load_checkpoint
from nsesum.core.vocab import Vocabulary

from .conftest import FACTORED_ARTICLE, FACTORED_SUMMARY

SMALL_RUN = "dim=4\nepochs=1\nbatch_size=4\nmax_decode_len=5\nvocab_size=12\nvariant=vanilla\n"


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def workspace(tmp_path: Path, runner: CliRunner) -> Path:
    """A synthetic copy corpus, a vocabulary and a small run config."""
    (tmp_path / "run.cfg").write_text(SMALL_RUN, encoding="utf-8")
    result = runner.invoke(cli, [
        "synth", "copy", str(tmp_path / "corpus.txt"),
        "--pairs", "8", "--vocab-size", "12", "--length", "4", "--seed", "3",
    ])
    assert result.exit_code == 0, result.output
    result = runner.invoke(cli, [
        "build-vocab", str(tmp_path / "corpus.txt"),
        "-c", str(tmp_path / "run.cfg"), "--out", str(tmp_path / "vocab.txt"),
    ])
    assert result.exit_code == 0, result.output
    return tmp_path


@pytest.fixture
def trained(workspace: Path, runner: CliRunner) -> Path:
    result = runner.invoke(cli, [
        "train", "-c", str(workspace / "run.cfg"),
        "--train", str(workspace / "corpus.txt"),
        "--vocab", str(workspace / "vocab.txt"),
        "--checkpoint", str(workspace / "model.ckpt"),
        "--out", str(workspace / "run"),
    ])
    assert result.exit_code == 0, result.output
    return workspace


class TestSynth:
    def test_first_word_corpus(self, tmp_path: Path, runner: CliRunner) -> None:
        out = tmp_path / "fw.txt"
        result = runner.invoke(cli, [
            "synth", "first-word", str(out), "--pairs", "3", "--sentences", "2", "--words", "3",
        ])
        assert result.exit_code == 0, result.output
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        article, summary = lines[0].split("\t")
        assert article.count(" .") == 2
        assert len(summary.split()) == 2

    def test_invalid_oov_rate(self, tmp_path: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, ["synth", "copy", str(tmp_path / "c.txt"), "--oov-rate", "2"])
        assert result.exit_code == 1
        assert "oov_rate" in result.output


class TestBuildVocab:
    def test_reserved_first(self, workspace: Path) -> None:
        vocab = Vocabulary.load(workspace / "vocab.txt")
        assert vocab.tokens[:4] == ["[PAD]", "[UNK]", "[START]", "[STOP]"]
        assert vocab.size <= 12

    def test_needs_an_output(self, workspace: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, ["build-vocab", str(workspace / "corpus.txt")])
        assert result.exit_code == 1
        assert "no vocab path" in result.output


class TestPreprocess:
    def test_flat_truncation(self, tmp_path: Path, runner: CliRunner) -> None:
        corpus = tmp_path / "raw.txt"
        corpus.write_text(" ".join(["Word"] * 450) + "\tShort Summary\n", encoding="utf-8")
        result = runner.invoke(cli, ["preprocess", str(corpus)])
        assert result.exit_code == 0, result.output
        article, summary = (tmp_path / "raw.shaped.txt").read_text(encoding="utf-8").split("\t")
        assert len(article.split()) == 400
        assert summary == "short summary\n"

    def test_factored_sample(self, tmp_path: Path, runner: CliRunner) -> None:
        corpus = tmp_path / "factored.txt"
        corpus.write_text(f"{FACTORED_ARTICLE}\t{FACTORED_SUMMARY}\n", encoding="utf-8")
        out = tmp_path / "shaped.txt"
        result = runner.invoke(cli, ["preprocess", str(corpus), "--mode", "factored",
                                     "--out", str(out)])
        assert result.exit_code == 0, result.output
        article, summary = out.read_text(encoding="utf-8").rstrip("\n").split("\t")
        assert article.startswith("the | the | DT build-up | build-up | NN")
        assert article.endswith("from | from | IN 12am | 12am | .")
        # Bare full stops come back as full triples.
        assert summary == FACTORED_SUMMARY.replace(" .", " . | . | .")
        assert "Preprocessed" in result.output

    def test_hier_rows_closed(self, tmp_path: Path, runner: CliRunner) -> None:
        corpus = tmp_path / "raw.txt"
        corpus.write_text("a b c . d e\tx\n", encoding="utf-8")
        cfg = tmp_path / "hier.cfg"
        cfg.write_text("max_sentences=2\nmax_sentence_words=2\n", encoding="utf-8")
        out = tmp_path / "shaped.txt"
        result = runner.invoke(cli, ["preprocess", str(corpus), "-c", str(cfg),
                                     "--variant", "hier", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.read_text(encoding="utf-8") == "a b . d e .\tx\n"

    def test_bad_records_skipped(self, tmp_path: Path, runner: CliRunner) -> None:
        corpus = tmp_path / "raw.txt"
        corpus.write_text("fine | fine | JJ\tok | ok | JJ\nbroken | broken\tx | x | NN\n",
                          encoding="utf-8")
        out = tmp_path / "shaped.txt"
        result = runner.invoke(cli, ["preprocess", str(corpus), "--mode", "factored",
                                     "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert len(out.read_text(encoding="utf-8").splitlines()) == 1

    def test_empty_corpus_rejected(self, tmp_path: Path, runner: CliRunner) -> None:
        corpus = tmp_path / "empty.txt"
        corpus.write_text("", encoding="utf-8")
        result = runner.invoke(cli, ["preprocess", str(corpus)])
        assert result.exit_code == 1
        assert "empty" in result.output


class TestTrain:
    def test_writes_checkpoint_and_metrics(self, trained: Path) -> None:
        ckpt = load_checkpoint(trained / "model.ckpt")
        assert ckpt.variant == "vanilla"
        assert ckpt.config.dim == 4
        assert ckpt.mode == "mle"
        lines = (trained / "run" / "metrics.tsv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("epoch\tsplit\tloss")
        assert lines[1].startswith("1\ttrain\t")

    def test_rl_without_init_rejected(self, workspace: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, [
            "train", "-c", str(workspace / "run.cfg"), "--train-mode", "rl",
            "--train", str(workspace / "corpus.txt"),
            "--vocab", str(workspace / "vocab.txt"),
            "--checkpoint", str(workspace / "rl.ckpt"),
        ])
        assert result.exit_code == 1
        assert "--init-checkpoint" in result.output
        assert not (workspace / "rl.ckpt").exists()

    def test_rl_from_supervised_checkpoint(self, trained: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, [
            "train", "-c", str(trained / "run.cfg"), "--train-mode", "rl", "--lr", "1e-5",
            "--train", str(trained / "corpus.txt"),
            "--init-checkpoint", str(trained / "model.ckpt"),
            "--checkpoint", str(trained / "rl.ckpt"),
        ])
        assert result.exit_code == 0, result.output
        assert "1e-05" in result.output
        assert load_checkpoint(trained / "rl.ckpt").mode == "rl"
        assert (trained / "rl.metrics.tsv").exists()

    def test_resume_rejects_other_text_mode(self, trained: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, [
            "train", "-c", str(trained / "run.cfg"), "--mode", "factored",
            "--train", str(trained / "corpus.txt"),
            "--init-checkpoint", str(trained / "model.ckpt"),
            "--checkpoint", str(trained / "more.ckpt"),
        ])
        assert result.exit_code == 1
        assert "plain text" in result.output
        assert not (trained / "more.ckpt").exists()

    def test_resume_takes_mode_from_checkpoint(self, trained: Path, runner: CliRunner) -> None:
        cfg = trained / "factored.cfg"
        cfg.write_text(SMALL_RUN + "mode=factored\n", encoding="utf-8")
        result = runner.invoke(cli, [
            "train", "-c", str(cfg),
            "--train", str(trained / "corpus.txt"),
            "--init-checkpoint", str(trained / "model.ckpt"),
            "--checkpoint", str(trained / "more.ckpt"),
        ])
        assert result.exit_code == 0, result.output
        assert "(plain, mle)" in result.output
        assert load_checkpoint(trained / "more.ckpt").meta["factored"] is False

    def test_missing_vocab(self, workspace: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, [
            "train", "-c", str(workspace / "run.cfg"),
            "--train", str(workspace / "corpus.txt"),
            "--checkpoint", str(workspace / "m.ckpt"),
        ])
        assert result.exit_code == 1
        assert "no vocab path" in result.output


class TestEvaluate:
    def test_writes_hypotheses_and_report(self, trained: Path, runner: CliRunner) -> None:
        out = trained / "eval"
        result = runner.invoke(cli, [
            "evaluate", str(trained / "corpus.txt"),
            "--checkpoint", str(trained / "model.ckpt"), "--out", str(out), "--workers", "2",
        ])
        assert result.exit_code == 0, result.output
        assert "ROUGE-L" in result.output
        assert len((out / "hypotheses.txt").read_text(encoding="utf-8").splitlines()) == 8
        report = (out / "rouge.tsv").read_text(encoding="utf-8").splitlines()
        assert report[0] == "example\tvariant\tprecision\trecall\tf1"
        assert report[-1].startswith("average\trouge-l\t")

    def test_variant_mismatch(self, trained: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, [
            "evaluate", str(trained / "corpus.txt"),
            "--checkpoint", str(trained / "model.ckpt"), "--variant", "hier",
        ])
        assert result.exit_code == 1
        assert "does not match" in result.output

    def test_not_a_checkpoint(self, trained: Path, runner: CliRunner) -> None:
        result = runner.invoke(cli, [
            "evaluate", str(trained / "corpus.txt"), "--checkpoint", str(trained / "vocab.txt"),
        ])
        assert result.exit_code == 1
        assert "bad magic" in result.output


class TestSummarize:
    def test_one_line_per_article(self, trained: Path, runner: CliRunner) -> None:
        articles = trained / "articles.txt"
        articles.write_text("w00 w01 w02\nw03 zebra\n", encoding="utf-8")
        out = trained / "summaries.txt"
        result = runner.invoke(cli, [
            "summarize", str(articles),
            "--checkpoint", str(trained / "model.ckpt"), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert len(out.read_text(encoding="utf-8").splitlines()) == 2


class TestRouge:
    def test_identical_files(self, tmp_path: Path, runner: CliRunner) -> None:
        refs = tmp_path / "refs.txt"
        refs.write_text("police killed the gunman\nthe cat sat\n", encoding="utf-8")
        report = tmp_path / "report.tsv"
        result = runner.invoke(cli, ["rouge", str(refs), str(refs), "--out", str(report)])
        assert result.exit_code == 0, result.output
        assert "1.0000" in result.output
        assert "average\trouge-1\t1.000000\t1.000000\t1.000000" in report.read_text(
            encoding="utf-8"
        )

    def test_line_count_mismatch(self, tmp_path: Path, runner: CliRunner) -> None:
        refs, hyps = tmp_path / "refs.txt", tmp_path / "hyps.txt"
        refs.write_text("a\nb\n", encoding="utf-8")
        hyps.write_text("a\n", encoding="utf-8")
        result = runner.invoke(cli, ["rouge", str(refs), str(hyps)])
        assert result.exit_code == 1
        assert "2 references but 1 hypotheses" in result.output


class TestShowConfig:
    def test_defaults(self, runner: CliRunner) -> None:
        result = runner.invoke(cli, ["show-config"])
        assert result.exit_code == 0, result.output
        assert "lr_mle" in result.output
        assert "0.001" in result.output

    def test_flags_override_file_and_save(self, tmp_path: Path, runner: CliRunner) -> None:
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed=4\nlr_mle=0.01\n", encoding="utf-8")
        out = tmp_path / "resolved.cfg"
        result = runner.invoke(cli, ["show-config", "-c", str(cfg), "--seed", "8",
                                     "--out", str(out)])
        assert result.exit_code == 0, result.output
        saved = out.read_text(encoding="utf-8").splitlines()
        assert "seed=8" in saved
        assert "lr_mle=0.01" in saved

    def test_unknown_key(self, tmp_path: Path, runner: CliRunner) -> None:
        cfg = tmp_path / "run.cfg"
        cfg.write_text("learning_rate=0.1\n", encoding="utf-8")
        result = runner.invoke(cli, ["show-config", "-c", str(cfg)])
        assert result.exit_code == 1
        assert "unknown key" in result.output
