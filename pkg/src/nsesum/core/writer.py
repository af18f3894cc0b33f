"""Writers: factored text, corpora, hypotheses, ROUGE reports and metrics logs.

Every writer produces the same bytes for the same input, so runs can be
compared file-for-file.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from pathlib import Path

from .parser import SEPARATOR, FactoredToken
from .rouge import VARIANTS, RougeScore, Variant

METRICS_HEADER = "epoch\tsplit\tloss\trouge1\trouge2\trougeL"
REPORT_HEADER = "example\tvariant\tprecision\trecall\tf1"


def serialize_factored_token(token: FactoredToken) -> str:
    if token.bare:
        return token.surface
    return f" {SEPARATOR} ".join(token.stream)


def serialize_factored_stream(tokens: Iterable[FactoredToken]) -> str:
    return " ".join(serialize_factored_token(t) for t in tokens)


def write_lines(lines: Iterable[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return path


def write_corpus(pairs: Iterable[tuple[str, str | None]], path: str | Path) -> Path:
    """``article<TAB>summary`` per line (article only when there is no summary)."""
    return write_lines(
        (article if summary is None else f"{article}\t{summary}" for article, summary in pairs),
        path,
    )


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def format_report(
    per_example: Sequence[dict[Variant, RougeScore]], average: dict[Variant, RougeScore]
) -> list[str]:
    """Tab-separated rows: one per example and variant, then the corpus averages."""
    lines = [REPORT_HEADER]
    for n, scores in enumerate(per_example, 1):
        for v in VARIANTS:
            s = scores[v]
            lines.append(f"{n}\t{v}\t{_fmt(s.precision)}\t{_fmt(s.recall)}\t{_fmt(s.f1)}")
    for v in VARIANTS:
        s = average[v]
        lines.append(f"average\t{v}\t{_fmt(s.precision)}\t{_fmt(s.recall)}\t{_fmt(s.f1)}")
    return lines


def format_metrics_line(
    epoch: int, split: str, loss: float, rouge: dict[Variant, RougeScore] | None
) -> str:
    if rouge is None:
        r1 = r2 = rl = "-"
    else:
        r1, r2, rl = (_fmt(rouge[v].f1) for v in VARIANTS)
    return f"{epoch}\t{split}\t{_fmt(loss)}\t{r1}\t{r2}\t{rl}"


def format_shaped(tokens: Sequence[str], factored: bool) -> str:
    """Shaped stream tokens as corpus text (factored streams regain their bars)."""
    if not factored:
        return " ".join(tokens)
    triples = [tokens[i:i + 3] for i in range(0, len(tokens) - len(tokens) % 3, 3)]
    return serialize_factored_stream(FactoredToken(*t) for t in triples)
