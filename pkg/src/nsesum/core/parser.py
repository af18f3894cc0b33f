"""Readers for factored text, corpora and token-per-line files.

Factored text augments every surface word with its lemma and PoS tag,
separated by bars: ``Mayweather | mayweath | NNP``. In a whitespace token
stream a factored word therefore spans five tokens. Sentence-final punctuation
may also appear bare (no bars), as it does in factored summaries.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

SEPARATOR = "|"
TERMINAL_PUNCT = frozenset({".", "!", "?"})

_SPACED_SEP = f" {SEPARATOR} "
_WHITESPACE_RE = re.compile(r"\s+")


class FactoredTokenError(ValueError):
    """A token does not have surface, lemma and PoS fields."""


@dataclass(frozen=True)
class FactoredToken:
    """One word with its lemma and PoS tag."""

    surface: str
    lemma: str
    pos: str
    bare: bool = False  # sentence-final punctuation written without bars

    @property
    def stream(self) -> tuple[str, str, str]:
        """The three stream tokens this word contributes to a model input."""
        return (self.surface, self.lemma, self.pos)


@dataclass(frozen=True)
class CorpusRecord:
    line_no: int
    article: str
    summary: str | None


def parse_factored_token(raw: str) -> FactoredToken:
    """Parse ``surface|lemma|pos``, tolerating spaces around the bars.

    When more than two bars appear, only the two rightmost separate fields, so a
    field that is itself a bar survives.

    Raises:
        FactoredTokenError: If the token does not yield three non-empty fields.
    """
    text = raw.strip()
    parts = text.rsplit(_SPACED_SEP, 2) if _SPACED_SEP in text else text.rsplit(SEPARATOR, 2)
    fields = [p.strip() for p in parts]
    if len(fields) != 3 or not all(fields):
        raise FactoredTokenError(f"malformed factored token {raw!r}")
    return FactoredToken(*fields)


def parse_factored_stream(text: str) -> list[FactoredToken]:
    """Parse a whole line of factored words.

    Raises:
        FactoredTokenError: On the first word that cannot be read; the message
            quotes the offending tokens.
    """
    toks = [t for t in _WHITESPACE_RE.split(text.strip()) if t]
    words: list[FactoredToken] = []
    i = 0
    while i < len(toks):
        if i + 4 < len(toks) and toks[i + 1] == SEPARATOR and toks[i + 3] == SEPARATOR:
            words.append(FactoredToken(toks[i], toks[i + 2], toks[i + 4]))
            i += 5
        elif toks[i] in TERMINAL_PUNCT:
            words.append(FactoredToken(toks[i], toks[i], toks[i], bare=True))
            i += 1
        elif toks[i] != SEPARATOR and toks[i].count(SEPARATOR) >= 2:
            words.append(parse_factored_token(toks[i]))
            i += 1
        elif words and toks[i] == SEPARATOR and len(toks) - i <= 2:
            # Tail of a word cut off upstream ("... 12am | 12am | . | .").
            log.debug("dropping dangling factored tail %r", " ".join(toks[i:]))
            break
        else:
            context = " ".join(toks[i:i + 5])
            raise FactoredTokenError(f"malformed factored token at word {len(words)}: {context!r}")
    return words


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    """Read ``article<TAB>summary`` lines; the summary field is optional.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        ValueError: If the file holds no examples.
    """
    path = Path(path)
    records = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        article, _, summary = line.partition("\t")
        records.append(CorpusRecord(n, article.strip(), summary.strip() or None))
    if not records:
        raise ValueError(f"corpus {path} is empty")
    return records


def read_token_lines(path: str | Path) -> list[list[str]]:
    """One space-separated summary per line, lowercased."""
    text = Path(path).read_text(encoding="utf-8")
    return [line.lower().split() for line in text.splitlines()]
