"""Column-format labeled corpora and paired noisy/clean text.

Input parsing is liberal (any whitespace run separates columns, extra
middle columns are ignored); output is canonical (tab separator, one
blank line after every sentence, trailing newline).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .tagscheme import Label, Scheme, is_scheme_legal, normalize_labels

log = logging.getLogger(__name__)

DOCSTART = "-DOCSTART-"


class CorpusFormatError(ValueError):
    """Malformed corpus or pair file; message carries the location."""


@dataclass(frozen=True)
class LabeledSentence:
    tokens: tuple[str, ...]
    labels: tuple[Label, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{len(self.tokens)} tokens vs {len(self.labels)} labels"
            )
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")
        for tok in self.tokens:
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"bad token {tok!r}: empty or contains whitespace")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[LabeledSentence, ...]
    scheme: Scheme
    label_inventory: frozenset[str] = field(default=frozenset())

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        classes = {
            lab.entity_class
            for sent in self.sentences
            for lab in sent.labels
            if lab.entity_class
        }
        object.__setattr__(self, "label_inventory", frozenset(classes))

    def __len__(self) -> int:
        return len(self.sentences)

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def characters(self) -> set[str]:
        return {c for sent in self.sentences for tok in sent.tokens for c in tok}


@dataclass(frozen=True)
class SentencePair:
    """Position-aligned noisy/clean token sequences."""

    noisy: tuple[str, ...]
    clean: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "noisy", tuple(self.noisy))
        object.__setattr__(self, "clean", tuple(self.clean))
        if len(self.noisy) != len(self.clean):
            raise ValueError(
                f"{len(self.noisy)} noisy vs {len(self.clean)} clean tokens"
            )


def _finish_sentence(tokens, labels, scheme, start_line) -> LabeledSentence:
    if not is_scheme_legal(labels, scheme) and not (
        scheme is Scheme.BIOES and is_scheme_legal(labels, Scheme.BIO)
    ):
        log.warning(
            "repairing scheme-illegal label sequence in sentence starting at line %d",
            start_line,
        )
    return LabeledSentence(tuple(tokens), tuple(normalize_labels(labels, scheme)))


def parse_conll(text: str | Iterable[str], scheme: Scheme = Scheme.BIOES) -> Corpus:
    """Parse column-format text: one ``SURFACE ... LABEL`` line per token.

    Blank lines separate sentences; ``-DOCSTART-`` lines are dropped.  BIO
    label sequences are converted when ``scheme`` is BIOES.
    """
    lines = text.splitlines() if isinstance(text, str) else [l.rstrip("\n") for l in text]
    sentences: list[LabeledSentence] = []
    tokens: list[str] = []
    labels: list[Label] = []
    sentence_start = 1

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            if tokens:
                sentences.append(_finish_sentence(tokens, labels, scheme, sentence_start))
                tokens, labels = [], []
            continue
        if line.startswith(DOCSTART):
            continue
        if not tokens:
            sentence_start = lineno
        parts = line.split()
        if len(parts) < 2:
            raise CorpusFormatError(
                f"line {lineno}: expected at least 2 columns, got {len(parts)}"
            )
        try:
            label = Label.parse(parts[-1], scheme)
        except ValueError as exc:
            raise CorpusFormatError(f"line {lineno}: {exc}") from exc
        tokens.append(parts[0])
        labels.append(label)

    if tokens:
        sentences.append(_finish_sentence(tokens, labels, scheme, sentence_start))
    if not sentences:
        raise CorpusFormatError("empty corpus: no labeled sentences found")
    return Corpus(tuple(sentences), scheme)


def write_conll(corpus: Corpus) -> str:
    """Canonical column format; inverse of :func:`parse_conll`."""
    chunks = []
    for sent in corpus.sentences:
        for tok, lab in zip(sent.tokens, sent.labels):
            chunks.append(f"{tok}\t{lab}\n")
        chunks.append("\n")
    return "".join(chunks)


def parse_pairs(text: str | Iterable[str]) -> list[SentencePair]:
    """Parse alternating noisy/clean sentence lines into token-aligned pairs.

    Blank lines are separators only; content lines are paired in order and
    an odd number of them is an error.
    """
    lines = text.splitlines() if isinstance(text, str) else [l.rstrip("\n") for l in text]
    content = [line for line in lines if line.strip()]
    if len(content) % 2:
        raise CorpusFormatError(
            f"odd number of content lines ({len(content)}); noisy/clean must alternate"
        )
    pairs = []
    for idx in range(0, len(content), 2):
        noisy = tuple(content[idx].split())
        clean = tuple(content[idx + 1].split())
        if len(noisy) != len(clean):
            raise CorpusFormatError(
                f"pair {idx // 2 + 1}: {len(noisy)} noisy vs {len(clean)} clean tokens"
            )
        pairs.append(SentencePair(noisy, clean))
    return pairs


def write_pairs(pairs: Sequence[SentencePair]) -> str:
    chunks = []
    for pair in pairs:
        chunks.append(" ".join(pair.noisy) + "\n")
        chunks.append(" ".join(pair.clean) + "\n\n")
    return "".join(chunks)
