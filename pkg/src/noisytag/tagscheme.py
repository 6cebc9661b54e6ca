"""Tagging schemes (BIO / BIOES), per-token labels, and span decoding.

The span decoder is a single lenient automaton shared by both schemes:
an entity opens at any B, S, or illegal I (an I with no compatible open
entity) and closes at E, S, O, a class change, or the end of the
sentence.  Running decode followed by encode therefore both repairs
scheme-illegal sequences and converts between schemes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence


class Scheme(Enum):
    BIO = "bio"
    BIOES = "bioes"

    @property
    def tags(self) -> frozenset[str]:
        return _SCHEME_TAGS[self]


_SCHEME_TAGS = {
    Scheme.BIO: frozenset("BIO"),
    Scheme.BIOES: frozenset("BIOES"),
}

_LABEL_RE = re.compile(r"([A-Z])(?:-([A-Z][A-Z0-9_]*))?")


@dataclass(frozen=True)
class Label:
    """One scheme tag plus entity class; O carries no class."""

    tag: str
    entity_class: str = ""

    def __post_init__(self):
        if self.tag == "O":
            if self.entity_class:
                raise ValueError("O label must not carry an entity class")
        elif self.tag in "BIES":
            if not self.entity_class:
                raise ValueError(f"{self.tag} label requires an entity class")
        else:
            raise ValueError(f"unknown scheme tag {self.tag!r}")

    def __str__(self) -> str:
        return self.tag if self.tag == "O" else f"{self.tag}-{self.entity_class}"

    @classmethod
    def parse(cls, text: str, scheme: Scheme | None = None) -> "Label":
        """Parse ``TAG`` or ``TAG-CLASS``; optionally restrict to a scheme."""
        m = _LABEL_RE.fullmatch(text)
        if m is None:
            raise ValueError(f"label {text!r} does not match TAG(-CLASS)?")
        tag, entity_class = m.group(1), m.group(2) or ""
        label = cls(tag, entity_class)
        if scheme is not None and tag not in scheme.tags:
            raise ValueError(f"tag {tag!r} is not part of scheme {scheme.value}")
        return label


OUTSIDE = Label("O")


@dataclass(frozen=True)
class Span:
    """Inclusive token span with an entity class."""

    start: int
    end: int
    entity_class: str

    def __post_init__(self):
        if not (0 <= self.start <= self.end):
            raise ValueError(f"bad span bounds ({self.start}, {self.end})")


def decode_spans(labels: Sequence[Label], scheme: Scheme = Scheme.BIOES) -> list[Span]:
    """Extract maximal entity spans, repairing illegal sequences leniently.

    The ``scheme`` argument documents the intended inventory; the automaton
    itself accepts any mix of B/I/O/E/S tags.
    """
    spans: list[Span] = []
    open_class: str | None = None
    open_start = 0

    def flush(end: int):
        nonlocal open_class
        if open_class is not None:
            spans.append(Span(open_start, end, open_class))
            open_class = None

    for i, label in enumerate(labels):
        tag, cls = label.tag, label.entity_class
        if tag == "O":
            flush(i - 1)
        elif tag == "S":
            flush(i - 1)
            spans.append(Span(i, i, cls))
        elif tag == "B":
            flush(i - 1)
            open_class, open_start = cls, i
        elif tag == "I":
            if open_class != cls:
                flush(i - 1)
                open_class, open_start = cls, i
        elif tag == "E":
            if open_class == cls:
                flush(i)
            else:
                flush(i - 1)
                spans.append(Span(i, i, cls))
    flush(len(labels) - 1)
    return spans


def encode_spans(spans: Iterable[Span], length: int, scheme: Scheme) -> list[Label]:
    """Render non-overlapping spans as a label sequence in the given scheme."""
    labels = [OUTSIDE] * length
    for span in sorted(spans, key=lambda s: s.start):
        if span.end >= length:
            raise ValueError(f"span {span} exceeds sentence length {length}")
        if any(lab is not OUTSIDE for lab in labels[span.start : span.end + 1]):
            raise ValueError(f"span {span} overlaps a previous span")
        cls = span.entity_class
        if span.start == span.end:
            labels[span.start] = Label("S" if scheme is Scheme.BIOES else "B", cls)
        else:
            labels[span.start] = Label("B", cls)
            for i in range(span.start + 1, span.end + 1):
                labels[i] = Label("I", cls)
            if scheme is Scheme.BIOES:
                labels[span.end] = Label("E", cls)
    return labels


def is_scheme_legal(labels: Sequence[Label], scheme: Scheme) -> bool:
    """Strict legality: tags in the scheme inventory, transitions well formed."""
    open_class: str | None = None
    for label in labels:
        tag, cls = label.tag, label.entity_class
        if tag not in scheme.tags:
            return False
        if open_class is None:
            if tag in ("I", "E"):
                return False
        else:
            if scheme is Scheme.BIOES:
                if tag not in ("I", "E") or cls != open_class:
                    return False
            else:
                if tag == "I" and cls != open_class:
                    return False
        if tag == "B":
            open_class = cls
        elif tag == "I":
            open_class = cls if scheme is Scheme.BIO else open_class
        elif tag == "E" or tag == "S" or tag == "O":
            open_class = None
    if scheme is Scheme.BIOES and open_class is not None:
        return False  # dangling B/I without E
    return True


def normalize_labels(labels: Sequence[Label], scheme: Scheme) -> list[Label]:
    """Repair and re-encode a label sequence in the target scheme."""
    return encode_spans(decode_spans(labels), len(labels), scheme)


def label_inventory_labels(classes: Iterable[str], scheme: Scheme) -> list[Label]:
    """The full label set for a class inventory, sorted by string form."""
    labels = [OUTSIDE]
    for cls in sorted(set(classes)):
        for tag in sorted(scheme.tags - {"O"}):
            labels.append(Label(tag, cls))
    return sorted(labels, key=str)
