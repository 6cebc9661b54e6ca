"""Seeded generator of small synthetic NER corpora.

Supports the desk-scale experiments and the test suite: real benchmark
corpora are license-bound, so calibration and directional comparisons
run on generated data instead.  Entity surface forms carry a
class-specific suffix (people end in -son/-ova/-us, places in
-burg/-ville/-land, and so on), so both token identity and character
shape are informative, and optional context triggers precede mentions.
All sampling flows from one numpy generator, making a corpus a pure
function of its spec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, LabeledSentence
from .tagscheme import Label, Scheme, Span, encode_spans

CONSONANTS = "bcdfghklmnprstvz"
VOWELS = "aeiou"

# All suffixes end in a consonant: filler words are built from
# consonant-vowel syllables and therefore end in a vowel, so entity
# tokens are identifiable from characters alone (no filler collides
# with a class suffix).
CLASS_SUFFIXES = {
    "PER": ("son", "sen", "ov", "ir", "us"),
    "LOC": ("burg", "grad", "land", "ton", "stan"),
    "ORG": ("corp", "tek", "soft", "labs", "works"),
    "MISC": ("fest", "prix", "ium", "oid", "ex"),
}

CLASS_TRIGGERS = {
    "PER": ("mr", "mrs", "dr"),
    "LOC": ("in", "near", "from"),
    "ORG": ("at", "with", "by"),
    "MISC": ("the", "during", "about"),
}

#: Entity width distribution: mostly single-token mentions, so the
#: entity class of a token is decidable locally (per-token posteriors
#: stay informative even though decoding runs through the CRF).
WIDTH_CHOICES = (1, 2, 3)
WIDTH_PROBS = (0.8, 0.15, 0.05)

TRIGGER_PROB = 0.5


@dataclass(frozen=True)
class SyntheticSpec:
    n_train: int = 2000
    n_dev: int = 300
    n_test: int = 500
    stems_per_class: int = 120
    n_fillers: int = 430
    min_len: int = 5
    max_len: int = 12
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise ValueError("split sizes must be positive")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.stems_per_class < 4 or self.n_fillers < 10:
            raise ValueError("lexicon too small")


def _syllable(rng: np.random.Generator) -> str:
    return CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]


def _fresh_words(rng, count, taken, suffixes=("",), syllables=2):
    words = []
    while len(words) < count:
        base = "".join(_syllable(rng) for _ in range(syllables))
        word = base + suffixes[rng.integers(len(suffixes))]
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _zipf_weights(n: int, exponent: float = 1.0) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=np.float64)
    w = ranks ** -exponent
    return w / w.sum()


@dataclass(frozen=True)
class Lexicon:
    """Word lists plus Zipfian draw weights.

    Skewed frequencies matter: tail words occur once or twice, so even
    clean training must classify some tokens from their characters
    alone, as with natural vocabulary distributions.
    """

    stems: dict[str, tuple[str, ...]]  # class -> entity stem tokens
    fillers: tuple[str, ...]
    stem_weights: np.ndarray
    filler_weights: np.ndarray

    @classmethod
    def build(cls, spec: SyntheticSpec, rng: np.random.Generator) -> "Lexicon":
        taken: set[str] = {w for ws in CLASS_TRIGGERS.values() for w in ws}
        stems = {
            cls_name: tuple(
                _fresh_words(rng, spec.stems_per_class, taken, CLASS_SUFFIXES[cls_name])
            )
            for cls_name in sorted(CLASS_SUFFIXES)
        }
        fillers = tuple(
            _fresh_words(rng, spec.n_fillers, taken, syllables=2)
            + _fresh_words(rng, spec.n_fillers // 4, taken, syllables=3)
        )
        return cls(
            stems,
            fillers,
            _zipf_weights(spec.stems_per_class),
            _zipf_weights(len(fillers)),
        )

    def draw_filler(self, rng: np.random.Generator) -> str:
        return self.fillers[rng.choice(len(self.fillers), p=self.filler_weights)]

    def draw_stem(self, cls_name: str, rng: np.random.Generator) -> str:
        stems = self.stems[cls_name]
        return stems[rng.choice(len(stems), p=self.stem_weights)]


def _make_sentence(lex: Lexicon, spec: SyntheticSpec, rng: np.random.Generator) -> LabeledSentence:
    target_len = int(rng.integers(spec.min_len, spec.max_len + 1))
    classes = sorted(lex.stems)
    tokens: list[str] = []
    spans: list[Span] = []
    n_entities = min(1 + int(rng.random() < 0.5), target_len)
    entity_slots = sorted(rng.choice(target_len, size=n_entities, replace=False).tolist())

    slot_cursor = 0
    while len(tokens) < target_len:
        if slot_cursor < len(entity_slots) and len(tokens) >= entity_slots[slot_cursor]:
            slot_cursor += 1
            cls_name = classes[rng.integers(len(classes))]
            if rng.random() < TRIGGER_PROB:
                triggers = CLASS_TRIGGERS[cls_name]
                tokens.append(triggers[rng.integers(len(triggers))])
            width = int(rng.choice(WIDTH_CHOICES, p=WIDTH_PROBS))
            start = len(tokens)
            for _ in range(width):
                tokens.append(lex.draw_stem(cls_name, rng))
            spans.append(Span(start, start + width - 1, cls_name))
        else:
            tokens.append(lex.draw_filler(rng))
    labels = encode_spans(spans, len(tokens), Scheme.BIOES)
    return LabeledSentence(tuple(tokens), tuple(labels))


def _make_split(lex, spec, rng, count) -> Corpus:
    return Corpus(
        tuple(_make_sentence(lex, spec, rng) for _ in range(count)), scheme=Scheme.BIOES
    )


def generate(spec: SyntheticSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Return (train, dev, test) corpora, a pure function of the spec."""
    rng = np.random.default_rng(spec.seed)
    lex = Lexicon.build(spec, rng)
    train = _make_split(lex, spec, rng, spec.n_train)
    dev = _make_split(lex, spec, rng, spec.n_dev)
    test = _make_split(lex, spec, rng, spec.n_test)
    return train, dev, test
