"""Sampling-based corruption of tokens, sentences, and corpora.

A token of length K is expanded to the slot sequence
(eps, c1, eps, c2, ..., eps, cK, eps); every slot is replaced by a draw
from its confusion matrix row, epsilon outputs are dropped, and the
remaining characters are joined back into a token.  Labels are never
touched: the channel model is assumed label-preserving.

Determinism contract: corruption of sentence i under base seed s depends
only on (s, i, token index, token content, matrix).  Neither corpus order
before i nor the lengths of neighboring tokens shifts the draws, because
every token consumes its own spawned substream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .confusion import ConfusionMatrix
from .corpus import Corpus, LabeledSentence


@dataclass(frozen=True)
class NoiseSeed:
    """Base seed from which per-sentence generators are derived."""

    base: int

    def __post_init__(self):
        if self.base < 0:
            raise ValueError("seed must be non-negative")

    def sentence_rng(self, sentence_index: int) -> np.random.Generator:
        return np.random.default_rng([self.base, sentence_index])


def perturb_token(token: str, matrix: ConfusionMatrix, rng: np.random.Generator) -> str:
    """Corrupt one token; an all-epsilon outcome falls back to the original.

    Exactly ``2*len(token) + 1`` uniforms are consumed, one per slot, even
    for characters outside the matrix alphabet (those pass through
    unchanged, but their draw is still spent to keep the stream layout
    fixed).
    """
    alphabet = matrix.alphabet
    eps = alphabet.epsilon_index
    k = len(token)
    idxs = np.full(2 * k + 1, eps, dtype=np.int64)
    known = np.ones(2 * k + 1, dtype=bool)
    for i, ch in enumerate(token):
        j = alphabet.index.get(ch)
        if j is None:
            known[2 * i + 1] = False
        else:
            idxs[2 * i + 1] = j

    u = rng.random(2 * k + 1)
    # Row-wise inverse CDF: first column whose cumulative mass exceeds u.
    cols = (matrix._cdfs[idxs] > u[:, None]).argmax(axis=1)

    out = []
    for pos in range(2 * k + 1):
        if not known[pos]:
            out.append(token[(pos - 1) // 2])
        elif cols[pos] != eps:
            out.append(alphabet.chars[cols[pos]])
    result = "".join(out)
    return result if result else token


def perturb_sentence(
    sentence: LabeledSentence, matrix: ConfusionMatrix, rng: np.random.Generator
) -> LabeledSentence:
    """Corrupt every token independently; labels are copied verbatim."""
    streams = rng.spawn(len(sentence.tokens))
    tokens = tuple(
        perturb_token(tok, matrix, stream)
        for tok, stream in zip(sentence.tokens, streams)
    )
    return LabeledSentence(tokens, sentence.labels)


def perturb_corpus(
    corpus: Corpus, matrix: ConfusionMatrix, seed: NoiseSeed | int
) -> Corpus:
    """Corrupt a corpus reproducibly; ``seed`` may be a bare int."""
    if isinstance(seed, int):
        seed = NoiseSeed(seed)
    sentences = tuple(
        perturb_sentence(sent, matrix, seed.sentence_rng(i))
        for i, sent in enumerate(corpus.sentences)
    )
    return Corpus(sentences, scheme=corpus.scheme)
