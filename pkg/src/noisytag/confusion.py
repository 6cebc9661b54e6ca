"""Character confusion matrices: estimation from paired text, the synthetic
uniform-edit model, and a sparse text serialization.

Rows are indexed by the source symbol (a character or the epsilon
sentinel), columns by the replacement symbol.  A character row mixes
keep/substitute/delete mass; the epsilon row carries the per-slot
insertion distribution.  All rows are probability distributions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

from .alignment import align
from .corpus import SentencePair

log = logging.getLogger(__name__)

#: Sentinel for "no character"; deliberately longer than one character so it
#: can never collide with a real alphabet symbol.
EPSILON = "<eps>"

ROW_SUM_TOL = 1e-9
LOAD_ROW_SUM_TOL = 1e-6

#: Character error rates above this band may start flipping gold labels.
LABEL_PRESERVING_ETA = 0.2


class MatrixFormatError(ValueError):
    """Bad confusion matrix file."""


@dataclass(frozen=True)
class Alphabet:
    """Deduplicated, sorted character inventory; epsilon sits at index size."""

    chars: tuple[str, ...]

    def __post_init__(self):
        uniq = sorted(set(self.chars))
        object.__setattr__(self, "chars", tuple(uniq))
        for c in self.chars:
            if len(c) != 1:
                raise ValueError(f"alphabet entries must be single characters, got {c!r}")
        if len(self.chars) < 2:
            raise ValueError("alphabet needs at least 2 characters")

    @property
    def size(self) -> int:
        return len(self.chars)

    @property
    def epsilon_index(self) -> int:
        return len(self.chars)

    @cached_property
    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.chars)}

    def symbol(self, idx: int) -> str:
        return EPSILON if idx == self.epsilon_index else self.chars[idx]

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Alphabet":
        return cls(tuple({c for text in texts for c in text}))

    @classmethod
    def from_pairs(cls, pairs: Iterable[SentencePair]) -> "Alphabet":
        chars = set()
        for pair in pairs:
            for tok in pair.noisy:
                chars.update(tok)
            for tok in pair.clean:
                chars.update(tok)
        return cls(tuple(chars))


@dataclass(frozen=True)
class VanillaNoiseSpec:
    """Amount dial for the uniform synthetic channel."""

    eta: float
    alphabet: Alphabet

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.eta > LABEL_PRESERVING_ETA:
            log.warning(
                "eta=%.3f exceeds the label-preserving band (<= %.2f)",
                self.eta,
                LABEL_PRESERVING_ETA,
            )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-stochastic replacement model over alphabet + epsilon."""

    alphabet: Alphabet
    probs: np.ndarray  # (size+1, size+1), float64, epsilon last

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        n = self.alphabet.size + 1
        if probs.shape != (n, n):
            raise ValueError(f"probs shape {probs.shape}, expected {(n, n)}")
        if (probs < 0).any():
            raise ValueError("negative probability entry")
        sums = probs.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            idx = int(np.nonzero(bad)[0][0])
            raise ValueError(
                f"row {self.alphabet.symbol(idx)!r} sums to {sums[idx]!r}, expected 1"
            )

    @cached_property
    def _cdfs(self) -> np.ndarray:
        cdfs = np.cumsum(self.probs, axis=1)
        cdfs[:, -1] = 1.0  # guard against accumulated rounding
        return cdfs

    def row(self, symbol: str) -> dict[str, float]:
        """Replacement distribution for one source symbol.

        Characters outside the alphabet fall back to a point mass on
        themselves so perturbation of unseen text never fails.
        """
        if symbol == EPSILON:
            idx = self.alphabet.epsilon_index
        elif symbol in self.alphabet.index:
            idx = self.alphabet.index[symbol]
        else:
            log.warning("character %r not in alphabet; using identity row", symbol)
            return {symbol: 1.0}
        row = self.probs[idx]
        out = {c: float(row[i]) for i, c in enumerate(self.alphabet.chars)}
        out[EPSILON] = float(row[self.alphabet.epsilon_index])
        return out

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.probs, np.eye(self.alphabet.size + 1)))


def identity_matrix(alphabet: Alphabet) -> ConfusionMatrix:
    return ConfusionMatrix(alphabet, np.eye(alphabet.size + 1))


def vanilla(spec: VanillaNoiseSpec) -> ConfusionMatrix:
    """Uniform synthetic channel: insertion, deletion, and substitution each
    carry total mass eta/3 per slot/character."""
    m = spec.alphabet.size
    eta = spec.eta
    eps = spec.alphabet.epsilon_index
    probs = np.zeros((m + 1, m + 1))
    third = eta / 3.0
    for i in range(m):
        probs[i, :m] = third / (m - 1)
        probs[i, i] = 1.0 - 2.0 * third
        probs[i, eps] = third
    probs[eps, :m] = third / m
    probs[eps, eps] = 1.0 - third
    return ConfusionMatrix(spec.alphabet, probs)


def estimate_natural(
    pairs: Sequence[SentencePair], smoothing: float = 0.1
) -> ConfusionMatrix:
    """Estimate the channel from token-aligned noisy/clean sentence pairs.

    Counts come from the optimal character alignment of each clean token
    against its noisy counterpart.  A clean token of length K exposes K+1
    insertion slots; slots not consumed by an insertion count toward the
    epsilon-to-epsilon (no insertion) cell so the epsilon row is a proper
    distribution.  Rows left without any counts (e.g. characters seen only
    on the noisy side) default to a point mass on themselves.
    """
    if not pairs:
        raise ValueError("cannot estimate a confusion matrix from zero pairs")
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")

    alphabet = Alphabet.from_pairs(pairs)
    eps = alphabet.epsilon_index
    counts = np.zeros((alphabet.size + 1, alphabet.size + 1))
    index = alphabet.index

    for pair in pairs:
        for clean_tok, noisy_tok in zip(pair.clean, pair.noisy):
            inserts = 0
            for op in align(clean_tok, noisy_tok).ops:
                if op.kind == "insert":
                    counts[eps, index[op.dst]] += 1
                    inserts += 1
                elif op.kind == "delete":
                    counts[index[op.src], eps] += 1
                else:
                    counts[index[op.src], index[op.dst]] += 1
            counts[eps, eps] += max(0, len(clean_tok) + 1 - inserts)

    counts += smoothing
    totals = counts.sum(axis=1)
    probs = np.zeros_like(counts)
    for i in range(alphabet.size + 1):
        if totals[i] > 0:
            probs[i] = counts[i] / totals[i]
        else:
            probs[i, i] = 1.0  # unobserved source symbol: identity fallback
    return ConfusionMatrix(alphabet, probs)


def _escape(symbol: str) -> str:
    if symbol == EPSILON:
        return EPSILON
    cp = ord(symbol)
    if symbol.isspace() or not symbol.isprintable() or symbol == "<" or cp < 0x20:
        return f"U+{cp:04X}"
    return symbol


def _unescape(field: str) -> str:
    if field == EPSILON:
        return EPSILON
    if len(field) == 1:
        return field
    if field.startswith("U+"):
        try:
            return chr(int(field[2:], 16))
        except ValueError:
            pass
    raise MatrixFormatError(f"unknown character escape {field!r}")


def save(matrix: ConfusionMatrix, stream: TextIO) -> None:
    """Write header plus sparse ``FROM TO PROB`` triples; zeros are omitted."""
    stream.write(
        "#alphabet\t" + " ".join(_escape(c) for c in matrix.alphabet.chars) + "\n"
    )
    symbols = list(matrix.alphabet.chars) + [EPSILON]
    for i, src in enumerate(symbols):
        for j, dst in enumerate(symbols):
            p = float(matrix.probs[i, j])
            if p != 0.0:
                stream.write(f"{_escape(src)}\t{_escape(dst)}\t{p!r}\n")


def load(stream: TextIO) -> ConfusionMatrix:
    """Inverse of :func:`save`; validates row sums to {LOAD_ROW_SUM_TOL}."""
    lines = [line.rstrip("\n") for line in stream]
    lines = [line for line in lines if line.strip()]
    if not lines or not lines[0].startswith("#alphabet\t"):
        raise MatrixFormatError("missing #alphabet header line")
    chars = tuple(_unescape(tok) for tok in lines[0].split("\t", 1)[1].split())
    alphabet = Alphabet(chars)
    probs = np.zeros((alphabet.size + 1, alphabet.size + 1))

    def idx(symbol: str) -> int:
        if symbol == EPSILON:
            return alphabet.epsilon_index
        if symbol not in alphabet.index:
            raise MatrixFormatError(f"symbol {symbol!r} not in header alphabet")
        return alphabet.index[symbol]

    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise MatrixFormatError(f"line {lineno}: expected FROM\\tTO\\tPROB")
        try:
            value = float(parts[2])
        except ValueError as exc:
            raise MatrixFormatError(f"line {lineno}: bad probability {parts[2]!r}") from exc
        probs[idx(_unescape(parts[0])), idx(_unescape(parts[1]))] = value

    sums = probs.sum(axis=1)
    bad = np.abs(sums - 1.0) > LOAD_ROW_SUM_TOL
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        raise MatrixFormatError(
            f"row {alphabet.symbol(i)!r} sums to {sums[i]:.6g}, expected 1"
        )
    return ConfusionMatrix(alphabet, probs)


def save_to_path(matrix: ConfusionMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        save(matrix, fh)


def load_from_path(path) -> ConfusionMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        return load(fh)
