"""BiLSTM-CRF tagger: vocabulary, network, posteriors, checkpointing.

Batches group sentences of equal length and, inside the character
encoder, tokens of equal length.  That keeps every recurrence exact with
no padding or masking, so a token's representation depends only on its
own characters and a sentence's logits only on its own tokens.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Sequence

import torch
from torch import nn

from . import crf
from .corpus import Corpus
from .tagscheme import Label, Scheme, label_inventory_labels

UNK = "<unk>"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Vocabulary:
    """Dense, sorted id spaces for words, characters, and labels.

    Id 0 of the word and character spaces is reserved for the unknown
    item; labels are the full tag x class product for the scheme, so a
    model can emit any legal label even for classes rare in training.
    """

    words: tuple[str, ...]
    chars: tuple[str, ...]
    classes: tuple[str, ...]
    scheme: Scheme

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(sorted(set(self.words))))
        object.__setattr__(self, "chars", tuple(sorted(set(self.chars))))
        object.__setattr__(self, "classes", tuple(sorted(set(self.classes))))
        if not self.classes:
            raise ValueError("empty label inventory: no entity classes")

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "Vocabulary":
        words = {tok for sent in corpus.sentences for tok in sent.tokens}
        return cls(
            tuple(words),
            tuple(corpus.characters()),
            tuple(corpus.label_inventory),
            corpus.scheme,
        )

    @cached_property
    def word_to_id(self) -> dict[str, int]:
        ids = {UNK: 0}
        for w in self.words:
            ids[w] = len(ids)
        return ids

    @cached_property
    def char_to_id(self) -> dict[str, int]:
        ids = {UNK: 0}
        for c in self.chars:
            ids[c] = len(ids)
        return ids

    @cached_property
    def labels(self) -> tuple[Label, ...]:
        return tuple(label_inventory_labels(self.classes, self.scheme))

    @cached_property
    def label_to_id(self) -> dict[Label, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def word_id(self, token: str) -> int:
        return self.word_to_id.get(token, 0)

    def char_ids(self, token: str) -> list[int]:
        return [self.char_to_id.get(c, 0) for c in token]

    def label_ids(self, labels: Sequence[Label]) -> list[int]:
        try:
            return [self.label_to_id[lab] for lab in labels]
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]} outside the model inventory") from exc

    def decode_label_ids(self, ids: Sequence[int]) -> list[Label]:
        return [self.labels[i] for i in ids]


@dataclass(frozen=True)
class TaggerConfig:
    """Network dimensions; defaults mirror the reference setup, tests
    shrink them."""

    word_dim: int = 64
    char_dim: int = 16
    char_hidden: int = 16
    hidden: int = 256
    dropout: float = 0.5
    transition_masking: bool = False

    def __post_init__(self):
        for field_name in ("word_dim", "char_dim", "char_hidden", "hidden"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"{field_name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def _scheme_legal_transitions(labels: Sequence[Label], scheme: Scheme) -> torch.Tensor:
    """Boolean (L+2, L+2) allowance matrix including START/STOP."""
    n = len(labels)
    start_idx, stop_idx = crf.start_stop_indices(n)
    ok = torch.zeros((n + 2, n + 2), dtype=torch.bool)

    def can_begin(lab: Label) -> bool:
        if scheme is Scheme.BIO:
            return lab.tag in ("O", "B")
        return lab.tag in ("O", "B", "S")

    def can_end(lab: Label) -> bool:
        if scheme is Scheme.BIO:
            return True
        return lab.tag in ("O", "E", "S")

    def can_follow(a: Label, b: Label) -> bool:
        if scheme is Scheme.BIO:
            if b.tag == "I":
                return a.tag in ("B", "I") and a.entity_class == b.entity_class
            return True
        inside = a.tag in ("B", "I")
        if inside:
            return b.tag in ("I", "E") and b.entity_class == a.entity_class
        return b.tag in ("O", "B", "S")

    for j, b in enumerate(labels):
        ok[start_idx, j] = can_begin(b)
        ok[j, stop_idx] = can_end(b)
        for i, a in enumerate(labels):
            ok[i, j] = can_follow(a, b)
    return ok


#: Additive penalty for masked transitions; finite so gradients stay finite.
MASK_PENALTY = -10000.0


class Tagger(nn.Module):
    """Word+char BiLSTM encoder with a linear projection and CRF head."""

    def __init__(self, vocab: Vocabulary, config: TaggerConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.word_embedding = nn.Embedding(len(vocab.words) + 1, config.word_dim)
        self.char_embedding = nn.Embedding(len(vocab.chars) + 1, config.char_dim)
        self.char_encoder = nn.LSTM(
            config.char_dim, config.char_hidden, batch_first=True, bidirectional=True
        )
        token_dim = config.word_dim + 2 * config.char_hidden
        self.word_encoder = nn.LSTM(
            token_dim, config.hidden, batch_first=True, bidirectional=True
        )
        self.projection = nn.Linear(2 * config.hidden, vocab.num_labels)
        self.transitions = nn.Parameter(
            torch.empty(vocab.num_labels + 2, vocab.num_labels + 2).uniform_(-0.1, 0.1)
        )
        self.dropout = nn.Dropout(config.dropout)
        mask = (
            _scheme_legal_transitions(vocab.labels, vocab.scheme)
            if config.transition_masking
            else torch.ones(vocab.num_labels + 2, vocab.num_labels + 2, dtype=torch.bool)
        )
        self.register_buffer("transition_mask", mask)

    def effective_transitions(self) -> torch.Tensor:
        if self.config.transition_masking:
            return self.transitions + MASK_PENALTY * (~self.transition_mask)
        return self.transitions

    def _encode_chars(self, tokens: list[str]) -> torch.Tensor:
        """Final-state char BiLSTM features, one row per token, exact for
        every token length by grouping equal-length tokens."""
        device = self.char_embedding.weight.device
        by_len: dict[int, list[int]] = {}
        for i, tok in enumerate(tokens):
            by_len.setdefault(len(tok), []).append(i)
        chunks = []
        order = []
        for length in sorted(by_len):
            idx = by_len[length]
            ids = torch.tensor(
                [self.vocab.char_ids(tokens[i]) for i in idx], dtype=torch.long, device=device
            )
            emb = self.char_embedding(ids)  # (M, length, d_c)
            _, (h_n, _) = self.char_encoder(emb)
            chunks.append(torch.cat([h_n[0], h_n[1]], dim=1))  # (M, 2*char_hidden)
            order.extend(idx)
        inverse = torch.empty(len(tokens), dtype=torch.long, device=device)
        inverse[torch.tensor(order, device=device)] = torch.arange(len(tokens), device=device)
        return torch.cat(chunks, dim=0)[inverse]

    def embed(self, batch_tokens: list[tuple[str, ...]]) -> torch.Tensor:
        """Token vectors e(x) for same-length sentences: (B, N, d_w + d_cw)."""
        lengths = {len(s) for s in batch_tokens}
        if len(lengths) != 1:
            raise ValueError("all sentences in a batch must share one length")
        n = lengths.pop()
        device = self.word_embedding.weight.device
        word_ids = torch.tensor(
            [[self.vocab.word_id(t) for t in sent] for sent in batch_tokens],
            dtype=torch.long, device=device,
        )
        words = self.word_embedding(word_ids)  # (B, N, d_w)
        flat = [t for sent in batch_tokens for t in sent]
        chars = self._encode_chars(flat).view(len(batch_tokens), n, -1)
        return torch.cat([words, chars], dim=2)

    def forward(self, batch_tokens: list[tuple[str, ...]]) -> torch.Tensor:
        """Logits l(x) of shape (B, N, num_labels) for same-length sentences."""
        embedded = self.dropout(self.embed(batch_tokens))
        encoded, _ = self.word_encoder(embedded)
        return self.projection(self.dropout(encoded))

    def sentence_logits(self, tokens: Sequence[str]) -> torch.Tensor:
        """Single-sentence logits (N, num_labels); no dropout in eval mode."""
        return self.forward([tuple(tokens)])[0]

    def decode_batch(self, batch_tokens: list[tuple[str, ...]]) -> list[list[Label]]:
        logits = self.forward(batch_tokens)
        paths = crf.viterbi_decode_batch(logits, self.effective_transitions())
        return [self.vocab.decode_label_ids(row.tolist()) for row in paths]


def token_posteriors(logits: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax in float64; rows sum to 1 within 1e-9."""
    return torch.softmax(logits.to(torch.float64), dim=-1)


def save_checkpoint(model: Tagger, path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": {
            "words": list(model.vocab.words),
            "chars": list(model.vocab.chars),
            "classes": list(model.vocab.classes),
            "scheme": model.vocab.scheme.name,
        },
        "state": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> Tagger:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    vocab = Vocabulary(
        tuple(payload["vocab"]["words"]),
        tuple(payload["vocab"]["chars"]),
        tuple(payload["vocab"]["classes"]),
        Scheme[payload["vocab"]["scheme"]],
    )
    model = Tagger(vocab, TaggerConfig(**payload["config"]))
    model.load_state_dict(payload["state"])
    model.eval()
    return model


def predict_labels(model: Tagger, corpus: Corpus, batch_size: int = 64) -> list[list[Label]]:
    """Viterbi labels for every sentence, batching equal lengths together."""
    model.eval()
    out: list[list[Label] | None] = [None] * len(corpus.sentences)
    by_len: dict[int, list[int]] = {}
    for i, sent in enumerate(corpus.sentences):
        by_len.setdefault(len(sent), []).append(i)
    with torch.no_grad():
        for length in sorted(by_len):
            idx = by_len[length]
            for lo in range(0, len(idx), batch_size):
                chunk = idx[lo : lo + batch_size]
                batch = [corpus.sentences[i].tokens for i in chunk]
                for i, labels in zip(chunk, model.decode_batch(batch)):
                    out[i] = labels
    return out  # type: ignore[return-value]
