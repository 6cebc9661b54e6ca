"""Training objectives and the noise-aware training loop.

Three objectives share one loop: ``standard`` minimizes the CRF negative
log-likelihood on clean text; ``augment`` adds the same loss on a
perturbed copy, weighted by alpha; ``stability`` instead penalizes
divergence between the tagger's token posteriors on clean and perturbed
input, never touching the perturbed copy's gold labels.  ``both`` stacks
the augment and stability extras, each weighted by the same alpha.

Model selection follows the mean of clean and noisy dev F1.  The noisy
dev copy is drawn once with a dedicated seed from the training matrix,
so test-time noise distributions never leak into model selection.
Every random choice (parameter init, dropout, shuffling, per-epoch
noise) derives from ``TrainingConfig.seed``, making runs bit-for-bit
repeatable.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import Sequence, TextIO

import numpy as np
import torch

from . import crf
from .confusion import Alphabet, ConfusionMatrix, VanillaNoiseSpec, load_from_path, vanilla
from .corpus import Corpus
from .evaluate import micro_f1
from .model import Tagger, TaggerConfig, Vocabulary, predict_labels
from .perturb import NoiseSeed, perturb_corpus

log = logging.getLogger(__name__)

OBJECTIVES = ("standard", "augment", "stability", "both")

# Stream tags for deriving independent seeds from the base seed.
_TAG_DEV_NOISE = 1
_TAG_EPOCH_NOISE = 2
_TAG_SHUFFLE = 3
_TAG_EVAL_NOISE = 4


def derive_seed(base: int, *tags: int) -> int:
    """Stable 32-bit seed for an independent named stream."""
    return int(np.random.SeedSequence((base, *tags)).generate_state(1)[0])


class TrainingDivergedError(RuntimeError):
    """Raised when a loss turns non-finite."""


@dataclass(frozen=True)
class TrainingConfig:
    objective: str = "standard"
    alpha: float = 1.0
    eta_train: float = 0.1
    matrix_path: str | None = None  # None: vanilla(eta_train) on the train alphabet
    learning_rate: float = 0.1
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 3
    anneal_factor: float = 0.5
    grad_clip: float = 5.0
    seed: int = 0
    resample_noise_each_epoch: bool = True
    stability_on_marginals: bool = False

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not 0.0 <= self.eta_train <= 1.0:
            raise ValueError("eta_train must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs, and patience must be >= 1")
        if not 0.0 < self.anneal_factor <= 1.0:
            raise ValueError("anneal_factor must lie in (0, 1]")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _coerce(raw: str, target_type):
    if target_type is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def parse_config(stream: TextIO) -> tuple[TrainingConfig, TaggerConfig]:
    """Read a flat ``key=value`` file covering training and model fields.

    Lines starting with ``#`` and blank lines are skipped.  Unknown keys
    are an error; ``matrix_path=none`` clears the matrix path.
    """
    train_fields = {f.name: f for f in fields(TrainingConfig)}
    model_fields = {f.name: f for f in fields(TaggerConfig)}
    train_kwargs: dict = {}
    model_kwargs: dict = {}
    for lineno, line in enumerate(stream, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        try:
            if key == "matrix_path":
                train_kwargs[key] = None if raw.lower() == "none" else raw
            elif key in train_fields:
                train_kwargs[key] = _coerce(raw, type(getattr(TrainingConfig(), key)))
            elif key in model_fields:
                model_kwargs[key] = _coerce(raw, type(getattr(TaggerConfig(), key)))
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from exc
    return TrainingConfig(**train_kwargs), TaggerConfig(**model_kwargs)


def write_config(config: TrainingConfig, tagger_config: TaggerConfig, stream: TextIO) -> None:
    for f in fields(config):
        value = getattr(config, f.name)
        stream.write(f"{f.name}={'none' if value is None else value}\n")
    for f in fields(tagger_config):
        stream.write(f"{f.name}={getattr(tagger_config, f.name)}\n")


# ---------------------------------------------------------------------------
# Objectives


def _check_aligned(x: Sequence[str], x_noisy: Sequence[str]):
    if len(x) != len(x_noisy):
        raise ValueError(
            f"clean sentence has {len(x)} tokens but noisy copy has {len(x_noisy)}"
        )


def _nll_batch(model: Tagger, batch: list[tuple[str, ...]], label_ids: torch.Tensor):
    logits = model(batch)
    return -crf.crf_log_likelihood_batch(logits, model.effective_transitions(), label_ids)


def posterior_kl(clean_logits: torch.Tensor, noisy_logits: torch.Tensor) -> torch.Tensor:
    """Sum over tokens of KL(softmax(clean) || softmax(noisy)): (B,N,L) -> (B,)."""
    log_r = torch.log_softmax(clean_logits.to(torch.float64), dim=-1)
    log_q = torch.log_softmax(noisy_logits.to(torch.float64), dim=-1)
    return (torch.exp(log_r) * (log_r - log_q)).sum(dim=-1).sum(dim=-1)


def _kl_batch(
    model: Tagger,
    clean_batch: list[tuple[str, ...]],
    noisy_batch: list[tuple[str, ...]],
    on_marginals: bool,
) -> torch.Tensor:
    """Per-sentence sum over tokens of KL(R(x_i) || Q(x~_i)); shape (B,)."""
    clean_logits = model(clean_batch)
    noisy_logits = model(noisy_batch)
    if not on_marginals:
        return posterior_kl(clean_logits, noisy_logits)
    transitions = model.effective_transitions()
    log_r = crf.token_log_marginals_batch(clean_logits, transitions)
    log_q = crf.token_log_marginals_batch(noisy_logits, transitions)
    return (torch.exp(log_r) * (log_r - log_q)).sum(dim=-1).sum(dim=-1)


def _label_tensor(model: Tagger, batch_labels) -> torch.Tensor:
    return torch.tensor(
        [model.vocab.label_ids(labels) for labels in batch_labels], dtype=torch.long
    )


def loss_standard(model: Tagger, tokens: Sequence[str], gold) -> torch.Tensor:
    """L0: CRF negative log-likelihood of the gold path; non-negative."""
    label_ids = _label_tensor(model, [gold])
    return _nll_batch(model, [tuple(tokens)], label_ids)[0]


def loss_augment(model, tokens, noisy_tokens, gold, alpha: float) -> torch.Tensor:
    """L0 on clean plus alpha times L0 on the perturbed copy (same gold)."""
    _check_aligned(tokens, noisy_tokens)
    label_ids = _label_tensor(model, [gold])
    clean = _nll_batch(model, [tuple(tokens)], label_ids)[0]
    noisy = _nll_batch(model, [tuple(noisy_tokens)], label_ids)[0]
    return clean + alpha * noisy


def loss_stability(
    model, tokens, noisy_tokens, gold, alpha: float, on_marginals: bool = False
) -> torch.Tensor:
    """L0 on clean plus alpha times the posterior-divergence penalty.

    The perturbed copy contributes only through its posteriors Q; its
    gold labels are never read.
    """
    _check_aligned(tokens, noisy_tokens)
    label_ids = _label_tensor(model, [gold])
    l0 = _nll_batch(model, [tuple(tokens)], label_ids)[0]
    kl = _kl_batch(model, [tuple(tokens)], [tuple(noisy_tokens)], on_marginals)[0]
    return l0 + alpha * kl


# ---------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss_total: float
    loss_clean: float
    loss_noise: float
    f1_dev_clean: float
    f1_dev_noisy: float
    f1_dev_mean: float
    learning_rate: float


@dataclass(frozen=True)
class TrainReport:
    epochs: tuple[EpochStats, ...]
    best_epoch: int
    wall_clock_seconds: float
    config: TrainingConfig = field(compare=False, default=None)  # type: ignore[assignment]


REPORT_HEADER = [
    "epoch", "loss_total", "loss_clean", "loss_noise",
    "f1_dev_clean", "f1_dev_noisy", "f1_dev_mean", "learning_rate",
]


def write_report(report: TrainReport, stream: TextIO) -> None:
    writer = csv.writer(stream)
    writer.writerow(REPORT_HEADER)
    for e in report.epochs:
        writer.writerow([
            e.epoch, repr(e.loss_total), repr(e.loss_clean), repr(e.loss_noise),
            repr(e.f1_dev_clean), repr(e.f1_dev_noisy), repr(e.f1_dev_mean),
            repr(e.learning_rate),
        ])


def _resolve_matrix(config: TrainingConfig, corpus_train: Corpus) -> ConfusionMatrix:
    if config.matrix_path is not None:
        return load_from_path(config.matrix_path)
    alphabet = Alphabet(tuple(corpus_train.characters()))
    return vanilla(VanillaNoiseSpec(config.eta_train, alphabet))


def _length_batches(corpus: Corpus, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Shuffled batches of sentence indices, equal lengths within a batch."""
    by_len: dict[int, list[int]] = {}
    for i, sent in enumerate(corpus.sentences):
        by_len.setdefault(len(sent), []).append(i)
    batches = []
    for length in sorted(by_len):
        idx = np.array(by_len[length])
        rng.shuffle(idx)
        for lo in range(0, len(idx), batch_size):
            batches.append(idx[lo : lo + batch_size].tolist())
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def train(
    corpus_train: Corpus,
    corpus_dev: Corpus,
    config: TrainingConfig,
    tagger_config: TaggerConfig | None = None,
) -> tuple[Tagger, TrainReport]:
    """Train a tagger under the configured objective; returns the model at
    its best mean-dev-F1 checkpoint along with the per-epoch report."""
    started = time.perf_counter()
    if tagger_config is None:
        tagger_config = TaggerConfig()
    if not corpus_train.sentences or not corpus_dev.sentences:
        raise ValueError("train and dev corpora must be non-empty")

    torch.manual_seed(config.seed)
    vocab = Vocabulary.from_corpus(corpus_train)
    model = Tagger(vocab, tagger_config)
    matrix = _resolve_matrix(config, corpus_train)
    dev_noisy = perturb_corpus(
        corpus_dev, matrix, NoiseSeed(derive_seed(config.seed, _TAG_DEV_NOISE))
    )
    optimizer = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    needs_noise = config.objective in ("augment", "stability", "both")

    train_noisy = None
    epochs: list[EpochStats] = []
    best_score = -1.0
    best_epoch = -1
    best_state = None
    bad_epochs = 0
    lr = config.learning_rate

    for epoch in range(1, config.max_epochs + 1):
        if needs_noise and (train_noisy is None or config.resample_noise_each_epoch):
            noise_tag = epoch if config.resample_noise_each_epoch else 0
            train_noisy = perturb_corpus(
                corpus_train, matrix,
                NoiseSeed(derive_seed(config.seed, _TAG_EPOCH_NOISE, noise_tag)),
            )
        shuffle_rng = np.random.default_rng(derive_seed(config.seed, _TAG_SHUFFLE, epoch))
        batches = _length_batches(corpus_train, config.batch_size, shuffle_rng)

        model.train()
        clean_sum = 0.0
        noise_sum = 0.0
        seen = 0
        for batch_idx in batches:
            clean_batch = [corpus_train.sentences[i].tokens for i in batch_idx]
            label_ids = _label_tensor(
                model, [corpus_train.sentences[i].labels for i in batch_idx]
            )
            optimizer.zero_grad()
            clean_term = _nll_batch(model, clean_batch, label_ids)
            if config.objective == "standard":
                noise_term = torch.zeros_like(clean_term)
            else:
                noisy_batch = [train_noisy.sentences[i].tokens for i in batch_idx]
                if config.objective == "augment":
                    noise_term = config.alpha * _nll_batch(model, noisy_batch, label_ids)
                elif config.objective == "stability":
                    noise_term = config.alpha * _kl_batch(
                        model, clean_batch, noisy_batch, config.stability_on_marginals
                    )
                else:  # both
                    noise_term = config.alpha * (
                        _nll_batch(model, noisy_batch, label_ids)
                        + _kl_batch(
                            model, clean_batch, noisy_batch, config.stability_on_marginals
                        )
                    )
            loss = (clean_term + noise_term).mean()
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} "
                    f"(objective={config.objective}, lr={lr})"
                )
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            clean_sum += float(clean_term.detach().sum())
            noise_sum += float(noise_term.detach().sum())
            seen += len(batch_idx)

        f1_clean = micro_f1(corpus_dev, predict_labels(model, corpus_dev)).f1
        f1_noisy = micro_f1(corpus_dev, predict_labels(model, dev_noisy)).f1
        f1_mean = (f1_clean + f1_noisy) / 2
        epochs.append(EpochStats(
            epoch, (clean_sum + noise_sum) / seen, clean_sum / seen, noise_sum / seen,
            f1_clean, f1_noisy, f1_mean, lr,
        ))
        log.info(
            "epoch %d: loss %.4f dev clean %.4f noisy %.4f mean %.4f",
            epoch, epochs[-1].loss_total, f1_clean, f1_noisy, f1_mean,
        )

        if f1_mean > best_score:
            best_score = f1_mean
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= 2 * config.patience:
                break
            if bad_epochs % config.patience == 0:
                lr *= config.anneal_factor
                for group in optimizer.param_groups:
                    group["lr"] = lr

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    report = TrainReport(
        tuple(epochs), best_epoch, time.perf_counter() - started, config
    )
    return model, report


# ---------------------------------------------------------------------------
# Sensitivity sweep

SWEEP_HEADER = ["objective", "alpha", "eta_train", "seed", "f1_clean", "f1_noisy"]


def sensitivity_sweep(
    corpus_train: Corpus,
    corpus_dev: Corpus,
    corpus_test: Corpus,
    alphas: Sequence[float],
    etas: Sequence[float],
    objective: str,
    seeds: Sequence[int],
    base_config: TrainingConfig | None = None,
    tagger_config: TaggerConfig | None = None,
    eval_matrix: ConfusionMatrix | None = None,
) -> list[dict]:
    """Train one model per (alpha, eta_train, seed) cell and score it on
    clean and perturbed test input.

    The evaluation matrix defaults to vanilla(0.1) on the train alphabet
    and stays fixed across the grid, so cells differ only in training
    noise.  Returns one row dict per cell and seed, in grid order.
    """
    if not alphas or not etas or not seeds:
        raise ValueError("alphas, etas, and seeds must be non-empty")
    if base_config is None:
        base_config = TrainingConfig(objective=objective)
    if eval_matrix is None:
        eval_matrix = vanilla(
            VanillaNoiseSpec(0.1, Alphabet(tuple(corpus_train.characters())))
        )
    rows = []
    for alpha in alphas:
        for eta in etas:
            for seed in seeds:
                config = replace(
                    base_config, objective=objective, alpha=alpha, eta_train=eta, seed=seed
                )
                model, _ = train(corpus_train, corpus_dev, config, tagger_config)
                f1_clean = micro_f1(corpus_test, predict_labels(model, corpus_test)).f1
                noisy_test = perturb_corpus(
                    corpus_test, eval_matrix,
                    NoiseSeed(derive_seed(seed, _TAG_EVAL_NOISE)),
                )
                f1_noisy = micro_f1(corpus_test, predict_labels(model, noisy_test)).f1
                rows.append({
                    "objective": objective,
                    "alpha": alpha,
                    "eta_train": eta,
                    "seed": seed,
                    "f1_clean": f1_clean,
                    "f1_noisy": f1_noisy,
                })
    return rows


def write_sweep(rows: Sequence[dict], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=SWEEP_HEADER)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
