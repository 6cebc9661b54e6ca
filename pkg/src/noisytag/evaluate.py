"""Entity-level scoring, repeated-seed noisy evaluation, and error analysis.

Scoring is exact span match: a predicted entity counts iff its
(start, end, class) triple appears in the gold spans of the same
sentence.  Precision and recall fall back to 0 when their denominator is
0.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from typing import Sequence, TextIO

from .alignment import levenshtein_distance
from .confusion import ConfusionMatrix
from .corpus import Corpus
from .model import Tagger, predict_labels
from .perturb import NoiseSeed, perturb_corpus
from .tagscheme import Label, decode_spans


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    gold: int
    predicted: int
    correct: int


def _prf(gold: int, predicted: int, correct: int) -> tuple[float, float, float]:
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    gold_count: int
    predicted_count: int
    correct_count: int
    per_class: dict[str, ClassScore] = field(default_factory=dict)


def micro_f1(gold: Corpus, predicted: Sequence[Sequence[Label]]) -> EvalReport:
    """Micro-averaged entity F1 of predicted label sequences against gold."""
    if len(predicted) != len(gold.sentences):
        raise ValueError(
            f"predictions cover {len(predicted)} sentences, gold has {len(gold.sentences)}"
        )
    counts: dict[str, list[int]] = {}  # class -> [gold, predicted, correct]
    for sent, pred_labels in zip(gold.sentences, predicted):
        if len(pred_labels) != len(sent):
            raise ValueError("prediction length differs from sentence length")
        gold_spans = set(decode_spans(sent.labels, gold.scheme))
        pred_spans = set(decode_spans(pred_labels, gold.scheme))
        for span in gold_spans:
            counts.setdefault(span.entity_class, [0, 0, 0])[0] += 1
        for span in pred_spans:
            bucket = counts.setdefault(span.entity_class, [0, 0, 0])
            bucket[1] += 1
            if span in gold_spans:
                bucket[2] += 1

    total_gold = sum(c[0] for c in counts.values())
    total_pred = sum(c[1] for c in counts.values())
    total_correct = sum(c[2] for c in counts.values())
    p, r, f1 = _prf(total_gold, total_pred, total_correct)
    per_class = {}
    for cls in sorted(counts):
        g, pr, co = counts[cls]
        cp, cr, cf = _prf(g, pr, co)
        per_class[cls] = ClassScore(cp, cr, cf, g, pr, co)
    return EvalReport(p, r, f1, total_gold, total_pred, total_correct, per_class)


@dataclass(frozen=True)
class NoisyEvalResult:
    """Clean F1 plus per-seed and aggregated noisy F1 for each matrix."""

    clean_f1: float
    rows: tuple[tuple[str, int, float], ...]  # (matrix, seed, f1)
    summary: tuple[tuple[str, float, float], ...]  # (matrix, mean, n-1 std)


def evaluate_noisy(
    model: Tagger,
    clean_test: Corpus,
    matrices: Sequence[tuple[str, ConfusionMatrix]],
    seeds: Sequence[int],
) -> NoisyEvalResult:
    """Score on clean input once and on seed-perturbed copies per matrix.

    The standard deviation uses the n-1 denominator; a single seed
    reports 0.0.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    clean_f1 = micro_f1(clean_test, predict_labels(model, clean_test)).f1
    rows = []
    summary = []
    for name, matrix in matrices:
        scores = []
        for seed in seeds:
            noisy = perturb_corpus(clean_test, matrix, NoiseSeed(seed))
            score = micro_f1(clean_test, predict_labels(model, noisy)).f1
            rows.append((name, seed, score))
            scores.append(score)
        mean = statistics.fmean(scores)
        std = statistics.stdev(scores) if len(scores) > 1 else 0.0
        summary.append((name, mean, std))
    return NoisyEvalResult(clean_f1, tuple(rows), tuple(summary))


def write_noisy_eval_long(result: NoisyEvalResult, stream: TextIO) -> None:
    writer = csv.writer(stream)
    writer.writerow(["matrix", "seed", "f1"])
    for name, seed, f1 in result.rows:
        writer.writerow([name, seed, repr(f1)])


def write_noisy_eval_summary(result: NoisyEvalResult, stream: TextIO) -> None:
    writer = csv.writer(stream)
    writer.writerow(["matrix", "f1_mean", "f1_std"])
    for name, mean, std in result.summary:
        writer.writerow([name, repr(mean), repr(std)])


def format_noisy_eval(result: NoisyEvalResult) -> str:
    """Aligned text table in the clean-plus-mean±std shape."""
    lines = [f"{'input':<20} {'F1':>8} {'std':>8}"]
    lines.append(f"{'clean':<20} {100 * result.clean_f1:8.2f} {'-':>8}")
    for name, mean, std in result.summary:
        lines.append(f"{name:<20} {100 * mean:8.2f} {100 * std:8.2f}")
    return "\n".join(lines)


@dataclass(frozen=True)
class BucketStats:
    tokens: int
    errors: int

    @property
    def error_rate(self) -> float:
        return self.errors / self.tokens if self.tokens else 0.0


DISTANCE_BUCKETS = ("0", "1", "2", "3+")


def _distance_bucket(d: int) -> str:
    return str(d) if d < 3 else "3+"


@dataclass(frozen=True)
class ErrorAnalysisReport:
    """Misrecognition rates by token edit distance and by entity class.

    A token is misrecognized when the predicted label's entity class
    (the class after stripping the scheme tag; O for outside) differs
    from gold.  Class buckets split each gold class into clean (d=0) and
    perturbed (d>0) tokens; both bucket families partition the token
    set.
    """

    distance_buckets: dict[str, BucketStats]
    class_buckets: dict[tuple[str, str], BucketStats]  # (class, clean|perturbed)

    @property
    def total_tokens(self) -> int:
        return sum(b.tokens for b in self.distance_buckets.values())

    @property
    def perturbed_error_rate(self) -> float:
        """Pooled error rate over all tokens with d >= 1."""
        toks = sum(b.tokens for k, b in self.distance_buckets.items() if k != "0")
        errs = sum(b.errors for k, b in self.distance_buckets.items() if k != "0")
        return errs / toks if toks else 0.0


def error_analysis(model: Tagger, clean_test: Corpus, noisy_test: Corpus) -> ErrorAnalysisReport:
    """Predict on the noisy corpus and attribute errors to noise levels."""
    if len(clean_test.sentences) != len(noisy_test.sentences):
        raise ValueError("clean and noisy corpora differ in sentence count")
    for i, (cs, ns) in enumerate(zip(clean_test.sentences, noisy_test.sentences)):
        if len(cs) != len(ns):
            raise ValueError(f"sentence {i}: clean and noisy token counts differ")

    predictions = predict_labels(model, noisy_test)
    dist_counts = {k: [0, 0] for k in DISTANCE_BUCKETS}
    class_counts: dict[tuple[str, str], list[int]] = {}
    for cs, ns, preds in zip(clean_test.sentences, noisy_test.sentences, predictions):
        for clean_tok, noisy_tok, gold_lab, pred_lab in zip(
            cs.tokens, ns.tokens, cs.labels, preds
        ):
            d = levenshtein_distance(clean_tok, noisy_tok)
            wrong = int(_collapse(pred_lab) != _collapse(gold_lab))
            bucket = dist_counts[_distance_bucket(d)]
            bucket[0] += 1
            bucket[1] += wrong
            key = (_collapse(gold_lab), "clean" if d == 0 else "perturbed")
            cls_bucket = class_counts.setdefault(key, [0, 0])
            cls_bucket[0] += 1
            cls_bucket[1] += wrong

    return ErrorAnalysisReport(
        {k: BucketStats(*v) for k, v in dist_counts.items()},
        {k: BucketStats(*v) for k, v in sorted(class_counts.items())},
    )


def _collapse(label: Label) -> str:
    return label.entity_class if label.entity_class else "O"


def write_distance_buckets(report: ErrorAnalysisReport, stream: TextIO) -> None:
    writer = csv.writer(stream)
    writer.writerow(["bucket", "tokens", "errors", "error_rate"])
    for key in DISTANCE_BUCKETS:
        b = report.distance_buckets[key]
        writer.writerow([key, b.tokens, b.errors, repr(b.error_rate)])


def write_class_buckets(report: ErrorAnalysisReport, stream: TextIO) -> None:
    writer = csv.writer(stream)
    writer.writerow(["entity_class", "condition", "tokens", "errors", "error_rate"])
    for (cls, condition), b in report.class_buckets.items():
        writer.writerow([cls, condition, b.tokens, b.errors, repr(b.error_rate)])
