"""Noise-aware training and evaluation for neural sequence labelers."""

from .alignment import Alignment, EditOp, align, character_error_rate, levenshtein_distance
from .confusion import (
    EPSILON,
    Alphabet,
    ConfusionMatrix,
    VanillaNoiseSpec,
    estimate_natural,
    identity_matrix,
    vanilla,
)
from .corpus import (
    Corpus,
    CorpusFormatError,
    LabeledSentence,
    SentencePair,
    parse_conll,
    parse_pairs,
    write_conll,
    write_pairs,
)
from .evaluate import (
    ErrorAnalysisReport,
    EvalReport,
    NoisyEvalResult,
    error_analysis,
    evaluate_noisy,
    micro_f1,
)
from .model import (
    Tagger,
    TaggerConfig,
    Vocabulary,
    load_checkpoint,
    predict_labels,
    save_checkpoint,
)
from .perturb import NoiseSeed, perturb_corpus, perturb_sentence, perturb_token
from .synthetic import SyntheticSpec, generate
from .tagscheme import Label, Scheme, Span, decode_spans, encode_spans
from .train import (
    TrainingConfig,
    TrainingDivergedError,
    TrainReport,
    loss_augment,
    loss_stability,
    loss_standard,
    parse_config,
    sensitivity_sweep,
    train,
)

__all__ = [
    "Alignment",
    "Alphabet",
    "ConfusionMatrix",
    "Corpus",
    "CorpusFormatError",
    "EPSILON",
    "EditOp",
    "ErrorAnalysisReport",
    "EvalReport",
    "Label",
    "LabeledSentence",
    "NoiseSeed",
    "NoisyEvalResult",
    "Scheme",
    "SentencePair",
    "Span",
    "SyntheticSpec",
    "Tagger",
    "TaggerConfig",
    "TrainReport",
    "TrainingConfig",
    "TrainingDivergedError",
    "VanillaNoiseSpec",
    "Vocabulary",
    "align",
    "character_error_rate",
    "decode_spans",
    "encode_spans",
    "error_analysis",
    "estimate_natural",
    "evaluate_noisy",
    "generate",
    "identity_matrix",
    "levenshtein_distance",
    "load_checkpoint",
    "loss_augment",
    "loss_stability",
    "loss_standard",
    "micro_f1",
    "parse_config",
    "parse_conll",
    "parse_pairs",
    "perturb_corpus",
    "perturb_sentence",
    "perturb_token",
    "predict_labels",
    "save_checkpoint",
    "sensitivity_sweep",
    "train",
    "vanilla",
    "write_conll",
    "write_pairs",
]
