"""Command-line surface for the noise-aware tagging pipeline.

Batch tool: each subcommand validates its flags, does its work, writes
the requested artifacts, and exits 0 only if everything was written.
All randomness is seed-controlled through flags or config files, so a
command line is a complete record of a run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .alignment import character_error_rate
from .confusion import (
    Alphabet,
    MatrixFormatError,
    VanillaNoiseSpec,
    estimate_natural,
    load_from_path,
    save_to_path,
    vanilla,
)
from .corpus import Corpus, CorpusFormatError, parse_conll, parse_pairs, write_conll
from .evaluate import (
    error_analysis,
    evaluate_noisy,
    format_noisy_eval,
    write_class_buckets,
    write_distance_buckets,
    write_noisy_eval_long,
    write_noisy_eval_summary,
)
from .model import load_checkpoint, save_checkpoint
from .perturb import perturb_corpus
from .train import (
    TrainingConfig,
    TrainingDivergedError,
    parse_config,
    sensitivity_sweep,
    train,
    write_report,
    write_sweep,
)

log = logging.getLogger(__name__)


def _read_corpus(path: str) -> Corpus:
    return parse_conll(Path(path).read_text(encoding="utf-8"))


def _token_pairs(noisy: Corpus, clean: Corpus):
    for ns, cs in zip(noisy.sentences, clean.sentences):
        yield from zip(ns.tokens, cs.tokens)


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _cmd_estimate_noise(args) -> int:
    pairs = parse_pairs(Path(args.pairs).read_text(encoding="utf-8"))
    matrix = estimate_natural(pairs, smoothing=args.smoothing)
    cer = character_error_rate(
        (n, c) for pair in pairs for n, c in zip(pair.noisy, pair.clean)
    )
    save_to_path(matrix, args.out)
    print(f"estimated matrix over {matrix.alphabet.size} characters; "
          f"pair CER {cer:.4f}; written to {args.out}")
    return 0


def _cmd_make_noise(args) -> int:
    corpus = _read_corpus(args.alphabet_from)
    alphabet = Alphabet.from_texts(t for s in corpus.sentences for t in s.tokens)
    matrix = vanilla(VanillaNoiseSpec(args.eta, alphabet))
    save_to_path(matrix, args.out)
    print(f"vanilla(eta={args.eta}) over {alphabet.size} characters; "
          f"written to {args.out}")
    return 0


def _cmd_perturb(args) -> int:
    corpus = _read_corpus(args.corpus)
    matrix = load_from_path(args.matrix)
    noisy = perturb_corpus(corpus, matrix, args.seed)
    Path(args.out).write_text(write_conll(noisy), encoding="utf-8")
    cer = character_error_rate(_token_pairs(noisy, corpus))
    print(f"perturbed {len(corpus)} sentences; achieved CER {cer:.4f}; "
          f"written to {args.out}")
    return 0


def _cmd_train(args) -> int:
    corpus_train = _read_corpus(args.train)
    corpus_dev = _read_corpus(args.dev)
    with open(args.config, encoding="utf-8") as stream:
        config, tagger_config = parse_config(stream)
    model, report = train(corpus_train, corpus_dev, config, tagger_config)
    save_checkpoint(model, args.model_out)
    report_out = args.report_out or args.model_out + ".report.csv"
    with open(report_out, "w", encoding="utf-8") as stream:
        write_report(report, stream)
    best = report.epochs[report.best_epoch - 1]
    print(f"trained {config.objective} for {len(report.epochs)} epochs in "
          f"{report.wall_clock_seconds:.1f}s; best epoch {report.best_epoch} "
          f"(dev clean {best.f1_dev_clean:.4f}, noisy {best.f1_dev_noisy:.4f}); "
          f"checkpoint {args.model_out}; report {report_out}")
    return 0


def _parse_matrix_flag(flag: str) -> tuple[str, str]:
    name, sep, path = flag.partition("=")
    if not sep or not name or not path:
        raise ValueError(f"--matrix expects NAME=FILE, got {flag!r}")
    return name, path


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    test = _read_corpus(args.test)
    matrices = [
        (name, load_from_path(path))
        for name, path in (_parse_matrix_flag(m) for m in args.matrix or [])
    ]
    seeds = list(range(1, args.seeds + 1))
    result = evaluate_noisy(model, test, matrices, seeds)
    print(format_noisy_eval(result))
    if args.csv_long:
        with open(args.csv_long, "w", encoding="utf-8") as stream:
            write_noisy_eval_long(result, stream)
    if args.csv_summary:
        with open(args.csv_summary, "w", encoding="utf-8") as stream:
            write_noisy_eval_summary(result, stream)
    return 0


def _cmd_analyze(args) -> int:
    model = load_checkpoint(args.model)
    clean = _read_corpus(args.clean)
    noisy = _read_corpus(args.noisy)
    report = error_analysis(model, clean, noisy)
    distance_path = args.out + ".distance.csv"
    classes_path = args.out + ".classes.csv"
    with open(distance_path, "w", encoding="utf-8") as stream:
        write_distance_buckets(report, stream)
    with open(classes_path, "w", encoding="utf-8") as stream:
        write_class_buckets(report, stream)
    print(f"analyzed {report.total_tokens} tokens; perturbed-token error rate "
          f"{report.perturbed_error_rate:.4f}; written to {distance_path} "
          f"and {classes_path}")
    return 0


def _cmd_sweep(args) -> int:
    corpus_train = _read_corpus(args.train)
    corpus_dev = _read_corpus(args.dev)
    corpus_test = _read_corpus(args.test)
    if args.config:
        with open(args.config, encoding="utf-8") as stream:
            base_config, tagger_config = parse_config(stream)
    else:
        base_config, tagger_config = TrainingConfig(), None
    rows = sensitivity_sweep(
        corpus_train, corpus_dev, corpus_test,
        alphas=_float_list(args.alphas),
        etas=_float_list(args.etas),
        objective=args.objective,
        seeds=list(range(1, args.seeds + 1)),
        base_config=base_config,
        tagger_config=tagger_config,
    )
    with open(args.out, "w", encoding="utf-8") as stream:
        write_sweep(rows, stream)
    print(f"swept {len(rows)} cells; written to {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisytag",
        description="Train and evaluate sequence labelers under character noise.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log training progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("estimate-noise",
                       help="estimate a confusion matrix from noisy/clean sentence pairs")
    p.add_argument("--pairs", required=True, help="alternating noisy/clean sentence file")
    p.add_argument("--smoothing", type=float, default=0.1,
                   help="additive smoothing count (default 0.1)")
    p.add_argument("--out", required=True, help="matrix output file")
    p.set_defaults(handler=_cmd_estimate_noise)

    p = sub.add_parser("make-noise", help="build a uniform synthetic noise matrix")
    p.add_argument("--eta", type=float, required=True,
                   help="total noise level in [0, 1]")
    p.add_argument("--alphabet-from", required=True,
                   help="CoNLL corpus supplying the character alphabet")
    p.add_argument("--out", required=True, help="matrix output file")
    p.set_defaults(handler=_cmd_make_noise)

    p = sub.add_parser("perturb", help="apply a noise matrix to a labeled corpus")
    p.add_argument("--corpus", required=True, help="CoNLL input corpus")
    p.add_argument("--matrix", required=True, help="confusion matrix file")
    p.add_argument("--seed", type=int, required=True, help="base random seed")
    p.add_argument("--out", required=True, help="CoNLL output file")
    p.set_defaults(handler=_cmd_perturb)

    p = sub.add_parser("train", help="train a tagger from a config file")
    p.add_argument("--train", required=True, help="CoNLL training corpus")
    p.add_argument("--dev", required=True, help="CoNLL development corpus")
    p.add_argument("--config", required=True, help="key=value training config file")
    p.add_argument("--model-out", required=True, help="checkpoint output file")
    p.add_argument("--report-out", default=None,
                   help="per-epoch report CSV (default: MODEL_OUT.report.csv)")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="score a model on clean and perturbed test data")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--test", required=True, help="CoNLL test corpus")
    p.add_argument("--matrix", action="append", metavar="NAME=FILE",
                   help="named noise matrix; repeatable")
    p.add_argument("--seeds", type=int, default=5,
                   help="perturbation samples per matrix, using seeds 1..N (default 5)")
    p.add_argument("--csv-long", default=None, help="per-seed results CSV")
    p.add_argument("--csv-summary", default=None, help="mean/stddev results CSV")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("analyze",
                       help="bucket prediction errors by edit distance and entity class")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--clean", required=True, help="clean CoNLL test corpus")
    p.add_argument("--noisy", required=True,
                   help="perturbed copy of the same corpus, token-aligned")
    p.add_argument("--out", required=True,
                   help="output prefix; writes PREFIX.distance.csv and PREFIX.classes.csv")
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("sweep", help="grid sweep over alpha and eta_train")
    p.add_argument("--train", required=True, help="CoNLL training corpus")
    p.add_argument("--dev", required=True, help="CoNLL development corpus")
    p.add_argument("--test", required=True, help="CoNLL test corpus")
    p.add_argument("--alphas", required=True, help="comma-separated alpha values")
    p.add_argument("--etas", required=True, help="comma-separated eta_train values")
    p.add_argument("--objective", required=True,
                   choices=("standard", "augment", "stability", "both"))
    p.add_argument("--seeds", type=int, required=True,
                   help="training runs per cell, using seeds 1..N")
    p.add_argument("--config", default=None,
                   help="optional base config file for the non-swept settings")
    p.add_argument("--out", required=True, help="grid results CSV")
    p.set_defaults(handler=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (CorpusFormatError, MatrixFormatError, TrainingDivergedError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
