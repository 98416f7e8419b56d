"""Command-line pipeline: convert, stats, train, tag, eval, judge.

Exit codes: 0 success, 1 internal failure, 2 invalid input, 3 numerical
abort during optimization. Every command that writes files also writes a
run manifest at <out>.manifest.json recording the resolved configuration;
manifests carry wall-clock durations and are the one output excluded from
byte-identical rerun guarantees.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .corpus import (
    corpus_stats,
    export_conll,
    export_tagged_conll,
    import_conll,
    import_tagged_conll,
    parse_annotation_file,
    project_spans,
    render_stats_table,
    stats_tsv,
)
from .crf import (
    MODE_DENSE,
    MODE_SPARSE,
    TrainConfig,
    deserialize,
    extract_spans,
    serialize,
    train,
)
from .emission import DEFAULT_FEATURE_DIM, load_embeddings
from .errors import InputError, NumericalError
from .evaluation import render_report, token_accuracy
from .judgment import build_embedding_source, parse_experiment, run_experiment
from .tags import DEFAULT_TAGS


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8: {exc}") from exc


def _write_bytes(path: str, data: bytes) -> None:
    with open(path, "wb") as handle:
        handle.write(data)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def _write_manifest(out_path: str, command: str, args: argparse.Namespace,
                    seed: int | None, started: float) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "duration_seconds": round(time.monotonic() - started, 6),
    }
    _write_text(out_path + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_convert(args: argparse.Namespace) -> int:
    started = time.monotonic()
    docs = parse_annotation_file(_read_bytes(args.annotations))
    sequences = [seq for doc in docs for seq in project_spans(doc)]
    _write_bytes(args.out, export_conll(sequences))
    _write_manifest(args.out, "convert", args, None, started)
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    started = time.monotonic()
    reports = []
    for path in args.annotations:
        docs = parse_annotation_file(_read_bytes(path))
        split = os.path.splitext(os.path.basename(path))[0]
        reports.append(corpus_stats(docs, split=split))
    sys.stdout.write(render_stats_table(reports))
    if args.out:
        _write_text(args.out, stats_tsv(reports))
        _write_manifest(args.out, "stats", args, None, started)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    started = time.monotonic()
    train_seqs = import_conll(_read_bytes(args.train))
    dev_seqs = import_conll(_read_bytes(args.dev)) if args.dev else None
    embeddings = None
    if args.mode == MODE_DENSE:
        if not args.embeddings:
            raise InputError("--mode dense requires --embeddings")
        embeddings = load_embeddings(_read_bytes(args.embeddings))
    config = TrainConfig(
        seed=args.seed,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        l2=args.l2,
        clip=args.clip,
        include_unhighlighted=args.include_unhighlighted,
    )
    model = train(train_seqs, dev_seqs, args.mode, config,
                  feature_dim=args.feature_dim, embeddings=embeddings)
    _write_bytes(args.out, serialize(model))
    _write_manifest(args.out, "train", args, args.seed, started)
    sys.stdout.write(
        f"trained {args.mode} model on {len(train_seqs)} sequences, "
        f"{model.meta.epochs_run} epochs, mean log-likelihood {model.meta.final_objective:.4f}\n"
    )
    return 0


def cmd_tag(args: argparse.Namespace) -> int:
    started = time.monotonic()
    model = deserialize(_read_bytes(args.model))
    sequences = import_conll(_read_bytes(args.input), tagset=model.tagset)
    embeddings = load_embeddings(_read_bytes(args.embeddings)) if args.embeddings else None
    predictions = []
    span_lines = []
    for seq in sequences:
        predicted = model.predict(seq, embeddings)
        predictions.append(predicted.labels)
        spans = extract_spans(seq.tokens, predicted.labels, model.tagset)
        span_lines.append(json.dumps({
            "doc_id": seq.doc_id,
            "sentence": seq.sentence_index,
            "spans": [
                {"tag": s.tag, "start": s.start, "end": s.end, "text": s.text}
                for s in spans
            ],
        }, ensure_ascii=False))
    _write_bytes(args.out, export_tagged_conll(sequences, predictions, model.tagset))
    _write_text(args.out + ".spans.jsonl", "".join(line + "\n" for line in span_lines))
    _write_manifest(args.out, "tag", args, model.meta.seed, started)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    started = time.monotonic()
    gold, predicted_labels = import_tagged_conll(_read_bytes(args.tagged))
    predicted = [seq.with_labels(labels) for seq, labels in zip(gold, predicted_labels)]
    report = token_accuracy(gold, predicted)
    sys.stdout.write(render_report(report))
    if args.out:
        _write_text(args.out, report.to_json())
        _write_manifest(args.out, "eval", args, None, started)
    return 0


def cmd_judge(args: argparse.Namespace) -> int:
    started = time.monotonic()
    base_dir = os.path.dirname(os.path.abspath(args.experiment))
    experiment = parse_experiment(_read_text(args.experiment), base_dir)
    train_docs = parse_annotation_file(_read_bytes(experiment.train_path))
    test_docs = parse_annotation_file(_read_bytes(experiment.test_path))
    model = deserialize(_read_bytes(experiment.model_path))
    crf_embeddings = None
    if experiment.crf_embeddings_path:
        crf_embeddings = load_embeddings(_read_bytes(experiment.crf_embeddings_path))
    sequences = [seq for doc in list(train_docs) + list(test_docs)
                 for seq in project_spans(doc, model.tagset)]
    source = build_embedding_source(experiment.embedding, base_dir, sequences)
    results = run_experiment(experiment, train_docs, test_docs, model, source, crf_embeddings)
    sys.stdout.write(results["rendered"])
    payload = {"experiment": os.path.abspath(args.experiment), "rows": results["rows"]}
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_manifest(args.out, "judge", args, experiment.logreg.seed, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexattr",
        description="Sequence labeling of legal case attributes and judgment prediction.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="project span annotations onto tokens (TSV out)")
    p.add_argument("annotations", help="annotation JSONL file")
    p.add_argument("--out", required=True, help="output token TSV path")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="per-tag sentence/token counts")
    p.add_argument("annotations", nargs="+", help="annotation JSONL file(s), one per split")
    p.add_argument("--out", help="also write the counts as TSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train the tagger")
    p.add_argument("--train", required=True, help="training token TSV")
    p.add_argument("--dev", help="held-out token TSV for early model selection")
    p.add_argument("--mode", choices=[MODE_SPARSE, MODE_DENSE], default=MODE_SPARSE)
    p.add_argument("--embeddings", help="embedding file (dense mode)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--feature-dim", type=int, default=DEFAULT_FEATURE_DIM,
                   help="hashed feature space size (sparse mode)")
    p.add_argument("--include-unhighlighted", action="store_true",
                   help="train on sentences without any highlighted token too")
    p.add_argument("--out", required=True, help="output model path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="label a token TSV with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="token TSV to label")
    p.add_argument("--embeddings", help="embedding file (dense models)")
    p.add_argument("--out", required=True, help="output tagged TSV path")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="score a tagged TSV against its gold column")
    p.add_argument("--tagged", required=True, help="three-column TSV from `tag`")
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("judge", help="run the judgment-prediction experiment")
    p.add_argument("--experiment", required=True, help="experiment description JSON")
    p.add_argument("--out", required=True, help="output results JSON path")
    p.set_defaults(func=cmd_judge)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
