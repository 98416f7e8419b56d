"""Synthetic tagging experiment: generate, convert, train, tag, score.

Drives the installed command-line pipeline end to end on a keyword-driven
corpus where every token's gold tag follows from its surface, so a correct
tagger should approach perfect accuracy. All artifacts land in --workdir.

Usage:
    python3 scripts/run_tagging_experiment.py --workdir /tmp/tagging --seed 13
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lexattr.cli import main as lexattr
from lexattr.corpus import dump_annotations
from lexattr.synthetic import make_tagging_corpus


def run(argv: list[str]) -> None:
    code = lexattr(argv)
    if code != 0:
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--train-sentences", type=int, default=500)
    parser.add_argument("--test-sentences", type=int, default=200)
    parser.add_argument("--seed", type=int, default=13)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--mode", choices=["sparse", "dense"], default="sparse")
    parser.add_argument("--embeddings", help="embedding file (dense mode)")
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    train_ann = work / "train.jsonl"
    test_ann = work / "test.jsonl"
    train_ann.write_bytes(dump_annotations(
        make_tagging_corpus(args.train_sentences, seed=args.seed)))
    test_ann.write_bytes(dump_annotations(
        make_tagging_corpus(args.test_sentences, seed=args.seed + 1)))

    run(["convert", str(train_ann), "--out", str(work / "train.tsv")])
    run(["convert", str(test_ann), "--out", str(work / "test.tsv")])
    run(["stats", str(train_ann), str(test_ann), "--out", str(work / "stats.tsv")])

    train_argv = [
        "train", "--train", str(work / "train.tsv"), "--mode", args.mode,
        "--seed", str(args.seed), "--epochs", str(args.epochs),
        "--out", str(work / "model.bin"),
    ]
    if args.embeddings:
        train_argv += ["--embeddings", args.embeddings]
    run(train_argv)

    tag_argv = ["tag", "--model", str(work / "model.bin"),
                "--input", str(work / "test.tsv"), "--out", str(work / "tagged.tsv")]
    if args.embeddings:
        tag_argv += ["--embeddings", args.embeddings]
    run(tag_argv)

    run(["eval", "--tagged", str(work / "tagged.tsv"), "--out", str(work / "report.json")])
    print(f"artifacts in {work}, total {time.monotonic() - started:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
