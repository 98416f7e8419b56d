"""Judgment prediction experiment: Text vs Text+Tag vs Text+Span.

Builds balanced judgment corpora whose class signal lives in the opening
sentences, beyond the reach of the 510-token suffix window, then trains a
tagger on a disjoint keyword corpus and compares the three input
compositions. Spans recovered by the tagger are appended to the input, so
Text+Span should separate the classes while plain Text stays near chance.

Usage:
    python3 scripts/run_judgment_experiment.py --workdir /tmp/judgment --seed 900
"""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lexattr.cli import main as lexattr
from lexattr.corpus import dump_annotations
from lexattr.synthetic import make_judgment_corpus, make_tagging_corpus


def run(argv: list[str]) -> None:
    code = lexattr(argv)
    if code != 0:
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--train-docs", type=int, default=40)
    parser.add_argument("--test-docs", type=int, default=30)
    parser.add_argument("--tagger-sentences", type=int, default=200)
    parser.add_argument("--seed", type=int, default=900)
    parser.add_argument("--embedding-dim", type=int, default=64)
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()

    tagger_ann = work / "tagger.jsonl"
    tagger_ann.write_bytes(dump_annotations(
        make_tagging_corpus(args.tagger_sentences, seed=args.seed)))
    run(["convert", str(tagger_ann), "--out", str(work / "tagger.tsv")])
    run(["train", "--train", str(work / "tagger.tsv"), "--seed", str(args.seed),
         "--epochs", "8", "--out", str(work / "model.bin")])

    (work / "jtrain.jsonl").write_bytes(dump_annotations(
        make_judgment_corpus(args.train_docs, seed=args.seed + 1, doc_prefix="jtr")))
    (work / "jtest.jsonl").write_bytes(dump_annotations(
        make_judgment_corpus(args.test_docs, seed=args.seed + 2, doc_prefix="jte")))

    experiment = {
        "train": "jtrain.jsonl",
        "test": "jtest.jsonl",
        "crf_model": "model.bin",
        "embedding": {"kind": "hashed", "dim": args.embedding_dim, "seed": 0},
        "logreg": {"epochs": 400, "lr": 0.5, "l2": 1e-4, "seed": 0},
    }
    (work / "experiment.json").write_text(json.dumps(experiment, indent=2) + "\n")

    run(["judge", "--experiment", str(work / "experiment.json"),
         "--out", str(work / "judge.json")])
    print(f"artifacts in {work}, total {time.monotonic() - started:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
