"""Generate a synthetic annotation corpus as JSON lines.

Two corpus kinds exist: ``tagging`` (keyword-driven gold spans for the
sequence labeler) and ``judgment`` (balanced binary outcomes whose signal
sits before a long filler tail). Both are deterministic in the seed.

Usage:
    python3 scripts/make_synthetic.py tagging --n 500 --seed 41 --out train.jsonl
    python3 scripts/make_synthetic.py judgment --n 40 --seed 902 --prefix jtr --out jtrain.jsonl
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from lexattr.corpus import dump_annotations
from lexattr.synthetic import make_judgment_corpus, make_tagging_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=["tagging", "judgment"])
    parser.add_argument("--n", type=int, required=True,
                        help="sentences (tagging) or documents (judgment)")
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--prefix", default=None, help="document id prefix")
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    if args.kind == "tagging":
        docs = make_tagging_corpus(args.n, seed=args.seed,
                                   doc_prefix=args.prefix or "syn")
    else:
        docs = make_judgment_corpus(args.n, seed=args.seed,
                                    doc_prefix=args.prefix or "jdg")
    Path(args.out).write_bytes(dump_annotations(docs))
    print(f"wrote {len(docs)} documents to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
