"""Command line entry point.

    embexport --encoder hashed-32 --corpus train.jsonl --out train.lxem

Exit codes: 0 success, 2 bad input (unreadable corpus, unknown encoder or
pooling, unusable output path).  Anything else crashing out is a bug and
surfaces as an ordinary traceback.
"""

from __future__ import annotations

import argparse
import sys

from lexattr.errors import InputError

from .encoders import POOLINGS
from .errors import ExportError
from .export import ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export one contextual embedding per whitespace token of an annotated corpus.",
    )
    parser.add_argument("--encoder", required=True,
                        help="hashed-<dim> or a transformers checkpoint (hub name or directory)")
    parser.add_argument("--pooling", default="mean-subwords", choices=POOLINGS,
                        help="how subword piece vectors become word vectors")
    parser.add_argument("--corpus", required=True, help="annotation JSON-lines file")
    parser.add_argument("--out", required=True, help="destination embedding file")
    parser.add_argument("--max-len", type=int, default=128,
                        help="encoder window size in subword pieces")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(encoder=args.encoder, pooling=args.pooling,
                        corpus=args.corpus, out=args.out, max_len=args.max_len)
        count = export(job)
    except (ExportError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read or write: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} vectors to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
