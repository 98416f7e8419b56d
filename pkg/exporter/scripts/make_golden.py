"""Regenerate tests/data/fixture_golden.lxem from the repo fixture corpus.

The golden file pins the byte-exact output of the builtin hashed encoder on
the hand-built annotation fixture.  Rerun this only when the export format
or the encoder intentionally changes, and review the diff in the tests that
consume it.
"""

from pathlib import Path

from embexport import GOLDEN_SETTINGS, export_annotations

ROOT = Path(__file__).resolve().parents[2]
FIXTURE = ROOT / "tests" / "data" / "annotations_fixture.jsonl"
OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "fixture_golden.lxem"

if __name__ == "__main__":
    OUT.parent.mkdir(parents=True, exist_ok=True)
    count = export_annotations(str(FIXTURE), str(OUT), **GOLDEN_SETTINGS)
    print(f"wrote {count} vectors to {OUT}")
