"""Token-level scoring of predicted tags against gold tags.

Per-tag accuracy is recall on that tag's gold tokens. The overall score
comes in two variants because NoTag dominates the token mass: one micro-
averaged over the seven attribute tags only, one over every token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import LabeledSequence
from .errors import InputError
from .tags import DEFAULT_TAGS, NO_TAG, REPORT_ORDER, TagSet


@dataclass(frozen=True)
class TagReport:
    """Accuracy breakdown plus the full gold-by-predicted confusion matrix."""

    tagset: TagSet
    per_tag: dict[str, float | None]  # None when the tag has no gold tokens
    counts: dict[str, int]  # gold token counts
    overall_excl_notag: float | None
    overall_incl_notag: float
    confusion: np.ndarray  # (L, L) int64, rows gold, columns predicted

    def to_json(self) -> str:
        payload = {
            "per_tag": self.per_tag,
            "overall_excl_notag": self.overall_excl_notag,
            "overall_incl_notag": self.overall_incl_notag,
            "confusion": self.confusion.tolist(),
        }
        return json.dumps(payload, indent=2) + "\n"


def _check_alignment(gold: Sequence[LabeledSequence], predicted: Sequence[LabeledSequence]) -> None:
    if len(gold) != len(predicted):
        raise InputError(f"{len(gold)} gold sequences but {len(predicted)} predicted")
    for g, p in zip(gold, predicted):
        if (g.doc_id, g.sentence_index) != (p.doc_id, p.sentence_index) or len(g.labels) != len(p.labels):
            raise InputError(
                f"gold/predicted mismatch at doc {g.doc_id!r} sentence {g.sentence_index}"
            )


def token_accuracy(gold: Sequence[LabeledSequence], predicted: Sequence[LabeledSequence],
                   tagset: TagSet = DEFAULT_TAGS) -> TagReport:
    """Score aligned sequences; alignment is by (doc id, sentence index)."""
    _check_alignment(gold, predicted)
    n_tags = len(tagset)
    confusion = np.zeros((n_tags, n_tags), dtype=np.int64)
    for g, p in zip(gold, predicted):
        for gold_label, pred_label in zip(g.labels, p.labels):
            confusion[gold_label, pred_label] += 1

    counts = confusion.sum(axis=1)
    correct = np.diag(confusion)
    per_tag: dict[str, float | None] = {}
    for index, name in enumerate(tagset.names):
        per_tag[name] = float(correct[index] / counts[index]) if counts[index] else None

    attr = [i for i in range(n_tags) if i != tagset.no_tag_index]
    attr_total = int(counts[attr].sum())
    overall_excl = float(correct[attr].sum() / attr_total) if attr_total else None
    total = int(counts.sum())
    if total == 0:
        raise InputError("no tokens to score")
    overall_incl = float(correct.sum() / total)

    return TagReport(
        tagset=tagset,
        per_tag=per_tag,
        counts={name: int(counts[i]) for i, name in enumerate(tagset.names)},
        overall_excl_notag=overall_excl,
        overall_incl_notag=overall_incl,
        confusion=confusion,
    )


def _cell(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def render_report(report: TagReport, method: str | None = None) -> str:
    """Accuracy table with fixed column order; NoTag printed on its own row.

    The Overall column averages the seven attribute tags; the line under the
    NoTag row repeats the all-token variant so both readings stay visible.
    ``method`` labels the value row when several taggers are compared.
    """
    headers = list(REPORT_ORDER) + ["Overall"]
    values = [_cell(report.per_tag.get(name)) for name in REPORT_ORDER]
    values.append(_cell(report.overall_excl_notag))
    if method is not None:
        headers = ["method"] + headers
        values = [method] + values
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
        "  ".join(v.ljust(w) for v, w in zip(values, widths)).rstrip(),
        f"{NO_TAG}  {_cell(report.per_tag.get(NO_TAG))}",
        f"Overall including {NO_TAG}  {_cell(report.overall_incl_notag)}",
    ]
    return "\n".join(lines) + "\n"
