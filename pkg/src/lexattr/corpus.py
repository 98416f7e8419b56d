"""Annotated-corpus handling.

Parses the JSON-lines annotation format, splits sentences with a rule-based
splitter, tokenizes on whitespace with exact source offsets, projects
character-offset span annotations onto token-level labels, computes dataset
statistics, and round-trips token/label lists through a CoNLL-style TSV.

All offsets count Unicode scalar values. Whitespace is the regex ``\\s``
class throughout, so sentence ranges, tokens, and projection agree on what
separates tokens.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import InputError
from .tags import DEFAULT_TAGS, NO_TAG, REPORT_ORDER, TagSet

#: Final words (including the period) that never end a sentence.
ABBREVIATIONS = (
    "v.", "vs.", "Sec.", "No.", "Mr.", "Dr.", "Smt.", "Hon.", "Art.", "Ors.", "Anr.",
)

_TERMINATORS = ".?!"
_TOKEN_RE = re.compile(r"\S+")
_WS_RE = re.compile(r"\s")
_DOC_COMMENT = "# doc_id = "


@dataclass(frozen=True)
class SpanAnnotation:
    """A highlighted character range carrying one attribute tag."""

    start: int  # inclusive, 0-based
    end: int  # exclusive
    tag: str  # canonical attribute tag, never NoTag


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    spans: tuple[SpanAnnotation, ...] = ()
    judgment: int | None = None  # 0 = rejected, 1 = accepted


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class LabeledSequence:
    """One sentence as whitespace tokens with one tag index per token."""

    doc_id: str
    sentence_index: int
    tokens: tuple[Token, ...]
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{self.doc_id}[{self.sentence_index}]: "
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    def with_labels(self, labels) -> "LabeledSequence":
        return LabeledSequence(self.doc_id, self.sentence_index, self.tokens, tuple(labels))


# ---------------------------------------------------------------------------
# Annotation file parsing


def _validate_spans(doc_id: str, text: str, spans: list[SpanAnnotation]) -> tuple[SpanAnnotation, ...]:
    for sp in spans:
        if not (0 <= sp.start < sp.end <= len(text)):
            raise InputError(
                f"document {doc_id!r}: span ({sp.start}, {sp.end}) outside text "
                f"of length {len(text)}"
            )
    ordered = sorted(spans, key=lambda sp: (sp.start, sp.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise InputError(
                f"document {doc_id!r}: overlapping spans "
                f"({prev.start}, {prev.end}) and ({cur.start}, {cur.end})"
            )
    return tuple(ordered)


def parse_annotation_file(data: bytes | str, tagset: TagSet = DEFAULT_TAGS) -> list[Document]:
    """Parse the JSON-lines annotation format into validated documents.

    One object per line: ``{"id", "text", "spans", "judgment"}``. Span tags
    are resolved against the tag set (aliases accepted) and stored in
    canonical form. Raises :class:`InputError` naming the offending line,
    tag, or span offsets.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    docs: list[Document] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: malformed record: {exc.msg}") from None
        if not isinstance(record, dict):
            raise InputError(f"line {lineno}: record is not a JSON object")
        doc_id = record.get("id")
        if not isinstance(doc_id, str) or not doc_id:
            raise InputError(f"line {lineno}: missing or empty 'id'")
        if doc_id in seen_ids:
            raise InputError(f"line {lineno}: duplicate document id {doc_id!r}")
        seen_ids.add(doc_id)
        doc_text = record.get("text")
        if not isinstance(doc_text, str):
            raise InputError(f"line {lineno}: document {doc_id!r}: missing 'text'")
        raw_spans = record.get("spans", [])
        if not isinstance(raw_spans, list):
            raise InputError(f"line {lineno}: document {doc_id!r}: 'spans' must be a list")
        spans: list[SpanAnnotation] = []
        for raw in raw_spans:
            if not isinstance(raw, dict) or not {"start", "end", "tag"} <= raw.keys():
                raise InputError(
                    f"line {lineno}: document {doc_id!r}: span needs start/end/tag"
                )
            start, end, tag = raw["start"], raw["end"], raw["tag"]
            if not isinstance(start, int) or not isinstance(end, int):
                raise InputError(
                    f"line {lineno}: document {doc_id!r}: span offsets must be integers"
                )
            canonical = tagset.name(tagset.resolve(str(tag)))
            if canonical == NO_TAG:
                raise InputError(
                    f"line {lineno}: document {doc_id!r}: spans may not carry {NO_TAG!r}"
                )
            spans.append(SpanAnnotation(start, end, canonical))
        judgment = record.get("judgment")
        if judgment not in (None, 0, 1):
            raise InputError(
                f"line {lineno}: document {doc_id!r}: judgment must be 0, 1, or null"
            )
        docs.append(Document(doc_id, doc_text, _validate_spans(doc_id, doc_text, spans), judgment))
    return docs


def dump_annotations(docs: list[Document]) -> bytes:
    """Serialize documents back to the JSON-lines annotation format."""
    lines = []
    for doc in docs:
        record = {
            "id": doc.id,
            "text": doc.text,
            "spans": [{"start": sp.start, "end": sp.end, "tag": sp.tag} for sp in doc.spans],
            "judgment": doc.judgment,
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def load_annotations(path: str, tagset: TagSet = DEFAULT_TAGS) -> list[Document]:
    with open(path, "rb") as fh:
        return parse_annotation_file(fh.read(), tagset)


# ---------------------------------------------------------------------------
# Sentence splitting and tokenization


def _is_abbreviation(text: str, dot_index: int) -> bool:
    word_start = dot_index
    while word_start > 0 and not _WS_RE.match(text[word_start - 1]):
        word_start -= 1
    word = text[word_start : dot_index + 1]
    if word in ABBREVIATIONS:
        return True
    # e.g. "(Sec." — abbreviation preceded by punctuation still suppresses.
    for abbr in ABBREVIATIONS:
        if word.endswith(abbr) and not word[: -len(abbr)][-1:].isalnum():
            return True
    return False


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Split text into sentence character ranges.

    A boundary falls after ``.``, ``?``, or ``!`` followed by whitespace and
    an uppercase letter or digit, unless the word ending at a ``.`` is a
    known abbreviation. Ranges are trimmed to the first/last non-whitespace
    character, so they partition the non-whitespace content of the text.
    """
    n = len(text)
    boundaries: list[int] = []
    for i, ch in enumerate(text):
        if ch not in _TERMINATORS:
            continue
        j = i + 1
        if j >= n or not _WS_RE.match(text[j]):
            continue
        k = j
        while k < n and _WS_RE.match(text[k]):
            k += 1
        if k >= n:
            continue
        if not (text[k].isupper() or text[k].isdigit()):
            continue
        if ch == "." and _is_abbreviation(text, i):
            continue
        boundaries.append(i + 1)

    ranges: list[tuple[int, int]] = []
    seg_start = 0
    for seg_end in boundaries + [n]:
        start, end = seg_start, seg_end
        while start < end and _WS_RE.match(text[start]):
            start += 1
        while end > start and _WS_RE.match(text[end - 1]):
            end -= 1
        if end > start:
            ranges.append((start, end))
        seg_start = seg_end
    return ranges


def tokenize(text: str, start: int, end: int) -> list[Token]:
    """Maximal non-whitespace runs within ``text[start:end]``, offset-exact."""
    return [
        Token(m.group(), start + m.start(), start + m.end())
        for m in _TOKEN_RE.finditer(text[start:end])
    ]


# ---------------------------------------------------------------------------
# Span -> token-label projection


def project_spans(doc: Document, tagset: TagSet = DEFAULT_TAGS) -> list[LabeledSequence]:
    """Project character spans to token labels, one sequence per sentence.

    A token receives a span's tag iff their character ranges overlap; any
    partial overlap counts. Unhighlighted tokens receive NoTag. Spans may
    cross sentence boundaries and label tokens in every sentence they touch.
    """
    no_tag = tagset.no_tag_index
    sequences: list[LabeledSequence] = []
    for sent_index, (s_start, s_end) in enumerate(split_sentences(doc.text)):
        tokens = tokenize(doc.text, s_start, s_end)
        labels = []
        for tok in tokens:
            hit_tags = {sp.tag for sp in doc.spans if sp.start < tok.end and tok.start < sp.end}
            if len(hit_tags) > 1:
                raise InputError(
                    f"document {doc.id!r}: token {tok.surface!r} at "
                    f"({tok.start}, {tok.end}) overlaps spans of different tags: "
                    f"{sorted(hit_tags)}"
                )
            labels.append(tagset.index(hit_tags.pop()) if hit_tags else no_tag)
        sequences.append(LabeledSequence(doc.id, sent_index, tuple(tokens), tuple(labels)))
    return sequences


# ---------------------------------------------------------------------------
# Dataset statistics


@dataclass(frozen=True)
class StatsReport:
    """Per-tag sentence and token counts for one corpus split."""

    split: str
    sentences: dict[str, int]  # sentences containing >=1 token of the tag
    tokens: dict[str, int]  # tokens carrying the tag


def corpus_stats(docs: list[Document], split: str, tagset: TagSet = DEFAULT_TAGS) -> StatsReport:
    sentence_counts = {name: 0 for name in tagset.attribute_names}
    token_counts = {name: 0 for name in tagset.attribute_names}
    for doc in docs:
        for seq in project_spans(doc, tagset):
            present: set[str] = set()
            for label in seq.labels:
                name = tagset.name(label)
                if name == NO_TAG:
                    continue
                token_counts[name] += 1
                present.add(name)
            for name in present:
                sentence_counts[name] += 1
    return StatsReport(split, sentence_counts, token_counts)


def stats_tsv(reports: list[StatsReport]) -> str:
    """Machine-readable statistics: one row per tag, report column order."""
    multi = len(reports) > 1
    header = ("split\t" if multi else "") + "tag\tsentences\ttokens"
    lines = [header]
    for report in reports:
        prefix = f"{report.split}\t" if multi else ""
        for name in REPORT_ORDER:
            lines.append(f"{prefix}{name}\t{report.sentences[name]}\t{report.tokens[name]}")
    return "\n".join(lines) + "\n"


def render_stats_table(reports: list[StatsReport]) -> str:
    """Human-readable layout: two rows (sentences, tokens) per split."""
    header = ["split", "statistic"] + list(REPORT_ORDER)
    rows = [header]
    for report in reports:
        rows.append([report.split, "sentences"] + [str(report.sentences[n]) for n in REPORT_ORDER])
        rows.append([report.split, "tokens"] + [str(report.tokens[n]) for n in REPORT_ORDER])
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows) + "\n"


# ---------------------------------------------------------------------------
# CoNLL-style token TSV


def _render_conll(seqs: list[LabeledSequence], tagset: TagSet,
                  predictions: list[tuple[int, ...]] | None = None) -> str:
    lines: list[str] = []
    prev_doc: str | None = None
    for i, seq in enumerate(seqs):
        if seq.doc_id != prev_doc:
            lines.append(f"{_DOC_COMMENT}{seq.doc_id}")
            prev_doc = seq.doc_id
        for j, (tok, label) in enumerate(zip(seq.tokens, seq.labels)):
            cols = [tok.surface, tagset.name(label)]
            if predictions is not None:
                cols.append(tagset.name(predictions[i][j]))
            lines.append("\t".join(cols))
        lines.append("")
    return "\n".join(lines)


def export_conll(seqs: list[LabeledSequence], tagset: TagSet = DEFAULT_TAGS) -> bytes:
    """Render sequences as ``surface<TAB>tag`` lines, blank line between
    sentences, a ``# doc_id = ...`` comment before each document."""
    return _render_conll(seqs, tagset).encode("utf-8")


def export_tagged_conll(seqs: list[LabeledSequence], predictions: list[tuple[int, ...]],
                        tagset: TagSet = DEFAULT_TAGS) -> bytes:
    """Three-column variant with a trailing ``predicted_tag`` column."""
    if len(predictions) != len(seqs):
        raise InputError(
            f"{len(seqs)} sequences but {len(predictions)} prediction lists"
        )
    for seq, pred in zip(seqs, predictions):
        if len(pred) != len(seq.tokens):
            raise InputError(
                f"{seq.doc_id}[{seq.sentence_index}]: {len(seq.tokens)} tokens "
                f"but {len(pred)} predicted labels"
            )
    return _render_conll(seqs, tagset, predictions).encode("utf-8")


def _parse_conll(data: bytes, tagset: TagSet, columns: int):
    text = data.decode("utf-8")
    seqs: list[LabeledSequence] = []
    predictions: list[tuple[int, ...]] = []
    doc_id: str | None = None
    sent_index = 0
    pending: list[tuple[str, int, int]] = []  # surface, gold, predicted

    def flush() -> None:
        nonlocal sent_index, pending
        if not pending:
            return
        offset = 0
        tokens, golds, preds = [], [], []
        for surface, gold, pred in pending:
            tokens.append(Token(surface, offset, offset + len(surface)))
            golds.append(gold)
            preds.append(pred)
            offset += len(surface) + 1
        seqs.append(LabeledSequence(doc_id, sent_index, tuple(tokens), tuple(golds)))
        predictions.append(tuple(preds))
        sent_index += 1
        pending = []

    for lineno, line in enumerate(text.split("\n"), 1):
        if line.startswith(_DOC_COMMENT):
            flush()
            doc_id = line[len(_DOC_COMMENT):]
            if not doc_id:
                raise InputError(f"line {lineno}: empty doc_id comment")
            sent_index = 0
            continue
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) != columns:
            raise InputError(
                f"line {lineno}: expected {columns} tab-separated columns, got {len(cols)}"
            )
        if doc_id is None:
            raise InputError(f"line {lineno}: token line before any doc_id comment")
        surface = cols[0]
        if not surface or _WS_RE.search(surface):
            raise InputError(f"line {lineno}: invalid token surface {surface!r}")
        gold = tagset.resolve(cols[1])
        pred = tagset.resolve(cols[2]) if columns == 3 else gold
        pending.append((surface, gold, pred))
    flush()
    return seqs, predictions


def import_conll(data: bytes, tagset: TagSet = DEFAULT_TAGS) -> list[LabeledSequence]:
    """Inverse of :func:`export_conll`. Offsets are regenerated by laying
    tokens out with single spaces; surfaces and labels are preserved."""
    seqs, _ = _parse_conll(data, tagset, columns=2)
    return seqs


def import_tagged_conll(data: bytes, tagset: TagSet = DEFAULT_TAGS):
    """Read the three-column variant; returns (gold sequences, predicted
    label tuples) aligned one-to-one."""
    return _parse_conll(data, tagset, columns=3)
