"""Binary judgment prediction from document vectors.

Documents are embedded as the mean of the embeddings of their last 510
tokens. The token list can first be augmented with tagger output: either
the distinct predicted tag names (Text+Tag) or each predicted span's tag
followed by its tokens (Text+Span). Augmentation happens before the
510-token window is taken, so appended material always survives
truncation and it is leading text that gets cut.

A from-scratch logistic regression (deterministic full-batch gradient
descent on the L2-penalized mean negative log-likelihood, bias left
unpenalized) maps document vectors to outcomes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .corpus import Document, LabeledSequence, split_sentences, tokenize
from .crf import CrfModel, ExtractedSpan, extract_spans
from .emission import EmbeddingTable, fnv1a64, load_embeddings
from .errors import InputError
from .tags import DEFAULT_TAGS, TagSet

WINDOW_TOKENS = 510

MODE_TEXT = "text"
MODE_TEXT_TAG = "text+tag"
MODE_TEXT_SPAN = "text+span"
COMPOSITION_MODES = (MODE_TEXT, MODE_TEXT_TAG, MODE_TEXT_SPAN)

_DISPLAY = {MODE_TEXT: "Text", MODE_TEXT_TAG: "Text+Tag", MODE_TEXT_SPAN: "Text+Span"}


def resolve_mode(name: str) -> str:
    lowered = name.strip().lower().replace(" ", "")
    if lowered in COMPOSITION_MODES:
        return lowered
    raise InputError(f"unknown composition mode {name!r}, expected one of {', '.join(COMPOSITION_MODES)}")


def mode_display(mode: str) -> str:
    return _DISPLAY[resolve_mode(mode)]


def compose_input(tokens: Sequence[str], mode: str, spans: Sequence[ExtractedSpan],
                  tagset: TagSet = DEFAULT_TAGS) -> list[str]:
    """Append tagger output to a document's token list.

    Text+Tag appends each distinct predicted tag once, in tag-set order.
    Text+Span appends, per span in document order, the tag name followed
    by the span's tokens.
    """
    mode = resolve_mode(mode)
    out = [str(t) for t in tokens]
    if mode == MODE_TEXT:
        return out
    if mode == MODE_TEXT_TAG:
        present = {span.tag for span in spans}
        out.extend(name for name in tagset.names if name in present)
        return out
    for span in spans:
        out.append(span.tag)
        out.extend(span.text.split())
    return out


class EmbeddingSource(Protocol):
    dim: int

    def vector(self, surface: str) -> np.ndarray: ...


class HashedEmbeddingSource:
    """Deterministic per-surface random vectors; the no-encoder fallback.

    Each surface hashes to its own seed, so a token's vector is stable
    across runs, documents, and processes for a fixed (seed, dim).
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise InputError(f"embedding dimension must be positive, got {dim}")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def vector(self, surface: str) -> np.ndarray:
        vec = self._cache.get(surface)
        if vec is None:
            surface_key = fnv1a64(surface.encode("utf-8"))
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, surface_key]))
            vec = rng.standard_normal(self.dim) / np.sqrt(self.dim)
            self._cache[surface] = vec
        return vec


class TableEmbeddingSource:
    """Surface vectors derived from a positionally keyed embedding table.

    The table stores one vector per (doc, sentence, token) position; a
    surface's vector is the mean over every position where it occurs in
    the given sequences. Surfaces never seen there (for example appended
    tag pseudo-tokens) fall back to the supplied source, or fail.
    """

    def __init__(self, table: EmbeddingTable, sequences: Sequence[LabeledSequence],
                 fallback: EmbeddingSource | None = None):
        if fallback is not None and fallback.dim != table.dim:
            raise InputError(f"fallback dimension {fallback.dim} != table dimension {table.dim}")
        self.dim = table.dim
        self._fallback = fallback
        sums: dict[str, np.ndarray] = {}
        counts: dict[str, int] = {}
        for seq in sequences:
            for position, token in enumerate(seq.tokens):
                vec = table.lookup(seq.doc_id, seq.sentence_index, position)
                if token.surface in sums:
                    sums[token.surface] += vec
                    counts[token.surface] += 1
                else:
                    sums[token.surface] = vec.astype(np.float64, copy=True)
                    counts[token.surface] = 1
        self._vectors = {s: sums[s] / counts[s] for s in sums}

    def vector(self, surface: str) -> np.ndarray:
        vec = self._vectors.get(surface)
        if vec is not None:
            return vec
        if self._fallback is not None:
            return self._fallback.vector(surface)
        raise InputError(f"no embedding for token {surface!r}")


def document_vector(tokens: Sequence[str], source: EmbeddingSource) -> np.ndarray:
    """Mean embedding of the final min(510, n) tokens."""
    if not tokens:
        raise InputError("cannot embed an empty token list")
    window = tokens[-WINDOW_TOKENS:]
    total = np.zeros(source.dim)
    for token in window:
        total += source.vector(token)
    vec = total / len(window)
    if not np.all(np.isfinite(vec)):
        raise InputError("non-finite document vector")
    return vec


# ---------------------------------------------------------------------------
# Logistic regression


@dataclass(frozen=True)
class JudgmentExample:
    doc_id: str
    vector: np.ndarray
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise InputError(f"judgment label must be 0 or 1, got {self.label!r}")
        if not np.all(np.isfinite(self.vector)):
            raise InputError(f"non-finite feature vector for document {self.doc_id!r}")


@dataclass
class LogRegConfig:
    epochs: int = 2000
    lr: float = 0.5
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise InputError("epochs must be positive")
        if self.lr <= 0 or self.l2 < 0:
            raise InputError("learning rate must be positive and l2 non-negative")


@dataclass
class LogRegMeta:
    seed: int
    iterations: int
    final_loss: float


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    meta: LogRegMeta

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("non-finite classifier parameters")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss(features: np.ndarray, labels: np.ndarray, weights: np.ndarray,
          bias: float, l2: float) -> float:
    z = features @ weights + bias
    # log(1 + exp(-z*y_signed)) computed stably via logaddexp.
    signed = np.where(labels == 1, -z, z)
    nll = float(np.mean(np.logaddexp(0.0, signed)))
    return nll + l2 * float(weights @ weights)


GRAD_TOL = 1e-6


def train_logreg(examples: Sequence[JudgmentExample], config: LogRegConfig) -> LogRegModel:
    """Full-batch gradient descent from zero parameters.

    Stops when the gradient norm drops below 1e-6 or the epoch budget is
    spent. The bias is exempt from the L2 penalty so that in the large-
    penalty limit predictions collapse to the base rate rather than to
    probability one-half regardless of class balance.
    """
    if not examples:
        raise InputError("no training examples")
    labels = np.array([e.label for e in examples], dtype=np.float64)
    if labels.min() == labels.max():
        raise InputError(f"training labels are all class {int(labels[0])}; need both classes")
    dim = examples[0].vector.shape[0]
    for e in examples:
        if e.vector.shape != (dim,):
            raise InputError(f"feature vector for {e.doc_id!r} has shape {e.vector.shape}, expected ({dim},)")
    features = np.stack([e.vector for e in examples])

    weights = np.zeros(dim)
    bias = 0.0
    count = len(examples)
    iterations = 0
    for _ in range(config.epochs):
        residual = _sigmoid(features @ weights + bias) - labels
        grad_w = features.T @ residual / count + 2.0 * config.l2 * weights
        grad_b = float(residual.mean())
        norm = float(np.sqrt(grad_w @ grad_w + grad_b * grad_b))
        if norm < GRAD_TOL:
            break
        weights -= config.lr * grad_w
        bias -= config.lr * grad_b
        iterations += 1

    meta = LogRegMeta(config.seed, iterations, _loss(features, labels, weights, bias, config.l2))
    return LogRegModel(weights, bias, meta)


def predict_logreg(model: LogRegModel, vector: np.ndarray) -> tuple[float, int]:
    """Sigmoid probability of class 1; the label is 1 when probability >= 0.5."""
    if vector.shape != model.weights.shape:
        raise InputError(f"vector shape {vector.shape} != model shape {model.weights.shape}")
    probability = float(_sigmoid(np.asarray([vector @ model.weights + model.bias]))[0])
    return probability, int(probability >= 0.5)


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class JudgmentReport:
    """Per-class precision/recall plus overall accuracy."""

    class0_precision: float | None
    class0_recall: float | None
    class1_precision: float | None
    class1_recall: float | None
    accuracy: float

    def row(self) -> tuple[float | None, ...]:
        return (self.class0_precision, self.class0_recall,
                self.class1_precision, self.class1_recall, self.accuracy)


def judgment_metrics(gold: Sequence[int], predicted: Sequence[int]) -> JudgmentReport:
    if len(gold) != len(predicted):
        raise InputError(f"{len(gold)} gold labels but {len(predicted)} predictions")
    if not gold:
        raise InputError("no labels to score")
    gold_arr = np.asarray(gold, dtype=np.int64)
    pred_arr = np.asarray(predicted, dtype=np.int64)
    for arr, what in ((gold_arr, "gold"), (pred_arr, "predicted")):
        bad = (arr != 0) & (arr != 1)
        if bad.any():
            raise InputError(f"{what} labels must be 0 or 1")

    def prec_rec(cls: int) -> tuple[float | None, float | None]:
        tp = int(((pred_arr == cls) & (gold_arr == cls)).sum())
        pred_n = int((pred_arr == cls).sum())
        gold_n = int((gold_arr == cls).sum())
        precision = tp / pred_n if pred_n else None
        recall = tp / gold_n if gold_n else None
        return precision, recall

    p0, r0 = prec_rec(0)
    p1, r1 = prec_rec(1)
    accuracy = float((pred_arr == gold_arr).mean())
    return JudgmentReport(p0, r0, p1, r1, accuracy)


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def render_judgment_rows(rows: Sequence[tuple[str, JudgmentReport]]) -> str:
    """One line per (input format, report), five metric columns."""
    headers = ["Input", "Class0 P", "Class0 R", "Class1 P", "Class1 R", "Acc"]
    table = [[name, *(_fmt(v) for v in report.row())] for name, report in rows]
    widths = [max(len(headers[c]), *(len(r[c]) for r in table)) if table else len(headers[c])
              for c in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for r in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Experiment orchestration


@dataclass
class Experiment:
    """A full judgment run: corpora, tagger, composition, embeddings, classifier."""

    train_path: str
    test_path: str
    model_path: str
    modes: tuple[str, ...] = COMPOSITION_MODES
    embedding: dict = field(default_factory=lambda: {"kind": "hashed", "dim": 64, "seed": 0})
    logreg: LogRegConfig = field(default_factory=LogRegConfig)
    crf_embeddings_path: str | None = None


def parse_experiment(text: str, base_dir: str = ".") -> Experiment:
    """Read an experiment description from JSON; paths resolve against base_dir."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"experiment file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError("experiment file must hold a JSON object")

    def path_of(key: str, required: bool = True) -> str | None:
        value = raw.get(key)
        if value is None:
            if required:
                raise InputError(f"experiment file missing required key {key!r}")
            return None
        if not isinstance(value, str):
            raise InputError(f"experiment key {key!r} must be a path string")
        return os.path.join(base_dir, value)

    modes = raw.get("modes", list(COMPOSITION_MODES))
    if not isinstance(modes, list) or not modes:
        raise InputError("experiment key 'modes' must be a non-empty list")
    logreg_raw = raw.get("logreg", {})
    if not isinstance(logreg_raw, dict):
        raise InputError("experiment key 'logreg' must be an object")
    allowed = {"epochs", "lr", "l2", "seed"}
    unknown = set(logreg_raw) - allowed
    if unknown:
        raise InputError(f"unknown logreg keys: {sorted(unknown)}")
    embedding = raw.get("embedding", {"kind": "hashed", "dim": 64, "seed": 0})
    if not isinstance(embedding, dict) or embedding.get("kind") not in ("hashed", "table"):
        raise InputError("experiment key 'embedding' must be an object with kind 'hashed' or 'table'")

    return Experiment(
        train_path=path_of("train"),
        test_path=path_of("test"),
        model_path=path_of("crf_model"),
        modes=tuple(resolve_mode(m) for m in modes),
        embedding=embedding,
        logreg=LogRegConfig(**logreg_raw),
        crf_embeddings_path=path_of("crf_embeddings", required=False),
    )


def _document_tokens_and_spans(doc: Document, model: CrfModel,
                               crf_embeddings: EmbeddingTable | None) -> tuple[list[str], list[ExtractedSpan]]:
    tokens: list[str] = []
    spans: list[ExtractedSpan] = []
    for index, (start, end) in enumerate(split_sentences(doc.text)):
        sentence_tokens = tokenize(doc.text, start, end)
        if not sentence_tokens:
            continue
        seq = LabeledSequence(doc.id, index, tuple(sentence_tokens),
                              tuple([model.tagset.no_tag_index] * len(sentence_tokens)))
        prediction = model.predict(seq, crf_embeddings)
        spans.extend(extract_spans(sentence_tokens, prediction.labels, model.tagset))
        tokens.extend(t.surface for t in sentence_tokens)
    if not tokens:
        raise InputError(f"document {doc.id!r} has no tokens")
    return tokens, spans


def build_embedding_source(spec: dict, base_dir: str,
                           sequences: Sequence[LabeledSequence]) -> EmbeddingSource:
    """Materialize the experiment's embedding spec.

    kind 'hashed' ignores ``sequences``; kind 'table' loads the embedding
    file at spec['path'] and averages it per surface over ``sequences``,
    with a hashed fallback for surfaces the table never saw.
    """
    if spec["kind"] == "hashed":
        return HashedEmbeddingSource(dim=int(spec.get("dim", 64)), seed=int(spec.get("seed", 0)))
    path = spec.get("path")
    if not isinstance(path, str):
        raise InputError("table embedding spec needs a 'path'")
    with open(os.path.join(base_dir, path), "rb") as handle:
        table = load_embeddings(handle.read())
    fallback = HashedEmbeddingSource(dim=table.dim, seed=int(spec.get("seed", 0)))
    return TableEmbeddingSource(table, sequences, fallback)


def run_experiment(experiment: Experiment, train_docs: Sequence[Document],
                   test_docs: Sequence[Document], model: CrfModel,
                   source: EmbeddingSource,
                   crf_embeddings: EmbeddingTable | None = None) -> dict:
    """Train and score the judgment classifier for every requested mode."""
    seen_ids: set[str] = set()
    for doc in list(train_docs) + list(test_docs):
        if doc.judgment is None:
            raise InputError(f"document {doc.id!r} has no judgment label")
        # A shared id would silently alias a training document to a test
        # document below, leaking test content into the classifier.
        if doc.id in seen_ids:
            raise InputError(f"duplicate document id {doc.id!r} across train/test corpora")
        seen_ids.add(doc.id)

    prepared: dict[str, tuple[list[str], list[ExtractedSpan]]] = {}
    for doc in list(train_docs) + list(test_docs):
        prepared[doc.id] = _document_tokens_and_spans(doc, model, crf_embeddings)

    rows: list[tuple[str, JudgmentReport]] = []
    results = []
    for mode in experiment.modes:
        def examples_of(docs: Sequence[Document]) -> list[JudgmentExample]:
            out = []
            for doc in docs:
                tokens, spans = prepared[doc.id]
                composed = compose_input(tokens, mode, spans, model.tagset)
                out.append(JudgmentExample(doc.id, document_vector(composed, source), doc.judgment))
            return out

        classifier = train_logreg(examples_of(train_docs), experiment.logreg)
        predictions = [predict_logreg(classifier, e.vector)[1] for e in examples_of(test_docs)]
        gold = [doc.judgment for doc in test_docs]
        report = judgment_metrics(gold, predictions)
        rows.append((mode_display(mode), report))
        results.append({
            "mode": mode_display(mode),
            "class0_precision": report.class0_precision,
            "class0_recall": report.class0_recall,
            "class1_precision": report.class1_precision,
            "class1_recall": report.class1_recall,
            "accuracy": report.accuracy,
            "iterations": classifier.meta.iterations,
            "final_loss": classifier.meta.final_loss,
        })
    return {"rows": results, "rendered": render_judgment_rows(rows)}
