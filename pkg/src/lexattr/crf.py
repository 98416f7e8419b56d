"""Linear-chain CRF over the eight-tag set.

Sequence score = start[y_1] + sum_i emissions[i, y_i]
               + sum_i transitions[y_{i-1}, y_i] + stop[y_n].

All dynamic programming runs in log space with max-shifted log-sum-exp;
sentences in this domain reach thousands of tokens, so probability-space
recursions would underflow. Training is deterministic mini-batch gradient
ascent on the L2-penalized log-likelihood: fixed shuffle order from the
seed, fixed reduction order, zero initialization (the objective is concave
in the parameters for fixed features).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .corpus import LabeledSequence, Token
from .emission import (
    DEFAULT_FEATURE_DIM,
    EmbeddingTable,
    SparseFeatureVector,
    dense_emissions,
    featurize_sequence,
    sequence_embeddings,
    sparse_emissions,
)
from .errors import InputError, NumericalError
from .tags import DEFAULT_TAGS, TagSet

MODEL_MAGIC = b"LXCRF"
MODEL_VERSION = 1

MODE_SPARSE = "sparse"
MODE_DENSE = "dense"


def logsumexp(a: np.ndarray, axis: int | None = None):
    """Max-shifted log-sum-exp; tolerates all ``-inf`` slices."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return out.item()
    return np.squeeze(out, axis=axis)


@dataclass
class CrfParams:
    """Transition structure: transitions[i, j] scores label j following i."""

    transitions: np.ndarray  # (L, L)
    start: np.ndarray  # (L,)
    stop: np.ndarray  # (L,)

    @classmethod
    def zeros(cls, n_labels: int) -> "CrfParams":
        return cls(
            np.zeros((n_labels, n_labels)),
            np.zeros(n_labels),
            np.zeros(n_labels),
        )

    @property
    def n_labels(self) -> int:
        return self.start.shape[0]

    def copy(self) -> "CrfParams":
        return CrfParams(self.transitions.copy(), self.start.copy(), self.stop.copy())


@dataclass
class TagPrediction:
    """A decoded label sequence with its path score."""

    labels: tuple[int, ...]
    score: float
    marginals: np.ndarray | None = None  # (n, L) probabilities, rows sum to 1


def _check_emissions(emissions: np.ndarray, params: CrfParams) -> None:
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise InputError(f"emissions must be a non-empty n x L matrix, got shape {emissions.shape}")
    if emissions.shape[1] != params.n_labels:
        raise InputError(
            f"emissions have {emissions.shape[1]} labels, parameters have {params.n_labels}"
        )
    if not np.all(np.isfinite(emissions)):
        raise InputError("non-finite emission score")


def score_sequence(emissions: np.ndarray, params: CrfParams, labels) -> float:
    """Log-space path score of one label sequence."""
    _check_emissions(emissions, params)
    labels = np.asarray(labels, dtype=np.int64)
    n, n_tags = emissions.shape
    if labels.shape != (n,):
        raise InputError(f"expected {n} labels, got {labels.shape}")
    if labels.min() < 0 or labels.max() >= n_tags:
        raise InputError(f"label index out of range 0..{n_tags - 1}")
    score = params.start[labels[0]] + params.stop[labels[-1]]
    score += emissions[np.arange(n), labels].sum()
    score += params.transitions[labels[:-1], labels[1:]].sum()
    return float(score)


def forward_table(emissions: np.ndarray, params: CrfParams) -> np.ndarray:
    """alpha[t, j] = log sum over prefixes ending in label j at position t."""
    n, n_tags = emissions.shape
    alpha = np.empty((n, n_tags))
    alpha[0] = params.start + emissions[0]
    for t in range(1, n):
        alpha[t] = emissions[t] + logsumexp(alpha[t - 1][:, None] + params.transitions, axis=0)
    return alpha


def backward_table(emissions: np.ndarray, params: CrfParams) -> np.ndarray:
    """beta[t, i] = log sum over suffixes given label i at position t."""
    n, n_tags = emissions.shape
    beta = np.empty((n, n_tags))
    beta[n - 1] = params.stop
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(params.transitions + emissions[t + 1] + beta[t + 1], axis=1)
    return beta


def log_partition(emissions: np.ndarray, params: CrfParams) -> float:
    """log Z: normalizer over all L^n label sequences."""
    _check_emissions(emissions, params)
    alpha = forward_table(emissions, params)
    return logsumexp(alpha[-1] + params.stop)


def marginals(emissions: np.ndarray, params: CrfParams) -> np.ndarray:
    """Per-position label posteriors from forward-backward; rows sum to 1."""
    _check_emissions(emissions, params)
    alpha = forward_table(emissions, params)
    beta = backward_table(emissions, params)
    log_z = logsumexp(alpha[-1] + params.stop)
    return np.exp(alpha + beta - log_z)


def viterbi(emissions: np.ndarray, params: CrfParams, with_marginals: bool = False) -> TagPrediction:
    """Highest-scoring label sequence.

    Ties break toward the lowest label index at every backpointer decision
    (np.argmax returns the first maximum), so decoding is deterministic.
    """
    _check_emissions(emissions, params)
    n, n_tags = emissions.shape
    back = np.zeros((n, n_tags), dtype=np.int64)
    delta = params.start + emissions[0]
    for t in range(1, n):
        scores = delta[:, None] + params.transitions  # previous x current
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(n_tags)] + emissions[t]
    final = delta + params.stop
    last = int(np.argmax(final))
    path = [last]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    probs = marginals(emissions, params) if with_marginals else None
    return TagPrediction(tuple(path), float(final[last]), probs)


# ---------------------------------------------------------------------------
# Model


@dataclass
class TrainMeta:
    seed: int
    epochs_run: int
    final_objective: float


@dataclass
class CrfModel:
    """Trained CRF: transition structure plus one emission parameter block."""

    tagset: TagSet
    params: CrfParams
    mode: str  # MODE_SPARSE or MODE_DENSE
    feature_dim: int | None = None
    weights: np.ndarray | None = None  # (feature_dim, L), sparse mode
    projection: np.ndarray | None = None  # (embed_dim, L), dense mode
    bias: np.ndarray | None = None  # (L,), dense mode
    meta: TrainMeta = field(default_factory=lambda: TrainMeta(0, 0, 0.0))

    def __post_init__(self) -> None:
        n_tags = len(self.tagset)
        if self.params.n_labels != n_tags:
            raise ValueError(f"parameters sized for {self.params.n_labels} labels, tag set has {n_tags}")
        if self.mode == MODE_SPARSE:
            if self.weights is None or self.feature_dim is None:
                raise ValueError("sparse mode requires feature weights")
            if self.projection is not None or self.bias is not None:
                raise ValueError("sparse mode must not carry a dense projection")
            if self.weights.shape != (self.feature_dim, n_tags):
                raise ValueError(f"weights shape {self.weights.shape} != ({self.feature_dim}, {n_tags})")
        elif self.mode == MODE_DENSE:
            if self.projection is None or self.bias is None:
                raise ValueError("dense mode requires projection and bias")
            if self.weights is not None:
                raise ValueError("dense mode must not carry sparse weights")
            if self.bias.shape != (n_tags,) or self.projection.shape[1] != n_tags:
                raise ValueError("projection/bias shapes do not match the tag set")
        else:
            raise ValueError(f"unknown emission mode {self.mode!r}")

    @property
    def embed_dim(self) -> int | None:
        return None if self.projection is None else int(self.projection.shape[0])

    def parameter_arrays(self) -> list[np.ndarray]:
        arrays = [self.params.transitions, self.params.start, self.params.stop]
        if self.mode == MODE_SPARSE:
            arrays.append(self.weights)
        else:
            arrays.extend([self.projection, self.bias])
        return arrays

    def parameter_sq_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.parameter_arrays()))

    def emissions(self, seq: LabeledSequence, embeddings: EmbeddingTable | None = None) -> np.ndarray:
        if self.mode == MODE_SPARSE:
            return sparse_emissions(self.weights, featurize_sequence(seq, self.feature_dim))
        if embeddings is None:
            raise InputError("dense model needs an embedding table to score sequences")
        return dense_emissions(self.projection, self.bias, embeddings, seq)

    def predict(self, seq: LabeledSequence, embeddings: EmbeddingTable | None = None,
                with_marginals: bool = False) -> TagPrediction:
        return viterbi(self.emissions(seq, embeddings), self.params, with_marginals)


# ---------------------------------------------------------------------------
# Likelihood and gradient


@dataclass
class _Prepared:
    """A sequence readied for repeated likelihood/gradient evaluation."""

    labels: np.ndarray
    feats: list[SparseFeatureVector] | None = None
    embed: np.ndarray | None = None  # (n, d)


def _prepare(seq: LabeledSequence, model: CrfModel,
             embeddings: EmbeddingTable | None) -> _Prepared:
    labels = np.asarray(seq.labels, dtype=np.int64)
    if model.mode == MODE_SPARSE:
        return _Prepared(labels, feats=featurize_sequence(seq, model.feature_dim))
    if embeddings is None:
        raise InputError("dense model needs an embedding table")
    return _Prepared(labels, embed=sequence_embeddings(embeddings, seq))


def _prepared_emissions(prep: _Prepared, model: CrfModel) -> np.ndarray:
    if model.mode == MODE_SPARSE:
        return sparse_emissions(model.weights, prep.feats)
    return prep.embed @ model.projection + model.bias


def log_likelihood(batch: list[LabeledSequence], model: CrfModel, l2: float = 0.0,
                   embeddings: EmbeddingTable | None = None) -> float:
    """Sum over the batch of (path score - log Z), minus l2 * ||parameters||^2."""
    if not batch:
        raise InputError("empty batch")
    total = 0.0
    for seq in batch:
        prep = _prepare(seq, model, embeddings)
        emissions = _prepared_emissions(prep, model)
        total += score_sequence(emissions, model.params, prep.labels)
        total -= log_partition(emissions, model.params)
    return total - l2 * model.parameter_sq_norm()


@dataclass
class Gradients:
    """Per-block gradients mirroring a model's parameter arrays."""

    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    weights: np.ndarray | None = None
    projection: np.ndarray | None = None
    bias: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, model: CrfModel) -> "Gradients":
        n_tags = len(model.tagset)
        g = cls(np.zeros((n_tags, n_tags)), np.zeros(n_tags), np.zeros(n_tags))
        if model.mode == MODE_SPARSE:
            g.weights = np.zeros_like(model.weights)
        else:
            g.projection = np.zeros_like(model.projection)
            g.bias = np.zeros_like(model.bias)
        return g

    def arrays(self) -> list[np.ndarray]:
        return [a for a in (self.transitions, self.start, self.stop,
                            self.weights, self.projection, self.bias) if a is not None]

    def reset(self) -> None:
        for a in self.arrays():
            a.fill(0.0)

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))

    def scale(self, factor: float) -> None:
        for a in self.arrays():
            a *= factor


def _accumulate_sequence(prep: _Prepared, model: CrfModel, grads: Gradients) -> float:
    """Add one sequence's expected-minus-empirical statistics; returns its LL."""
    emissions = _prepared_emissions(prep, model)
    params = model.params
    labels = prep.labels
    n, n_tags = emissions.shape
    alpha = forward_table(emissions, params)
    beta = backward_table(emissions, params)
    log_z = logsumexp(alpha[-1] + params.stop)

    # Node residual: empirical one-hot minus posterior marginal.
    residual = -np.exp(alpha + beta - log_z)
    residual[np.arange(n), labels] += 1.0

    grads.start += residual[0]
    grads.stop += residual[n - 1]
    for t in range(n - 1):
        pair = np.exp(
            alpha[t][:, None] + params.transitions + emissions[t + 1][None, :]
            + beta[t + 1][None, :] - log_z
        )
        grads.transitions -= pair
        grads.transitions[labels[t], labels[t + 1]] += 1.0

    if model.mode == MODE_SPARSE:
        for t in range(n):
            fv = prep.feats[t]
            np.add.at(grads.weights, fv.indices, np.outer(fv.values, residual[t]))
    else:
        grads.projection += prep.embed.T @ residual
        grads.bias += residual.sum(axis=0)

    # Path score computed inline, without finiteness validation: when the
    # optimizer diverges the non-finite value must reach the objective
    # check in train(), which reports it as a numerical abort.
    score = params.start[labels[0]] + params.stop[labels[-1]]
    score += emissions[np.arange(n), labels].sum()
    if n > 1:
        score += params.transitions[labels[:-1], labels[1:]].sum()
    return float(score) - log_z


def _batch_gradient(batch: list[_Prepared], model: CrfModel, l2: float,
                    grads: Gradients) -> float:
    grads.reset()
    total = 0.0
    for prep in batch:
        total += _accumulate_sequence(prep, model, grads)
    if l2:
        total -= l2 * model.parameter_sq_norm()
        for garr, parr in zip(grads.arrays(), model.parameter_arrays()):
            garr -= 2.0 * l2 * parr
    return total


def gradient(batch: list[LabeledSequence], model: CrfModel, l2: float = 0.0,
             embeddings: EmbeddingTable | None = None) -> tuple[float, Gradients]:
    """Analytic gradient of :func:`log_likelihood` for every parameter block."""
    if not batch:
        raise InputError("empty batch")
    prepared = [_prepare(seq, model, embeddings) for seq in batch]
    grads = Gradients.zeros_like(model)
    ll = _batch_gradient(prepared, model, l2, grads)
    return ll, grads


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    """Deterministic training hyperparameters; the seed is mandatory.

    The learning rate follows inverse-time decay lr / (1 + decay * k) over
    update steps k. The L2 penalty is applied per update. ``patience``
    enables early stopping on held-out mean log-likelihood.
    """

    seed: int
    epochs: int = 20
    batch_size: int = 8
    lr: float = 0.2
    lr_decay: float = 0.0
    l2: float = 1e-4
    clip: float = 5.0
    patience: int | None = None
    include_unhighlighted: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch size must be positive")
        if self.lr <= 0 or self.lr_decay < 0 or self.l2 < 0 or self.clip <= 0:
            raise InputError("rates, decay, l2, and clip must be positive where applicable")
        if self.patience is not None and self.patience < 1:
            raise InputError("patience must be a positive epoch count")


def _mean_ll(prepared: list[_Prepared], model: CrfModel) -> float:
    total = 0.0
    for prep in prepared:
        emissions = _prepared_emissions(prep, model)
        total += score_sequence(emissions, model.params, prep.labels)
        total -= log_partition(emissions, model.params)
    return total / len(prepared)


def _snapshot(model: CrfModel) -> list[np.ndarray]:
    return [a.copy() for a in model.parameter_arrays()]


def _restore(model: CrfModel, state: list[np.ndarray]) -> None:
    for target, source in zip(model.parameter_arrays(), state):
        target[...] = source


def has_highlight(seq: LabeledSequence, tagset: TagSet) -> bool:
    return any(label != tagset.no_tag_index for label in seq.labels)


def train(train_seqs: list[LabeledSequence], dev_seqs: list[LabeledSequence] | None,
          mode: str, config: TrainConfig, *, tagset: TagSet = DEFAULT_TAGS,
          feature_dim: int = DEFAULT_FEATURE_DIM,
          embeddings: EmbeddingTable | None = None) -> CrfModel:
    """Train a CRF by mini-batch gradient ascent.

    Only sentences containing at least one highlighted token are used
    unless ``config.include_unhighlighted`` is set. With a dev set the
    parameters with the best dev mean log-likelihood are returned (the
    initial parameters count as a candidate); otherwise the final ones.
    """
    if mode not in (MODE_SPARSE, MODE_DENSE):
        raise InputError(f"unknown emission mode {mode!r}")
    if mode == MODE_DENSE and embeddings is None:
        raise InputError("dense mode requires an embedding table")

    if not config.include_unhighlighted:
        train_seqs = [s for s in train_seqs if has_highlight(s, tagset)]
        dev_seqs = [s for s in dev_seqs if has_highlight(s, tagset)] if dev_seqs else dev_seqs
    if not train_seqs:
        raise InputError("no training sentences (after filtering to highlighted ones)")
    if config.patience is not None and not dev_seqs:
        raise InputError("early stopping requested but the dev set is empty")

    n_tags = len(tagset)
    if mode == MODE_SPARSE:
        model = CrfModel(tagset, CrfParams.zeros(n_tags), mode,
                         feature_dim=feature_dim,
                         weights=np.zeros((feature_dim, n_tags)))
    else:
        model = CrfModel(tagset, CrfParams.zeros(n_tags), mode,
                         projection=np.zeros((embeddings.dim, n_tags)),
                         bias=np.zeros(n_tags))

    prepared = [_prepare(s, model, embeddings) for s in train_seqs]
    prepared_dev = [_prepare(s, model, embeddings) for s in dev_seqs] if dev_seqs else []

    best_state = _snapshot(model) if prepared_dev else None
    best_dev = _mean_ll(prepared_dev, model) if prepared_dev else None

    grads = Gradients.zeros_like(model)
    rng = np.random.default_rng(config.seed)
    step = 0
    epochs_run = 0
    stale_epochs = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(prepared))
        for batch_index, base in enumerate(range(0, len(order), config.batch_size)):
            batch = [prepared[i] for i in order[base : base + config.batch_size]]
            # Overflow here is diagnosed via the checks below, not left to
            # warn; diverged runs must abort with a clear location.
            with np.errstate(over="ignore", invalid="ignore"):
                objective = _batch_gradient(batch, model, config.l2, grads)
                norm = grads.norm()
            if not np.isfinite(objective):
                raise NumericalError(
                    f"non-finite objective at epoch {epoch}, batch {batch_index}"
                )
            if not np.isfinite(norm):
                raise NumericalError(
                    f"non-finite gradient at epoch {epoch}, batch {batch_index}"
                )
            if norm > config.clip:
                grads.scale(config.clip / norm)
            lr = config.lr / (1.0 + config.lr_decay * step)
            for target, garr in zip(model.parameter_arrays(), grads.arrays()):
                target += lr * garr
            step += 1
        epochs_run = epoch + 1
        if prepared_dev:
            dev_ll = _mean_ll(prepared_dev, model)
            if dev_ll > best_dev:
                best_dev = dev_ll
                best_state = _snapshot(model)
                stale_epochs = 0
            else:
                stale_epochs += 1
                if config.patience is not None and stale_epochs >= config.patience:
                    break

    if best_state is not None:
        _restore(model, best_state)
    model.meta = TrainMeta(config.seed, epochs_run, _mean_ll(prepared, model))
    return model


# ---------------------------------------------------------------------------
# Serialization


def _put_str(buf: bytearray, text: str) -> None:
    raw = text.encode("utf-8")
    buf += struct.pack("<H", len(raw))
    buf += raw


def serialize(model: CrfModel) -> bytes:
    buf = bytearray()
    buf += MODEL_MAGIC
    buf += struct.pack("<H", MODEL_VERSION)
    buf += struct.pack("<B", 0 if model.mode == MODE_SPARSE else 1)
    buf += struct.pack("<H", len(model.tagset))
    for name in model.tagset.names:
        _put_str(buf, name)
    if model.mode == MODE_SPARSE:
        buf += struct.pack("<Q", model.feature_dim)
    else:
        buf += struct.pack("<I", model.embed_dim)
    buf += struct.pack("<qId", model.meta.seed, model.meta.epochs_run, model.meta.final_objective)
    for array in model.parameter_arrays():
        buf += np.ascontiguousarray(array, dtype="<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    return bytes(buf)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise InputError("truncated model file")
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def deserialize(data: bytes) -> CrfModel:
    """Inverse of :func:`serialize`; parameters round-trip bit-exactly."""
    reader = _Reader(data)
    if reader.take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise InputError("not a CRF model file (bad magic)")
    (version,) = reader.unpack("<H")
    if version != MODEL_VERSION:
        raise InputError(f"unsupported model file version {version}, expected {MODEL_VERSION}")
    (mode_byte,) = reader.unpack("<B")
    if mode_byte not in (0, 1):
        raise InputError(f"unknown emission mode byte {mode_byte}")
    mode = MODE_SPARSE if mode_byte == 0 else MODE_DENSE
    (n_tags,) = reader.unpack("<H")
    names = []
    for _ in range(n_tags):
        (length,) = reader.unpack("<H")
        names.append(reader.take(length).decode("utf-8"))
    tagset = TagSet(tuple(names))
    if mode == MODE_SPARSE:
        (feature_dim,) = reader.unpack("<Q")
    else:
        (embed_dim,) = reader.unpack("<I")
    seed, epochs_run, objective = reader.unpack("<qId")
    params = CrfParams(
        reader.array((n_tags, n_tags)), reader.array((n_tags,)), reader.array((n_tags,))
    )
    if mode == MODE_SPARSE:
        weights = reader.array((feature_dim, n_tags))
        model = CrfModel(tagset, params, mode, feature_dim=feature_dim, weights=weights)
    else:
        projection = reader.array((embed_dim, n_tags))
        bias = reader.array((n_tags,))
        model = CrfModel(tagset, params, mode, projection=projection, bias=bias)
    (stored_crc,) = reader.unpack("<I")
    if reader.pos != len(data):
        raise InputError(f"model file has {len(data) - reader.pos} trailing bytes")
    if zlib.crc32(data[:-4]) != stored_crc:
        raise InputError("model file checksum mismatch")
    model.meta = TrainMeta(seed, epochs_run, objective)
    return model


# ---------------------------------------------------------------------------
# Span extraction from predicted labels


@dataclass(frozen=True)
class ExtractedSpan:
    tag: str
    start: int  # token index, inclusive
    end: int  # token index, exclusive
    text: str  # surfaces joined by single spaces


def extract_spans(tokens, labels, tagset: TagSet = DEFAULT_TAGS) -> list[ExtractedSpan]:
    """Maximal runs of identical non-NoTag labels, one span per run."""
    surfaces = [t.surface if isinstance(t, Token) else str(t) for t in tokens]
    if len(surfaces) != len(labels):
        raise InputError(f"{len(surfaces)} tokens but {len(labels)} labels")
    no_tag = tagset.no_tag_index
    spans: list[ExtractedSpan] = []
    i = 0
    while i < len(labels):
        if labels[i] == no_tag:
            i += 1
            continue
        j = i
        while j < len(labels) and labels[j] == labels[i]:
            j += 1
        spans.append(ExtractedSpan(tagset.name(labels[i]), i, j, " ".join(surfaces[i:j])))
        i = j
    return spans
