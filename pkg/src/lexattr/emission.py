"""Per-token, per-tag emission scores.

Two interchangeable sources feed the CRF's unary term: sparse hand-crafted
features hashed into a fixed-dimension space, or externally computed dense
token embeddings passed through a linear projection. Both produce an n x L
score matrix per sentence.
"""

from __future__ import annotations

import functools
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import LabeledSequence
from .errors import InputError

#: Default hashed feature-space dimension.
DEFAULT_FEATURE_DIM = 1 << 20

EMBED_MAGIC = b"LXEM"
EMBED_VERSION = 1

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV64_PRIME) & _U64
    return h


@functools.lru_cache(maxsize=1 << 18)
def hash_feature(feature: str, dim: int) -> int:
    return fnv1a64(feature.encode("utf-8")) % dim


def token_shape(surface: str, max_run: int = 4) -> str:
    """Character-class shape: X/x/d per char, runs capped at ``max_run``.

    "Testified" -> "Xxxxx", "Sec.302" -> "Xxx.ddd".
    """
    out: list[str] = []
    run = 0
    for ch in surface:
        if ch.isupper():
            cls = "X"
        elif ch.islower():
            cls = "x"
        elif ch.isdigit():
            cls = "d"
        else:
            cls = ch
        if out and out[-1] == cls:
            run += 1
            if run >= max_run:
                continue
        else:
            run = 0
        out.append(cls)
    return "".join(out)


def feature_strings(surfaces: tuple[str, ...], position: int) -> list[str]:
    """Deterministic, position-local feature names for one token.

    Depends only on the surfaces at position-1, position, position+1 and on
    whether the token opens the sentence.
    """
    if not 0 <= position < len(surfaces):
        raise IndexError(f"position {position} outside sequence of {len(surfaces)} tokens")
    surface = surfaces[position]
    lower = surface.lower()
    feats = [f"w={lower}", f"shape={token_shape(surface)}"]
    for k in range(1, min(3, len(lower)) + 1):
        feats.append(f"p{k}={lower[:k]}")
        feats.append(f"s{k}={lower[-k:]}")
    if position == 0:
        feats.append("bos")
    else:
        feats.append(f"prev={surfaces[position - 1].lower()}")
    if position + 1 < len(surfaces):
        feats.append(f"next={surfaces[position + 1].lower()}")
    return feats


@dataclass(frozen=True)
class SparseFeatureVector:
    """Hashed feature indices with values, unique indices, all < dim."""

    indices: np.ndarray  # int64, sorted
    values: np.ndarray  # float64
    dim: int


def featurize(seq: LabeledSequence, position: int,
              dim: int = DEFAULT_FEATURE_DIM) -> SparseFeatureVector:
    """Hash the token's features into the shared feature space.

    Distinct feature strings may collide in the hashed space; collisions
    within one vector are merged by summing their values.
    """
    weights: dict[int, float] = {}
    for feat in feature_strings(seq.surfaces, position):
        idx = hash_feature(feat, dim)
        weights[idx] = weights.get(idx, 0.0) + 1.0
    indices = np.array(sorted(weights), dtype=np.int64)
    values = np.array([weights[i] for i in indices], dtype=np.float64)
    return SparseFeatureVector(indices, values, dim)


def featurize_sequence(seq: LabeledSequence, dim: int = DEFAULT_FEATURE_DIM) -> list[SparseFeatureVector]:
    return [featurize(seq, i, dim) for i in range(len(seq.tokens))]


def sparse_emissions(weights: np.ndarray, feats: list[SparseFeatureVector]) -> np.ndarray:
    """Emission matrix rows ``featurize(seq, i) . W`` for a D x L weight matrix."""
    dim, n_tags = weights.shape
    rows = np.zeros((len(feats), n_tags))
    for i, fv in enumerate(feats):
        if fv.dim != dim:
            raise InputError(f"feature dim {fv.dim} does not match weight rows {dim}")
        rows[i] = fv.values @ weights[fv.indices]
    return rows


# ---------------------------------------------------------------------------
# Dense embeddings


@dataclass
class EmbeddingTable:
    """Externally computed token vectors keyed by (doc_id, sentence, token)."""

    dim: int
    provenance: str
    vectors: dict[tuple[str, int, int], np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.vectors)

    def add(self, doc_id: str, sentence: int, token: int, vector: np.ndarray) -> None:
        key = (doc_id, sentence, token)
        if key in self.vectors:
            raise InputError(f"duplicate embedding key {key}")
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise InputError(f"embedding for {key} has length {vector.shape}, expected {self.dim}")
        if not np.all(np.isfinite(vector)):
            raise InputError(f"non-finite embedding for {key}")
        self.vectors[key] = vector

    def lookup(self, doc_id: str, sentence: int, token: int) -> np.ndarray:
        key = (doc_id, sentence, token)
        vec = self.vectors.get(key)
        if vec is None:
            raise InputError(f"missing embedding for {key}")
        return vec


def sequence_embeddings(table: EmbeddingTable, seq: LabeledSequence) -> np.ndarray:
    """Stack the table's vectors for every token of the sentence (n x d)."""
    return np.stack([
        table.lookup(seq.doc_id, seq.sentence_index, i) for i in range(len(seq.tokens))
    ]).astype(np.float64)


def dense_emissions(projection: np.ndarray, bias: np.ndarray,
                    table: EmbeddingTable, seq: LabeledSequence) -> np.ndarray:
    """Emission matrix rows ``e_i . P + b`` for a d x L projection."""
    if projection.shape[0] != table.dim:
        raise InputError(
            f"projection expects dim {projection.shape[0]}, table has {table.dim}"
        )
    if bias.shape != (projection.shape[1],):
        raise InputError(f"bias shape {bias.shape} does not match projection {projection.shape}")
    emb = sequence_embeddings(table, seq)
    if not np.all(np.isfinite(emb)):
        raise InputError(f"non-finite embedding in {seq.doc_id}[{seq.sentence_index}]")
    return emb @ projection + bias


# ---------------------------------------------------------------------------
# Embedding file format


def write_embeddings(table: EmbeddingTable) -> bytes:
    """Binary embedding file; entries sorted by key for determinism."""
    prov = table.provenance.encode("utf-8")
    out = bytearray()
    out += EMBED_MAGIC
    out += struct.pack("<H", EMBED_VERSION)
    out += struct.pack("<I", table.dim)
    out += struct.pack("<Q", len(table.vectors))
    out += struct.pack("<I", len(prov))
    out += prov
    for (doc_id, sentence, token) in sorted(table.vectors):
        doc_bytes = doc_id.encode("utf-8")
        out += struct.pack("<I", len(doc_bytes))
        out += doc_bytes
        out += struct.pack("<II", sentence, token)
        out += table.vectors[(doc_id, sentence, token)].astype("<f4").tobytes()
    return bytes(out)


def write_embeddings_jsonl(table: EmbeddingTable) -> bytes:
    """JSON-lines debug variant of the embedding file."""
    lines = [json.dumps({
        "magic": "LXEM",
        "version": EMBED_VERSION,
        "dimension": table.dim,
        "count": len(table.vectors),
        "provenance": table.provenance,
    })]
    for (doc_id, sentence, token) in sorted(table.vectors):
        vec = table.vectors[(doc_id, sentence, token)]
        lines.append(json.dumps({
            "doc_id": doc_id,
            "sentence": sentence,
            "token": token,
            "vector": [float(x) for x in vec],
        }))
    return ("\n".join(lines) + "\n").encode("utf-8")


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise InputError(
                f"embedding file truncated: wanted {count} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _load_embeddings_binary(data: bytes) -> EmbeddingTable:
    cur = _Cursor(data)
    if cur.take(4) != EMBED_MAGIC:
        raise InputError("not an embedding file (bad magic)")
    (version,) = cur.unpack("<H")
    if version != EMBED_VERSION:
        raise InputError(f"unsupported embedding file version {version}, expected {EMBED_VERSION}")
    (dim,) = cur.unpack("<I")
    (count,) = cur.unpack("<Q")
    (prov_len,) = cur.unpack("<I")
    provenance = cur.take(prov_len).decode("utf-8")
    table = EmbeddingTable(dim, provenance)
    for _ in range(count):
        (doc_len,) = cur.unpack("<I")
        doc_id = cur.take(doc_len).decode("utf-8")
        sentence, token = cur.unpack("<II")
        vec = np.frombuffer(cur.take(4 * dim), dtype="<f4").astype(np.float32)
        key = (doc_id, sentence, token)
        if key in table.vectors:
            raise InputError(f"duplicate embedding key {key}")
        if not np.all(np.isfinite(vec)):
            raise InputError(f"non-finite embedding for {key}")
        table.vectors[key] = vec
    if cur.pos != len(data):
        raise InputError(
            f"embedding file has {len(data) - cur.pos} trailing bytes after {count} entries"
        )
    return table


def _load_embeddings_jsonl(data: bytes) -> EmbeddingTable:
    lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed embedding header: {exc.msg}") from None
    if header.get("magic") != "LXEM":
        raise InputError("not an embedding file (bad magic)")
    if header.get("version") != EMBED_VERSION:
        raise InputError(
            f"unsupported embedding file version {header.get('version')}, expected {EMBED_VERSION}"
        )
    dim, count = header.get("dimension"), header.get("count")
    table = EmbeddingTable(int(dim), str(header.get("provenance", "")))
    entries = lines[1:]
    if len(entries) != count:
        raise InputError(f"embedding header promises {count} entries, found {len(entries)}")
    for lineno, line in enumerate(entries, 2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: malformed embedding record: {exc.msg}") from None
        vec = np.array(rec["vector"], dtype=np.float32)
        if vec.shape != (table.dim,):
            raise InputError(
                f"line {lineno}: vector length {vec.shape[0]} does not match dimension {table.dim}"
            )
        if math.isnan(float(np.sum(vec))) or not np.all(np.isfinite(vec)):
            raise InputError(
                f"line {lineno}: non-finite embedding for "
                f"({rec['doc_id']!r}, {rec['sentence']}, {rec['token']})"
            )
        table.add(str(rec["doc_id"]), int(rec["sentence"]), int(rec["token"]), vec)
    return table


def load_embeddings(data: bytes) -> EmbeddingTable:
    """Load either the binary format or the JSON-lines debug variant."""
    if data[:1] == b"{":
        return _load_embeddings_jsonl(data)
    return _load_embeddings_binary(data)
