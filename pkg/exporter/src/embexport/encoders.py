"""Sentence encoders that produce one vector per whitespace token.

Two families are available.  ``hashed-<dim>`` is a self-contained
deterministic encoder that needs no model files, useful as a fallback and
for pinning byte-exact regression outputs.  Any other identifier is treated
as a pretrained transformer checkpoint (hub name or local directory) and
loaded through the ``transformers`` library when it is installed.

Both families work the same way: a word is split into subword pieces, each
piece gets a vector, long sentences are encoded in overlapping windows with
per-piece averaging across windows, and finally piece vectors are pooled
into word vectors by the job's pooling strategy.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .errors import EncoderUnavailable, ExportError

POOLINGS = ("first-subword", "mean-subwords")

# Builtin encoder: words are chopped into pieces this many characters long.
PIECE_CHARS = 4
CONTEXT_WEIGHT = np.float32(0.5)

_HASHED_ID = re.compile(r"^hashed-([1-9][0-9]*)$")


def subword_windows(count: int, max_len: int) -> list[tuple[int, int]]:
    """Half-open piece ranges covering ``range(count)`` with ~50% overlap.

    A sentence that fits in one window gets exactly one range; longer ones
    are tiled at stride ``max_len // 2`` with a final window flushed against
    the end so no piece is dropped.
    """
    if count <= max_len:
        return [(0, count)]
    stride = max(1, max_len // 2)
    starts = list(range(0, count - max_len + 1, stride))
    if starts[-1] != count - max_len:
        starts.append(count - max_len)
    return [(s, s + max_len) for s in starts]


def pool_pieces(piece_vectors: np.ndarray, groups: list[list[int]], pooling: str) -> np.ndarray:
    """Collapse piece vectors into one row per word."""
    if pooling not in POOLINGS:
        raise ExportError(f"unknown pooling {pooling!r}; choose from: {', '.join(POOLINGS)}")
    rows = []
    for indices in groups:
        if pooling == "first-subword":
            rows.append(piece_vectors[indices[0]])
        else:
            rows.append(piece_vectors[indices].mean(axis=0, dtype=np.float32))
    return np.stack(rows)


class HashedEncoder:
    """Deterministic encoder derived from digests of the piece text.

    Each piece's base vector comes from a SHAKE-256 digest of its UTF-8
    bytes, mapped to [-1, 1).  The mean vector of the enclosing window is
    mixed in so the output is mildly context sensitive, which also makes the
    overlapping-window path observable instead of a no-op.
    """

    version = "1"

    def __init__(self, dim: int):
        self.dim = dim

    def _piece_vector(self, piece: str) -> np.ndarray:
        raw = hashlib.shake_256(piece.encode("utf-8")).digest(4 * self.dim)
        ints = np.frombuffer(raw, dtype="<u4").astype(np.float64)
        return ((ints / 2.0 ** 31) - 1.0).astype(np.float32)

    def encode(self, words: tuple[str, ...], pooling: str, max_len: int) -> np.ndarray:
        if not words:
            return np.zeros((0, self.dim), dtype=np.float32)
        pieces: list[str] = []
        groups: list[list[int]] = []
        for word in words:
            indices = []
            for i in range(0, len(word), PIECE_CHARS):
                chunk = word[i:i + PIECE_CHARS]
                indices.append(len(pieces))
                pieces.append(chunk if i == 0 else "##" + chunk)
            groups.append(indices)
        base = np.stack([self._piece_vector(p) for p in pieces])
        sums = np.zeros_like(base)
        counts = np.zeros(len(pieces), dtype=np.int64)
        for start, end in subword_windows(len(pieces), max_len):
            window = base[start:end]
            context = window.mean(axis=0, dtype=np.float32)
            sums[start:end] += window + CONTEXT_WEIGHT * context
            counts[start:end] += 1
        final = sums / counts[:, None].astype(np.float32)
        return pool_pieces(final, groups, pooling)


class TransformersEncoder:
    """Word vectors from a pretrained checkpoint, inference only.

    The checkpoint identifier is handed to ``from_pretrained`` unchanged, so
    hub names and local directories both work.  Runs on CPU in eval mode
    with gradients disabled.
    """

    def __init__(self, checkpoint: str):
        try:
            import torch
            import transformers
        except ImportError as exc:
            raise EncoderUnavailable(
                f"encoder {checkpoint!r} needs the transformers and torch packages: {exc}"
            ) from exc
        self._torch = torch
        try:
            self.tokenizer = transformers.AutoTokenizer.from_pretrained(checkpoint)
            self.model = transformers.AutoModel.from_pretrained(checkpoint)
        except Exception as exc:
            raise EncoderUnavailable(f"cannot load encoder {checkpoint!r}: {exc}") from exc
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self.version = f"transformers-{transformers.__version__}"

    def encode(self, words: tuple[str, ...], pooling: str, max_len: int) -> np.ndarray:
        if not words:
            return np.zeros((0, self.dim), dtype=np.float32)
        encoded = self.tokenizer(list(words), is_split_into_words=True, add_special_tokens=False)
        ids = encoded["input_ids"]
        groups: list[list[int]] = [[] for _ in words]
        for position, word_index in enumerate(encoded.word_ids()):
            if word_index is not None:
                groups[word_index].append(position)
        for word, indices in zip(words, groups):
            if not indices:
                raise ExportError(f"checkpoint tokenizer produced no subwords for token {word!r}")
        cls_id = self.tokenizer.cls_token_id
        sep_id = self.tokenizer.sep_token_id
        # Window capacity excludes the special tokens re-added per window.
        capacity = max_len - (cls_id is not None) - (sep_id is not None)
        if capacity < 1:
            raise ExportError(f"max length {max_len} leaves no room for subword pieces")
        sums = np.zeros((len(ids), self.dim), dtype=np.float32)
        counts = np.zeros(len(ids), dtype=np.int64)
        with self._torch.no_grad():
            for start, end in subword_windows(len(ids), capacity):
                window = ids[start:end]
                if cls_id is not None:
                    window = [cls_id] + window
                if sep_id is not None:
                    window = window + [sep_id]
                hidden = self.model(
                    input_ids=self._torch.tensor([window])
                ).last_hidden_state[0].numpy()
                offset = 1 if cls_id is not None else 0
                sums[start:end] += hidden[offset:offset + (end - start)].astype(np.float32)
                counts[start:end] += 1
        final = sums / counts[:, None].astype(np.float32)
        return pool_pieces(final, groups, pooling)


def get_encoder(identifier: str):
    """Resolve an encoder identifier to a ready encoder instance."""
    match = _HASHED_ID.match(identifier)
    if match:
        return HashedEncoder(int(match.group(1)))
    return TransformersEncoder(identifier)
