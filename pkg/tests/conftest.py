from __future__ import annotations

import numpy as np

from lexattr.corpus import LabeledSequence, Token


def make_sequence(doc_id: str, index: int, words: list[str], labels: list[int]) -> LabeledSequence:
    """Build a sequence with single-space token layout."""
    tokens = []
    offset = 0
    for word in words:
        tokens.append(Token(word, offset, offset + len(word)))
        offset += len(word) + 1
    return LabeledSequence(doc_id, index, tuple(tokens), tuple(labels))


def random_params(rng: np.random.Generator, n_labels: int, scale: float = 2.0):
    from lexattr.crf import CrfParams

    return CrfParams(
        rng.uniform(-scale, scale, (n_labels, n_labels)),
        rng.uniform(-scale, scale, n_labels),
        rng.uniform(-scale, scale, n_labels),
    )
