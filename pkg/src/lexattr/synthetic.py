"""Synthetic corpora with known structure for end-to-end checks.

The tagging generator emits sentences where every token's gold tag is a
deterministic function of its surface: each attribute tag owns a small
disjoint keyword vocabulary and everything else is filler. A competent
tagger should therefore approach perfect accuracy, which makes the
generated corpora usable as an oracle for the whole train/tag/eval
pipeline.

The judgment generator places class-bearing keywords only in the opening
sentences and pads each document with a filler tail longer than the
510-token embedding window. Plain text input then carries no label
signal, while input augmented with extracted spans does.
"""

from __future__ import annotations

import numpy as np

from .corpus import Document, SpanAnnotation
from .tags import ATTRIBUTE_TAGS, NO_TAG

TAG_KEYWORDS: dict[str, tuple[str, ...]] = {
    "ExpertWittest": ("forensic", "ballistics", "pathologist", "autopsy", "toxicology", "serologist"),
    "Wittest": ("eyewitness", "deposed", "testified", "bystander", "neighbour", "informant"),
    "Assault": ("assaulted", "beaten", "lathi", "bruises", "grievous", "attacked"),
    "Riot": ("rioting", "mob", "unlawful", "assembly", "dispersed", "curfew"),
    "Homicide": ("murder", "homicide", "stabbed", "strangled", "deceased", "culpable"),
    "Imprisonment": ("imprisonment", "sentenced", "custody", "rigorous", "remission", "incarceration"),
    "Evidence": ("exhibit", "seized", "recovered", "bloodstained", "panchnama", "forwarded"),
}

FILLER_WORDS: tuple[str, ...] = (
    "the", "court", "case", "appeal", "section", "record", "hearing", "order",
    "state", "counsel", "argued", "matter", "learned", "judge", "trial",
    "facts", "present", "submitted", "police", "report",
)

_KEYWORD_TO_TAG = {word: tag for tag, words in TAG_KEYWORDS.items() for word in words}

# Keywords that separate the two judgment outcomes in the synthetic setup.
SIGNAL_TAGS: dict[int, tuple[str, str]] = {
    0: ("Assault", "Riot"),
    1: ("Homicide", "Imprisonment"),
}


def surface_tag(surface: str) -> str:
    """The generating rule: gold tag of a token given only its surface."""
    return _KEYWORD_TO_TAG.get(surface, NO_TAG)


def _pick(rng: np.random.Generator, words: tuple[str, ...]) -> str:
    return words[int(rng.integers(0, len(words)))]


def _sentence(rng: np.random.Generator) -> tuple[list[str], list[tuple[int, int, str]]]:
    """One sentence as tokens plus keyword runs (token start, end, tag).

    Keywords never occupy the first position (capitalized) or the last
    (carries the period), so surfaces stay inside the fixed vocabularies.
    """
    interior = int(rng.integers(6, 12))
    tokens = [_pick(rng, FILLER_WORDS).capitalize()]
    runs: list[tuple[int, int, str]] = []
    produced = 0
    while produced < interior:
        if rng.random() < 0.4:
            tag = ATTRIBUTE_TAGS[int(rng.integers(0, len(ATTRIBUTE_TAGS)))]
            run_len = int(rng.integers(1, 4))
            start = len(tokens)
            tokens.extend(_pick(rng, TAG_KEYWORDS[tag]) for _ in range(run_len))
            runs.append((start, start + run_len, tag))
            produced += run_len
        else:
            tokens.append(_pick(rng, FILLER_WORDS))
            produced += 1
    tokens.append(_pick(rng, FILLER_WORDS) + ".")
    return tokens, runs


def make_tagging_corpus(n_sentences: int, seed: int, sentences_per_doc: int = 5,
                        doc_prefix: str = "syn") -> list[Document]:
    """Documents of space-joined sentences with gold keyword spans."""
    rng = np.random.default_rng(seed)
    docs: list[Document] = []
    remaining = n_sentences
    doc_index = 0
    while remaining > 0:
        take = min(sentences_per_doc, remaining)
        remaining -= take
        all_tokens: list[str] = []
        token_runs: list[tuple[int, int, str]] = []
        for _ in range(take):
            tokens, runs = _sentence(rng)
            base = len(all_tokens)
            token_runs.extend((base + a, base + b, tag) for a, b, tag in runs)
            all_tokens.extend(tokens)
        starts = []
        cursor = 0
        for token in all_tokens:
            starts.append(cursor)
            cursor += len(token) + 1
        spans = tuple(
            SpanAnnotation(starts[a], starts[b - 1] + len(all_tokens[b - 1]), tag)
            for a, b, tag in token_runs
        )
        docs.append(Document(f"{doc_prefix}-{doc_index:04d}", " ".join(all_tokens), spans))
        doc_index += 1
    return docs


def make_judgment_corpus(n_docs: int, seed: int, doc_prefix: str = "jdg",
                         signal_sentences: int = 3, tail_tokens: int = 515) -> list[Document]:
    """Balanced labeled documents whose class signal sits before the tail.

    Labels alternate 0/1 by document index. Signal sentences embed keyword
    runs from the label's two signature tags; the filler tail is at least
    ``tail_tokens`` long, which must exceed the 510-token suffix window for
    the construction to mean anything.
    """
    rng = np.random.default_rng(seed)
    docs: list[Document] = []
    for index in range(n_docs):
        label = index % 2
        tokens: list[str] = []
        for _ in range(signal_sentences):
            sentence = [_pick(rng, FILLER_WORDS).capitalize()]
            for _ in range(3):
                sentence.append(_pick(rng, FILLER_WORDS))
                tag = SIGNAL_TAGS[label][int(rng.integers(0, 2))]
                sentence.extend(_pick(rng, TAG_KEYWORDS[tag]) for _ in range(2))
            sentence.append(_pick(rng, FILLER_WORDS) + ".")
            tokens.extend(sentence)
        tail = 0
        while tail < tail_tokens:
            sentence = [_pick(rng, FILLER_WORDS).capitalize()]
            sentence.extend(_pick(rng, FILLER_WORDS) for _ in range(int(rng.integers(6, 12))))
            sentence.append(_pick(rng, FILLER_WORDS) + ".")
            tokens.extend(sentence)
            tail += len(sentence)
        docs.append(Document(f"{doc_prefix}-{index:04d}", " ".join(tokens), (), judgment=label))
    return docs
