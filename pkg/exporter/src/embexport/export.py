"""Run an export job: annotation corpus in, embedding table file out.

The corpus is the JSON-lines annotation format of the main toolkit, and the
output is its binary embedding format, so anything written here loads
directly via ``lexattr.emission.load_embeddings``.  Keys follow the
toolkit's own sentence splitting and tokenization: one vector per
whitespace token, keyed by (document id, sentence index, token index).
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

from lexattr.corpus import load_annotations, project_spans
from lexattr.emission import EmbeddingTable, write_embeddings

from .encoders import POOLINGS, get_encoder
from .errors import ExportError

# Settings behind the checked-in regression file; see tests/data/.
GOLDEN_SETTINGS = {"encoder": "hashed-32", "pooling": "mean-subwords", "max_len": 128}


@dataclass(frozen=True)
class ExportJob:
    encoder: str
    pooling: str
    corpus: str
    out: str
    max_len: int = 128

    def __post_init__(self) -> None:
        if self.pooling not in POOLINGS:
            raise ExportError(
                f"unknown pooling {self.pooling!r}; choose from: {', '.join(POOLINGS)}"
            )
        if self.max_len < 2:
            raise ExportError(f"max length must be at least 2, got {self.max_len}")


def job_provenance(job: ExportJob, encoder_version: str) -> str:
    """Provenance string stamped into the output file.

    Records the encoder identifier and version, the pooling strategy
    verbatim, and the long-sentence policy (overlapping windows whose piece
    vectors are averaged).
    """
    return (
        f"{job.encoder}@{encoder_version} pooling={job.pooling} "
        f"max-len={job.max_len} long-sentence=overlap-mean"
    )


def build_table(job: ExportJob) -> EmbeddingTable:
    """Encode every sentence of the corpus into an in-memory table."""
    encoder = get_encoder(job.encoder)
    docs = load_annotations(job.corpus)
    table = EmbeddingTable(dim=encoder.dim, provenance=job_provenance(job, encoder.version))
    for doc in docs:
        for seq in project_spans(doc):
            vectors = encoder.encode(seq.surfaces, job.pooling, job.max_len)
            for position in range(len(seq.tokens)):
                table.add(seq.doc_id, seq.sentence_index, position, vectors[position])
    return table


def export(job: ExportJob) -> int:
    """Write the table for ``job`` and return the number of entries."""
    table = build_table(job)
    payload = write_embeddings(table)
    out_dir = os.path.dirname(os.path.abspath(job.out))
    fd, tmp_path = tempfile.mkstemp(dir=out_dir, prefix=".embexport-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        # Atomic publish: readers see the old file or the new one, never a
        # partial write.
        os.replace(tmp_path, job.out)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return len(table)


def export_annotations(corpus: str, out: str, *, encoder: str,
                       pooling: str = "mean-subwords", max_len: int = 128) -> int:
    """Convenience wrapper assembling the job from keyword settings."""
    job = ExportJob(encoder=encoder, pooling=pooling, corpus=corpus, out=out, max_len=max_len)
    return export(job)
