"""Pre-computed column-embedding store with exact cosine top-k retrieval.

The scan is exact rather than approximate: schemas have at most a few
hundred columns, and exactness keeps the oracle-equivalence property
testable. One index is built per database.

On-disk format: magic ``LSQLIDX1``; header with dim, entry count,
provider fingerprint, and a SHA-256 checksum of the payload; payload is
a JSON metadata block followed by fixed-width little-endian float32
vector records.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .contrastive import ProjectionHead, head_fingerprint
from .errors import ContractError, FormatError
from .schema import ColumnRef, DatabaseSchema, render_column_document

log = logging.getLogger(__name__)

MAGIC = b"LSQLIDX1"


@dataclass(frozen=True)
class IndexEntry:
    column_ref: ColumnRef
    vector: np.ndarray
    document_text: str


@dataclass(frozen=True)
class SchemaIndex:
    """Immutable per-database index; entries follow schema column order."""

    db_id: str
    dim: int
    entries: tuple[IndexEntry, ...]
    provider_fingerprint: str
    _matrix: np.ndarray = field(default=None, repr=False, compare=False)

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            stacked = np.stack([e.vector for e in self.entries])
            object.__setattr__(self, "_matrix", stacked)
        return self._matrix


def build_index(schema: DatabaseSchema, provider,
                head: ProjectionHead | None = None) -> SchemaIndex:
    """Embed every column document (projected through ``head`` when given)."""
    if not schema.columns:
        raise ValueError(f"schema {schema.db_id} has no columns")
    documents = [render_column_document(col) for col in schema.columns]
    vectors = provider.embed_texts(documents)
    if head is not None:
        vectors = head.apply(vectors)
    fingerprint = f"{provider.fingerprint}|{head_fingerprint(head)}"
    entries = tuple(
        IndexEntry(column_ref=col.ref, vector=vectors[i], document_text=documents[i])
        for i, col in enumerate(schema.columns)
    )
    return SchemaIndex(
        db_id=schema.db_id,
        dim=vectors.shape[1],
        entries=entries,
        provider_fingerprint=fingerprint,
    )


def top_k(index: SchemaIndex, query, k: int) -> list[tuple[ColumnRef, float]]:
    """Top-k entries by cosine, descending; ties break by column order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise ContractError(f"query dim {query.shape} does not match index dim {index.dim}")
    scores = index.matrix() @ query
    order = np.argsort(-scores, kind="stable")[:k]
    return [(index.entries[i].column_ref, float(scores[i])) for i in order]


def brute_force_top_k(entries, query, k: int) -> list[tuple[ColumnRef, float]]:
    """Reference oracle for ``top_k``: exhaustive scan, same tie-break rule."""
    if k < 1:
        raise ValueError("k must be >= 1")
    entries = list(entries)
    query = np.asarray(query, dtype=np.float64)
    if entries and query.shape != entries[0].vector.shape:
        raise ContractError(
            f"query dim {query.shape} does not match entry dim {entries[0].vector.shape}"
        )
    scored = [(float(np.dot(e.vector, query)), i) for i, e in enumerate(entries)]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [(entries[i].column_ref, score) for score, i in scored[:k]]


def save_index(index: SchemaIndex, path) -> None:
    meta = {
        "db_id": index.db_id,
        "entries": [
            {
                "table": e.column_ref.table_name,
                "column": e.column_ref.column_name,
                "document": e.document_text,
            }
            for e in index.entries
        ],
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    vec_bytes = index.matrix().astype("<f4").tobytes()
    payload = meta_bytes + vec_bytes
    fp_bytes = index.provider_fingerprint.encode("utf-8")
    header = MAGIC
    header += struct.pack("<IIHI", index.dim, len(index.entries), len(fp_bytes), len(meta_bytes))
    header += fp_bytes
    header += hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(header + payload)


def read_fingerprint(path) -> str:
    """Read just the provider fingerprint from an index file header."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + 14)
        if head[: len(MAGIC)] != MAGIC:
            raise FormatError(f"{path}: bad magic bytes")
        _dim, _count, fp_len, _meta_len = struct.unpack_from("<IIHI", head, len(MAGIC))
        return fh.read(fp_len).decode("utf-8")


def load_index(path, expected_fingerprint: str | None = None) -> SchemaIndex:
    """Load an index file; verifies magic and payload checksum.

    When ``expected_fingerprint`` is given and differs from the stored one,
    a staleness warning is logged and the stored index is returned anyway.
    """
    blob = open(path, "rb").read()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic bytes")
    try:
        dim, count, fp_len, meta_len = struct.unpack_from("<IIHI", blob, len(MAGIC))
        offset = len(MAGIC) + 14
        fingerprint = blob[offset:offset + fp_len].decode("utf-8")
        offset += fp_len
        checksum = blob[offset:offset + 32]
        offset += 32
        payload = blob[offset:]
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from exc
    if hashlib.sha256(payload).digest() != checksum:
        raise FormatError(f"{path}: checksum mismatch (truncated or corrupted file)")
    meta = json.loads(payload[:meta_len].decode("utf-8"))
    vectors = np.frombuffer(payload, dtype="<f4", offset=meta_len)
    if vectors.size != count * dim:
        raise FormatError(f"{path}: vector block has {vectors.size} floats, expected {count * dim}")
    vectors = vectors.reshape(count, dim).astype(np.float64)
    if expected_fingerprint is not None and expected_fingerprint != fingerprint:
        log.warning("%s: index fingerprint %r does not match expected %r (stale index?)",
                    path, fingerprint, expected_fingerprint)
    db_id = meta["db_id"]
    entries = tuple(
        IndexEntry(
            column_ref=ColumnRef(db_id, row["table"], row["column"]),
            vector=vectors[i],
            document_text=row["document"],
        )
        for i, row in enumerate(meta["entries"])
    )
    return SchemaIndex(db_id=db_id, dim=dim, entries=entries,
                       provider_fingerprint=fingerprint)
