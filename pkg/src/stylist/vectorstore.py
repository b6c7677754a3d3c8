"""Exact top-k cosine index over document records, with binary persistence.

Search is a full scan: desk-scale corpora do not need approximate
structures, and exactness keeps results reproducible. Vectors are
quantized to float32 at ingest so persisted indexes round-trip bit-exact
(file format: little-endian float32).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .embedding import EmbeddingVector

FORMAT_VERSION = 1
_MAGIC = b"STVX"

DOC_KINDS = ("item", "knowledge", "qa")


class VectorStoreError(RuntimeError):
    pass


class IndexVersionError(VectorStoreError):
    pass


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    text: str
    vector: EmbeddingVector
    kind: str = "knowledge"
    tags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float


def kind_filter(kinds: Iterable[str]) -> Callable[[DocumentRecord], bool]:
    wanted = frozenset(kinds)
    return lambda doc: doc.kind in wanted


def _quantize(vector: EmbeddingVector) -> EmbeddingVector:
    values = tuple(float(x) for x in np.asarray(vector.values, dtype=np.float32))
    return EmbeddingVector(values=values, normalized=vector.normalized)


class VectorIndex:
    """In-memory doc store with exact cosine top-k search."""

    def __init__(self, dims: int, provider_fingerprint: str = ""):
        if dims < 1:
            raise ValueError("dims must be >= 1")
        self.dims = dims
        self.provider_fingerprint = provider_fingerprint
        self._docs: dict[str, DocumentRecord] = {}
        self._cache: tuple[list[str], np.ndarray, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self._docs)

    def get(self, doc_id: str) -> DocumentRecord | None:
        return self._docs.get(doc_id)

    def documents(self) -> list[DocumentRecord]:
        return [self._docs[i] for i in sorted(self._docs)]

    def upsert(self, docs: Sequence[DocumentRecord]) -> int:
        """Insert or replace docs by doc_id; returns the index size after.

        Validates every doc before mutating, so a bad batch leaves the
        index unchanged.
        """
        prepared = []
        for doc in docs:
            if doc.vector.dims != self.dims:
                raise VectorStoreError(
                    f"doc {doc.doc_id!r}: vector dims {doc.vector.dims} != index dims {self.dims}"
                )
            if doc.kind not in DOC_KINDS:
                raise VectorStoreError(f"doc {doc.doc_id!r}: unknown kind {doc.kind!r}")
            quantized = _quantize(doc.vector)
            quantized.validate()
            prepared.append(
                DocumentRecord(
                    doc_id=doc.doc_id,
                    text=doc.text,
                    vector=quantized,
                    kind=doc.kind,
                    tags=dict(doc.tags),
                )
            )
        for doc in prepared:
            self._docs[doc.doc_id] = doc
        self._cache = None
        return len(self._docs)

    def _scan_cache(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        if self._cache is None:
            ids = sorted(self._docs)
            matrix = np.array(
                [self._docs[i].vector.values for i in ids], dtype=np.float64
            ).reshape(len(ids), self.dims)
            norms = np.linalg.norm(matrix, axis=1)
            self._cache = (ids, matrix, norms)
        return self._cache

    def search_topk(
        self,
        query: EmbeddingVector,
        k: int,
        doc_filter: Callable[[DocumentRecord], bool] | None = None,
    ) -> list[SearchHit]:
        """Exact top-k by cosine; descending score, ties by ascending doc_id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if query.dims != self.dims:
            raise VectorStoreError(f"query dims {query.dims} != index dims {self.dims}")
        if not self._docs:
            return []
        q = query.as_array()
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            raise ValueError("cannot search with a zero query vector")

        ids, matrix, norms = self._scan_cache()
        if doc_filter is not None:
            keep = [i for i, doc_id in enumerate(ids) if doc_filter(self._docs[doc_id])]
            if not keep:
                return []
            ids = [ids[i] for i in keep]
            matrix = matrix[keep]
            norms = norms[keep]
        scores = (matrix @ q) / (norms * qnorm)
        ranked = sorted(zip(ids, scores), key=lambda pair: (-pair[1], pair[0]))
        return [SearchHit(doc_id=i, score=float(s)) for i, s in ranked[:k]]

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        ids = sorted(self._docs)
        header = json.dumps(
            {
                "dims": self.dims,
                "count": len(ids),
                "provider_fingerprint": self.provider_fingerprint,
            },
            ensure_ascii=False,
        ).encode("utf-8")
        with path.open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for doc_id in ids:
                doc = self._docs[doc_id]
                meta = json.dumps(
                    {
                        "doc_id": doc.doc_id,
                        "text": doc.text,
                        "kind": doc.kind,
                        "tags": doc.tags,
                        "normalized": doc.vector.normalized,
                    },
                    ensure_ascii=False,
                ).encode("utf-8")
                fh.write(struct.pack("<I", len(meta)))
                fh.write(meta)
                fh.write(np.asarray(doc.vector.values, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        data = path.read_bytes()
        view = memoryview(data)

        def take(n: int) -> memoryview:
            nonlocal view
            if len(view) < n:
                raise VectorStoreError(f"truncated index file: {path}")
            chunk, view = view[:n], view[n:]
            return chunk

        if bytes(take(4)) != _MAGIC:
            raise VectorStoreError(f"not an index file: {path}")
        (version,) = struct.unpack("<I", take(4))
        if version != FORMAT_VERSION:
            raise IndexVersionError(
                f"index file version {version} unsupported (expected {FORMAT_VERSION}): {path}"
            )
        (header_len,) = struct.unpack("<I", take(4))
        header = json.loads(bytes(take(header_len)).decode("utf-8"))
        dims = int(header["dims"])
        count = int(header["count"])
        index = cls(dims=dims, provider_fingerprint=header.get("provider_fingerprint", ""))
        docs = []
        for _ in range(count):
            (meta_len,) = struct.unpack("<I", take(4))
            meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
            values = np.frombuffer(take(dims * 4), dtype="<f4")
            docs.append(
                DocumentRecord(
                    doc_id=meta["doc_id"],
                    text=meta["text"],
                    vector=EmbeddingVector(
                        values=tuple(float(x) for x in values),
                        normalized=bool(meta.get("normalized", False)),
                    ),
                    kind=meta.get("kind", "knowledge"),
                    tags=dict(meta.get("tags", {})),
                )
            )
        if len(view):
            raise VectorStoreError(f"trailing bytes after {count} records: {path}")
        index.upsert(docs)
        return index
