"""Text embedding providers and cosine similarity.

Two providers share one contract: a deterministic hashing embedder for
tests and offline runs, and an HTTP client speaking the de-facto
embeddings API shape ({"input": [...], "model": ...} -> {"data": [...]}).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension real vector; values are float32-representable."""

    values: tuple[float, ...]
    normalized: bool = False

    @property
    def dims(self) -> int:
        return len(self.values)

    def validate(self) -> None:
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError("vector has non-finite entries")
        if self.normalized and abs(float(np.linalg.norm(arr)) - 1.0) > 1e-6:
            raise ValueError("vector flagged normalized but norm != 1")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|); raises on dimension mismatch or zero vectors."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")
    va, vb = a.as_array(), b.as_array()
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero vector")
    return float(np.dot(va, vb)) / (na * nb)


class EmbeddingProvider(Protocol):
    @property
    def dims(self) -> int: ...

    def fingerprint(self) -> str: ...

    def embed(self, text: str) -> EmbeddingVector: ...

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class HashEmbedder:
    """Deterministic mock provider: seeded token hashing.

    Each token hashes to a dimension index and a positive weight, so
    identical text gives identical vectors and shared tokens give strictly
    positive cosine similarity. Vectors are L2-normalized float32.
    """

    def __init__(self, dims: int = 64, seed: int = 0):
        if dims < 1:
            raise ValueError("dims must be >= 1")
        self._dims = dims
        self._seed = seed

    @property
    def dims(self) -> int:
        return self._dims

    def fingerprint(self) -> str:
        return f"hash:dims={self._dims}:seed={self._seed}"

    def token_slot(self, token: str) -> tuple[int, float]:
        """(dimension index, weight) a token contributes; weight in [0.5, 1.5)."""
        digest = hashlib.blake2b(
            f"{self._seed}:{token}".encode("utf-8"), digest_size=16
        ).digest()
        index = int.from_bytes(digest[:8], "little") % self._dims
        weight = 0.5 + int.from_bytes(digest[8:], "little") / 2**64
        return index, weight

    def embed(self, text: str) -> EmbeddingVector:
        tokens = tokenize(text)
        if not tokens:
            raise EmbeddingError("cannot embed empty text")
        acc = np.zeros(self._dims, dtype=np.float64)
        for token in tokens:
            index, weight = self.token_slot(token)
            acc[index] += weight
        acc /= np.linalg.norm(acc)
        values = tuple(float(x) for x in acc.astype(np.float32))
        return EmbeddingVector(values=values, normalized=True)

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.embed(t) for t in texts]


def build_embeddings_payload(texts: Iterable[str], model: str) -> bytes:
    """Wire body for the embeddings endpoint; byte-stable for golden tests."""
    body = {"input": list(texts), "model": model}
    return json.dumps(body, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


class HttpEmbedder:
    """Client for an embeddings HTTP service."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dims: int,
        api_key: str | None = None,
        timeout: float = 30.0,
        batch_size: int = 64,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._dims = dims
        self.batch_size = batch_size
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @property
    def dims(self) -> int:
        return self._dims

    def fingerprint(self) -> str:
        return f"http:{self.model}:dims={self._dims}"

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if any(not t.strip() for t in texts):
            raise EmbeddingError("cannot embed empty text")
        out: list[EmbeddingVector] = []
        url = f"{self.base_url}/v1/embeddings"
        for start in range(0, len(texts), self.batch_size):
            chunk = list(texts[start : start + self.batch_size])
            try:
                response = self._client.post(url, content=build_embeddings_payload(chunk, self.model))
            except httpx.TransportError as exc:
                raise EmbeddingError(f"embedding endpoint unreachable: {url}: {exc}") from exc
            if response.status_code != 200:
                raise EmbeddingError(
                    f"embedding endpoint {url} returned {response.status_code}: {response.text[:500]}"
                )
            data = response.json().get("data", [])
            if len(data) != len(chunk):
                raise EmbeddingError(
                    f"embedding endpoint returned {len(data)} vectors for {len(chunk)} inputs"
                )
            for entry in data:
                raw = np.asarray(entry["embedding"], dtype=np.float32)
                if raw.shape != (self._dims,):
                    raise EmbeddingError(
                        f"embedding dims {raw.shape[0]} do not match configured {self._dims}"
                    )
                out.append(EmbeddingVector(values=tuple(float(x) for x in raw)))
        return out

    def close(self) -> None:
        self._client.close()
