"""Embedding providers and vector helpers.

Two providers ship by default: a deterministic hash-based embedder used
in tests, benchmarks, and offline demos, and an HTTP client for any
JSON embedding endpoint. Both return unit-length float64 vectors.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

import httpx
import numpy as np

from .textprep import tokenize


class EmbedError(Exception):
    """A batch could not be embedded; the request is safe to retry."""

    def __init__(self, provider: str, batch_index: int, message: str):
        super().__init__(f"provider {provider!r}, batch {batch_index}: {message}")
        self.provider = provider
        self.batch_index = batch_index
        self.retryable = True


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def fingerprint(self) -> str: ...

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity in [-1, 1]; zero-norm inputs yield 0."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> list[np.ndarray]:
    """Embed texts in order, guaranteeing one unit-length vector per text."""
    if not texts:
        raise ValueError("texts must be non-empty")
    vectors = provider.embed(list(texts))
    if len(vectors) != len(texts):
        raise EmbedError(provider.name, 0, f"expected {len(texts)} vectors, got {len(vectors)}")
    out: list[np.ndarray] = []
    for i, vec in enumerate(vectors):
        arr = np.asarray(vec, dtype=np.float64)
        if arr.shape != (provider.dim,):
            raise EmbedError(provider.name, 0, f"vector {i} has shape {arr.shape}, want ({provider.dim},)")
        if not np.all(np.isfinite(arr)):
            raise EmbedError(provider.name, 0, f"vector {i} contains non-finite values")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise EmbedError(provider.name, 0, f"vector {i} has zero norm")
        if abs(norm - 1.0) > 1e-6:
            arr = arr / norm
        out.append(arr)
    return out


class HashEmbedder:
    """Deterministic embedder: signed one-hot token vectors, summed and normalized.

    Each token hashes to one basis dimension with a hash-derived sign, so a
    text embeds as the unit-normalized signed count vector of its tokens.
    Texts sharing no tokens are (hash collisions aside) exactly orthogonal.
    An optional synonym table maps tokens onto a shared key, giving them
    identical vectors; tests use it to stage semantic-only matches.
    """

    name = "hash"

    def __init__(self, dim: int = 256, seed: int = 42, synonyms: dict[str, str] | None = None):
        if dim < 8:
            raise ValueError("dim must be at least 8")
        self.dim = dim
        self.seed = seed
        self.synonyms = dict(synonyms or {})

    def fingerprint(self) -> str:
        if self.synonyms:
            blob = json.dumps(sorted(self.synonyms.items())).encode("utf-8")
            syn = hashlib.sha256(blob).hexdigest()[:8]
        else:
            syn = "none"
        return f"hash:{self.seed}:{self.dim}:{syn}"

    def _bucket_and_sign(self, token: str) -> tuple[int, float]:
        key = self.synonyms.get(token, token)
        digest = hashlib.sha256(f"{self.seed}:{key}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % self.dim
        sign = 1.0 if digest[4] & 1 == 0 else -1.0
        return bucket, sign

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for text in texts:
            tokens = tokenize(text) or [""]
            vec = np.zeros(self.dim, dtype=np.float64)
            for tok in tokens:
                bucket, sign = self._bucket_and_sign(tok)
                vec[bucket] += sign
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                # opposite-signed collisions cancelled everything out
                bucket, sign = self._bucket_and_sign("")
                vec[bucket] = sign
                norm = 1.0
            out.append(vec / norm)
        return out


def test_embedder(dim: int = 256, seed: int = 42, synonyms: dict[str, str] | None = None) -> HashEmbedder:
    """Convenience constructor for the deterministic embedder."""
    return HashEmbedder(dim=dim, seed=seed, synonyms=synonyms)


test_embedder.__test__ = False  # not a pytest case despite the name


class HttpEmbedder:
    """Client for a JSON embedding endpoint.

    Wire format: POST {"model": ..., "input": [texts]} to the configured
    URL, expecting {"data": [{"embedding": [floats]}, ...]} back, one entry
    per input in order. The API key is read from the environment at call
    time and never stored.
    """

    name = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        api_key_env: str = "EMBED_API_KEY",
        batch_size: int = 64,
        max_inflight: int = 4,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if not base_url:
            raise ValueError("base_url is required for the http embedding provider")
        self.base_url = base_url
        self.model = model
        self.dim = dim
        self.api_key_env = api_key_env
        self.batch_size = max(1, batch_size)
        self.max_inflight = max(1, max_inflight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def fingerprint(self) -> str:
        return f"http:{self.model}:{self.dim}"

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _embed_batch(self, batch_index: int, batch: list[str]) -> list[np.ndarray]:
        payload: dict = {"input": batch}
        if self.model:
            payload["model"] = self.model
        try:
            resp = self._client.post(self.base_url, json=payload, headers=self._headers())
            resp.raise_for_status()
            data = resp.json()["data"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise EmbedError(self.name, batch_index, str(exc)) from exc
        if len(data) != len(batch):
            raise EmbedError(self.name, batch_index, f"expected {len(batch)} embeddings, got {len(data)}")
        vectors = []
        for item in data:
            arr = np.asarray(item["embedding"], dtype=np.float64)
            if arr.shape != (self.dim,):
                raise EmbedError(self.name, batch_index, f"embedding has shape {arr.shape}, want ({self.dim},)")
            norm = float(np.linalg.norm(arr))
            if norm == 0.0:
                raise EmbedError(self.name, batch_index, "zero-norm embedding returned")
            vectors.append(arr / norm)
        return vectors

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        batches = [list(texts[i : i + self.batch_size]) for i in range(0, len(texts), self.batch_size)]
        if len(batches) == 1:
            return self._embed_batch(0, batches[0])
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            results = list(pool.map(lambda pair: self._embed_batch(*pair), enumerate(batches)))
        return [vec for batch in results for vec in batch]


class CountingEmbedder:
    """Wraps a provider and counts how many texts it embeds."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.calls = 0

    @property
    def name(self) -> str:
        return self.inner.name

    @property
    def dim(self) -> int:
        return self.inner.dim

    def fingerprint(self) -> str:
        return self.inner.fingerprint()

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.calls += len(texts)
        return self.inner.embed(texts)
