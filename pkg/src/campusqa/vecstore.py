"""Persistent vector store with exact nearest-neighbour search.

Records live in memory keyed by id; search is a full linear scan, which
is exact and more than fast enough for a corpus of tens of thousands of
chunks. Persistence is a versioned directory format (manifest + JSONL
records + a float64 matrix), documented in docs/store-format.md.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1

MANIFEST_FILE = "manifest.json"
RECORDS_FILE = "records.jsonl"
VECTORS_FILE = "vectors.npy"


class StoreError(Exception):
    pass


@dataclass
class VectorRecord:
    id: str
    vector: np.ndarray
    document: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class UpsertStats:
    inserted: int
    replaced: int


class VectorStore:
    """Exact-search vector store with replace-by-id upsert semantics."""

    def __init__(self, dim: int, fingerprint: str):
        if dim < 1:
            raise StoreError("dim must be positive")
        self.dim = dim
        self.fingerprint = fingerprint
        self._records: dict[str, VectorRecord] = {}
        self._lock = threading.RLock()
        self._matrix: np.ndarray | None = None
        self._ids: list[str] | None = None

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def get(self, record_id: str) -> VectorRecord | None:
        with self._lock:
            return self._records.get(record_id)

    def records(self) -> list[VectorRecord]:
        with self._lock:
            return list(self._records.values())

    def source_index(self) -> dict[tuple[str, str], list[str]]:
        """Map (table, source_id) metadata to the record ids carrying it."""
        index: dict[tuple[str, str], list[str]] = {}
        with self._lock:
            for rec in self._records.values():
                key = (str(rec.metadata.get("table", "")), str(rec.metadata.get("source_id", "")))
                index.setdefault(key, []).append(rec.id)
        return index

    def upsert(self, records: Sequence[VectorRecord]) -> UpsertStats:
        """Insert new ids and fully replace existing ones.

        The batch is validated before anything is applied: a single bad
        record rejects the whole batch and leaves the store untouched.
        """
        prepared: list[VectorRecord] = []
        for rec in records:
            if not rec.id:
                raise StoreError("record id must be non-empty")
            arr = np.asarray(rec.vector, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise StoreError(
                    f"record {rec.id!r} has dimension {arr.shape}, store expects ({self.dim},)"
                )
            if not np.all(np.isfinite(arr)):
                raise StoreError(f"record {rec.id!r} has non-finite vector entries")
            prepared.append(VectorRecord(rec.id, arr, rec.document, dict(rec.metadata)))
        inserted = replaced = 0
        with self._lock:
            for rec in prepared:
                if rec.id in self._records:
                    replaced += 1
                else:
                    inserted += 1
                self._records[rec.id] = rec
            self._matrix = None
        return UpsertStats(inserted, replaced)

    def delete(self, ids: Iterable[str]) -> int:
        removed = 0
        with self._lock:
            for record_id in ids:
                if self._records.pop(record_id, None) is not None:
                    removed += 1
            if removed:
                self._matrix = None
        return removed

    def _snapshot(self) -> tuple[np.ndarray, list[str]]:
        with self._lock:
            if self._matrix is None:
                self._ids = sorted(self._records)
                if self._ids:
                    self._matrix = np.stack([self._records[i].vector for i in self._ids])
                else:
                    self._matrix = np.zeros((0, self.dim))
            return self._matrix, list(self._ids or [])

    def query(self, vector: Sequence[float], k: int) -> list[tuple[str, float]]:
        """Exact k-nearest search by cosine distance (1 - cosine).

        Returns up to ``min(k, count)`` pairs ordered by ascending
        distance, ties broken by id.
        """
        if k < 1:
            raise StoreError("k must be at least 1")
        q = np.asarray(vector, dtype=np.float64)
        if q.shape != (self.dim,):
            raise StoreError(f"query has dimension {q.shape}, store expects ({self.dim},)")
        matrix, ids = self._snapshot()
        if not ids:
            return []
        qnorm = float(np.linalg.norm(q))
        row_norms = np.linalg.norm(matrix, axis=1)
        if qnorm == 0.0:
            cos = np.zeros(len(ids))
        else:
            safe = np.where(row_norms == 0.0, 1.0, row_norms)
            cos = (matrix @ q) / (safe * qnorm)
            cos = np.where(row_norms == 0.0, 0.0, cos)
        dist = 1.0 - cos
        order = sorted(range(len(ids)), key=lambda i: (dist[i], ids[i]))[:k]
        return [(ids[i], float(dist[i])) for i in order]

    # -- persistence ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the store to a directory, replacing files atomically."""
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        with self._lock:
            ids = sorted(self._records)
            matrix = (
                np.stack([self._records[i].vector for i in ids])
                if ids
                else np.zeros((0, self.dim))
            )
            lines = [
                json.dumps(
                    {
                        "id": rec_id,
                        "document": self._records[rec_id].document,
                        "metadata": self._records[rec_id].metadata,
                    },
                    ensure_ascii=False,
                )
                for rec_id in ids
            ]
            manifest = {
                "format_version": FORMAT_VERSION,
                "dim": self.dim,
                "fingerprint": self.fingerprint,
                "count": len(ids),
            }
        _write_atomic(root / VECTORS_FILE, lambda p: np.save(p, matrix, allow_pickle=False), suffix=".npy")
        _write_atomic(root / RECORDS_FILE, lambda p: Path(p).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"))
        _write_atomic(root / MANIFEST_FILE, lambda p: Path(p).write_text(json.dumps(manifest, indent=2), encoding="utf-8"))

    @classmethod
    def load(cls, path: str | Path, expected_fingerprint: str | None = None) -> "VectorStore":
        root = Path(path)
        manifest_path = root / MANIFEST_FILE
        if not manifest_path.exists():
            raise StoreError(f"no vector store at {root} (missing {MANIFEST_FILE})")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise StoreError(
                f"unsupported store format version {manifest.get('format_version')!r}"
            )
        fingerprint = manifest["fingerprint"]
        if expected_fingerprint is not None and fingerprint != expected_fingerprint:
            raise StoreError(
                "embedding provider fingerprint mismatch: store was built with "
                f"{fingerprint!r} but the configured provider is {expected_fingerprint!r}; "
                "switch the provider back or rebuild the store with a fresh sync"
            )
        store = cls(int(manifest["dim"]), fingerprint)
        matrix = np.load(root / VECTORS_FILE, allow_pickle=False)
        if matrix.ndim != 2 or (matrix.shape[0] and matrix.shape[1] != store.dim):
            raise StoreError(f"vector matrix shape {matrix.shape} does not match dim {store.dim}")
        lines = (root / RECORDS_FILE).read_text(encoding="utf-8").splitlines()
        if len(lines) != matrix.shape[0] or len(lines) != int(manifest["count"]):
            raise StoreError("record count mismatch between manifest, records, and vectors")
        for i, line in enumerate(lines):
            row = json.loads(line)
            store._records[row["id"]] = VectorRecord(
                row["id"], matrix[i].astype(np.float64), row["document"], row.get("metadata", {})
            )
        return store

    @classmethod
    def open_or_create(
        cls, path: str | Path, dim: int, fingerprint: str
    ) -> "VectorStore":
        root = Path(path)
        if (root / MANIFEST_FILE).exists():
            store = cls.load(root, expected_fingerprint=fingerprint)
            if store.dim != dim:
                raise StoreError(
                    f"store at {root} has dim {store.dim}, configured provider has dim {dim}"
                )
            return store
        return cls(dim, fingerprint)


def _write_atomic(target: Path, writer, suffix: str = "") -> None:
    tmp = target.with_name(target.name + ".tmp" + suffix)
    writer(str(tmp))
    os.replace(tmp, target)
