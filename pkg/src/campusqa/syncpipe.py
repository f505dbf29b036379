"""Incremental relational-to-vector synchronization.

Each run selects only rows whose ingestion timestamp passed the
per-table cursor, renders them into short facet documents, embeds, and
upserts into the vector store under deterministic ids. The cursor
advances only after a table completes, so a failed embedding run simply
repeats that table's work on the next sync.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from .embed import EmbeddingProvider, embed_texts
from .ingest import WEB_TABLE, RelationalStore, SourceRow, WebSnapshot, url_key
from .textprep import split_recursive
from .vecstore import VectorRecord, VectorStore

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RenderedDoc:
    id: str
    text: str
    metadata: dict


# -- per-table rendering templates ------------------------------------------

FacetFn = Callable[[dict[str, str]], list[tuple[str, str]]]
_RENDERERS: dict[str, FacetFn] = {}


def register_renderer(table: str, fn: FacetFn) -> None:
    _RENDERERS[table] = fn


def _get(fields: dict[str, str], *names: str) -> str:
    lowered = {k.lower(): v for k, v in fields.items()}
    for name in names:
        value = lowered.get(name.lower(), "").strip()
        if value:
            return value
    return ""


def _present(value: str) -> bool:
    return bool(value) and value.lower() != "none"


def _faculty_facets(fields: dict[str, str]) -> list[tuple[str, str]]:
    name = _get(fields, "Name")
    initial = _get(fields, "Initial")
    who = f"{name} ({initial})" if name and initial else name or initial
    designation = _get(fields, "Designation")
    status = _get(fields, "Status")
    room = _get(fields, "Room")
    email = _get(fields, "Email")
    facets = []
    if who and designation:
        text = f"Faculty {who} is {designation}"
        if status:
            text += f", {status}"
        if room:
            text += f", room {room}"
        facets.append(("role", text + "."))
    if who and email:
        facets.append(("email", f"Email of {who}: {email}."))
    return facets


def _prerequisite_facets(fields: dict[str, str]) -> list[tuple[str, str]]:
    course = _get(fields, "Course")
    prereq = _get(fields, "Pre-Requisite", "Prerequisite")
    chain = _get(fields, "Full Chain", "Full Chain Pre-Requisite", "Full Chain Prerequisite")
    facets = []
    if course and _present(prereq):
        facets.append(("prereq", f"Course {course} has prerequisite {prereq}."))
    if course and _present(chain):
        facets.append(("chain", f"Full prerequisite chain for {course}: {chain}."))
    return facets


def _qa_facets(fields: dict[str, str]) -> list[tuple[str, str]]:
    question = _get(fields, "Question")
    answer = _get(fields, "Answer")
    if question and answer:
        return [("qa", f"Question: {question} Answer: {answer}")]
    return []


def _schedule_facets(fields: dict[str, str]) -> list[tuple[str, str]]:
    course = _get(fields, "Course")
    section = _get(fields, "Section")
    faculty = _get(fields, "Faculty", "Instructor", "Initial")
    day = _get(fields, "Day")
    hour = _get(fields, "Time", "Hour")
    room = _get(fields, "Room")
    label = f"Course {course} section {section}" if section else f"Course {course}"
    facets = []
    if course and day and hour:
        text = f"{label} meets {day} {hour}"
        if room:
            text += f" in room {room}"
        facets.append(("meeting", text + "."))
    if course and faculty:
        facets.append(("instructor", f"{label} is taught by {faculty}."))
    return facets


def _generic_facets(fields: dict[str, str]) -> list[tuple[str, str]]:
    body = "; ".join(f"{col}: {val}" for col, val in fields.items())
    return [("record", body or "empty record")]


register_renderer("faculty", _faculty_facets)
register_renderer("prerequisite", _prerequisite_facets)
register_renderer("prerequisites", _prerequisite_facets)
register_renderer("qa", _qa_facets)
register_renderer("englishqa", _qa_facets)
register_renderer("schedule", _schedule_facets)


def render_row(
    table: str,
    row: SourceRow,
    chunk_size: int = 1000,
    overlap: int = 200,
    rendered_at: str = "",
) -> list[RenderedDoc]:
    """Render one relational row into facet documents for embedding.

    Known tables get compact per-facet sentences; anything else falls
    back to a "col: value" dump. Facet texts longer than ``chunk_size``
    are split with overlap, and every row yields at least one document.
    """
    renderer = _RENDERERS.get(table, _generic_facets)
    facets = renderer(row.field_values) or _generic_facets(row.field_values)
    return _docs_from_facets(table, row.row_key, facets, chunk_size, overlap, rendered_at)


def render_snapshot(
    snapshot: WebSnapshot,
    chunk_size: int = 1000,
    overlap: int = 200,
    rendered_at: str = "",
) -> list[RenderedDoc]:
    """Render the latest text of a webpage; ids omit the version so a new
    version's chunks replace the old ones."""
    text = snapshot.text.strip() or f"page {snapshot.url}"
    facets = [("page", text)]
    return _docs_from_facets(WEB_TABLE, url_key(snapshot.url), facets, chunk_size, overlap, rendered_at)


def _docs_from_facets(
    table: str,
    source_id: str,
    facets: list[tuple[str, str]],
    chunk_size: int,
    overlap: int,
    rendered_at: str,
) -> list[RenderedDoc]:
    docs = []
    for facet, text in facets:
        if len(text) > chunk_size:
            pieces = [c.text for c in split_recursive(text, chunk_size, overlap)]
        else:
            pieces = [text]
        for i, piece in enumerate(pieces):
            docs.append(
                RenderedDoc(
                    id=f"{table}:{source_id}:{facet}:{i}",
                    text=piece,
                    metadata={
                        "table": table,
                        "source_id": source_id,
                        "chunk_index": i,
                        "rendered_at": rendered_at,
                    },
                )
            )
    return docs


# -- cursor -------------------------------------------------------------------


class IngestCursor:
    """Per-table sync position: newest timestamp plus {row_key: row_hash}
    for the rows consumed at that timestamp.

    Keeping key-and-hash pairs makes selection exact even when several
    ingest runs (including content updates) land within the same
    one-second timestamp.
    """

    def __init__(self, entries: dict[str, dict] | None = None):
        self.entries = entries or {}

    @classmethod
    def load(cls, path: str | Path) -> "IngestCursor":
        p = Path(path)
        if not p.exists():
            return cls()
        return cls(json.loads(p.read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_name(p.name + ".tmp")
        tmp.write_text(json.dumps(self.entries, indent=2), encoding="utf-8")
        os.replace(tmp, p)

    def newer_than(self, table: str) -> tuple[str, dict[str, str]] | None:
        entry = self.entries.get(table)
        if not entry:
            return None
        return entry["ts"], dict(entry["keys"])

    def advance(self, table: str, ts: str, keys: dict[str, str]) -> None:
        previous = self.entries.get(table)
        if previous and previous["ts"] == ts:
            merged = dict(previous["keys"])
            merged.update(keys)
            keys = merged
        self.entries[table] = {"ts": ts, "keys": dict(keys)}


# -- sync ----------------------------------------------------------------------


@dataclass
class SyncStats:
    rows_scanned: int = 0
    rows_selected: int = 0
    docs_embedded: int = 0
    upserted: int = 0
    stale_deleted: int = 0
    elapsed: float = 0.0

    def as_dict(self) -> dict:
        return {
            "rows_scanned": self.rows_scanned,
            "rows_selected": self.rows_selected,
            "docs_embedded": self.docs_embedded,
            "upserted": self.upserted,
            "stale_deleted": self.stale_deleted,
            "elapsed": self.elapsed,
        }


class SyncBusy(Exception):
    """Another sync run already holds the job lock."""


class SyncError(Exception):
    def __init__(self, table: str, cause: Exception, stats: SyncStats):
        super().__init__(f"sync failed while processing {table!r}: {cause}")
        self.table = table
        self.cause = cause
        self.stats = stats


class Syncer:
    """Pushes new relational rows and webpage versions into the vector store."""

    def __init__(
        self,
        relational: RelationalStore,
        vectors: VectorStore,
        provider: EmbeddingProvider,
        cursor_path: str | Path,
        vector_dir: str | Path,
        chunk_size: int = 1000,
        overlap: int = 200,
        batch_size: int = 64,
        clock: Callable[[], datetime] | None = None,
    ):
        self.relational = relational
        self.vectors = vectors
        self.provider = provider
        self.cursor_path = Path(cursor_path)
        self.vector_dir = Path(vector_dir)
        self.chunk_size = chunk_size
        self.overlap = overlap
        self.batch_size = max(1, batch_size)
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._job_lock = threading.Lock()

    @property
    def busy(self) -> bool:
        return self._job_lock.locked()

    def sync(self) -> SyncStats:
        if not self._job_lock.acquire(blocking=False):
            raise SyncBusy("a sync run is already in progress")
        try:
            return self._run()
        finally:
            self._job_lock.release()

    def _run(self) -> SyncStats:
        started = time.perf_counter()
        cursor = IngestCursor.load(self.cursor_path)
        stats = SyncStats()
        rendered_at = self._clock().astimezone(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
        source_ids: dict | None = None
        mutated = False
        try:
            for table in self.relational.table_names():
                stats.rows_scanned += self.relational.row_count(table)
                rows = self.relational.rows(table, newer_than=cursor.newer_than(table))
                if not rows:
                    continue
                stats.rows_selected += len(rows)
                units = [
                    (row.row_key, render_row(table, row, self.chunk_size, self.overlap, rendered_at))
                    for row in rows
                ]
                if source_ids is None:
                    source_ids = self.vectors.source_index()
                self._embed_and_upsert(units, source_ids, stats)
                max_ts = max(row.ingested_at for row in rows)
                cursor.advance(
                    table, max_ts, {r.row_key: r.row_hash for r in rows if r.ingested_at == max_ts}
                )
                mutated = True
            snaps = self.relational.latest_snapshots(newer_than=cursor.newer_than(WEB_TABLE))
            stats.rows_scanned += len(self.relational.snapshot_urls())
            if snaps:
                stats.rows_selected += len(snaps)
                units = [
                    (url_key(s.url), render_snapshot(s, self.chunk_size, self.overlap, rendered_at))
                    for s in snaps
                ]
                if source_ids is None:
                    source_ids = self.vectors.source_index()
                self._embed_and_upsert(units, source_ids, stats, table=WEB_TABLE)
                max_ts = max(s.fetched_at for s in snaps)
                cursor.advance(
                    WEB_TABLE,
                    max_ts,
                    {url_key(s.url): s.content_hash for s in snaps if s.fetched_at == max_ts},
                )
                mutated = True
        except Exception as exc:
            # cursor for completed tables is already advanced; persist the
            # partial progress so a rerun only repeats the failed table
            if stats.upserted or stats.stale_deleted:
                self.vectors.save(self.vector_dir)
            cursor.save(self.cursor_path)
            stats.elapsed = time.perf_counter() - started
            failed_table = getattr(exc, "_sync_table", "unknown")
            log.warning("sync aborted in table %r after %d docs", failed_table, stats.docs_embedded)
            raise SyncError(failed_table, exc, stats) from exc
        if mutated:
            self.vectors.save(self.vector_dir)
            cursor.save(self.cursor_path)
        stats.elapsed = time.perf_counter() - started
        log.info(
            "sync: %d/%d rows selected, %d docs embedded, %d upserted in %.2fs",
            stats.rows_selected, stats.rows_scanned, stats.docs_embedded, stats.upserted, stats.elapsed,
        )
        return stats

    def _embed_and_upsert(
        self,
        units: Sequence[tuple[str, list[RenderedDoc]]],
        source_ids: dict[tuple[str, str], list[str]],
        stats: SyncStats,
        table: str | None = None,
    ) -> None:
        docs = [doc for _, unit_docs in units for doc in unit_docs]
        for start in range(0, len(docs), self.batch_size):
            batch = docs[start : start + self.batch_size]
            try:
                vectors = embed_texts(self.provider, [d.text for d in batch])
            except Exception as exc:
                exc._sync_table = table or batch[0].metadata["table"]
                raise
            records = [
                VectorRecord(doc.id, vec, doc.text, doc.metadata)
                for doc, vec in zip(batch, vectors)
            ]
            result = self.vectors.upsert(records)
            stats.docs_embedded += len(batch)
            stats.upserted += result.inserted + result.replaced
        # drop chunks that the newest rendering no longer produces
        for _, unit_docs in units:
            if not unit_docs:
                continue
            meta = unit_docs[0].metadata
            key = (meta["table"], meta["source_id"])
            fresh = {d.id for d in unit_docs}
            stale = [rid for rid in source_ids.get(key, []) if rid not in fresh]
            if stale:
                stats.stale_deleted += self.vectors.delete(stale)


# -- ingestion benchmark --------------------------------------------------------


@dataclass
class PhaseResult:
    name: str
    ingest_s: float
    sync_s: float
    embed_calls: int
    stats: SyncStats

    @property
    def total_s(self) -> float:
        return self.ingest_s + self.sync_s


@dataclass
class BenchReport:
    phases: list[PhaseResult] = field(default_factory=list)

    def phase(self, name: str) -> PhaseResult:
        for p in self.phases:
            if p.name == name:
                return p
        raise KeyError(name)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["phase", "ingest_seconds", "sync_seconds", "total_seconds", "embed_calls", "docs_embedded"])
            for p in self.phases:
                writer.writerow(
                    [p.name, f"{p.ingest_s:.4f}", f"{p.sync_s:.4f}", f"{p.total_s:.4f}", p.embed_calls, p.stats.docs_embedded]
                )


def bench_ingest(
    workdir: str | Path,
    rows: int = 500,
    seed: int = 7,
    dim: int = 256,
    out_csv: str | Path | None = None,
) -> BenchReport:
    """Time a fresh sync, a 10%-modified sync, and a no-op sync.

    Each phase re-ingests the sample CSV and then syncs; ingest and sync
    wall times are reported separately (the headline per-phase time is
    the sync time, since that is where embedding work happens).
    """
    from .embed import CountingEmbedder, HashEmbedder
    from .sampledata import qa_csv_bytes

    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    relational = RelationalStore(workdir / "relational.db")
    provider = CountingEmbedder(HashEmbedder(dim=dim, seed=seed))
    vectors = VectorStore(provider.dim, provider.fingerprint())
    syncer = Syncer(relational, vectors, provider, workdir / "cursor.json", workdir / "vectors")

    fresh_csv = qa_csv_bytes(n=rows, seed=seed)
    updated_csv = qa_csv_bytes(n=rows, seed=seed, modified=True)
    report = BenchReport()
    for name, payload in (("fresh", fresh_csv), ("update", updated_csv), ("noop", updated_csv)):
        calls_before = provider.calls
        t0 = time.perf_counter()
        relational.ingest_csv(payload, "qa", ["id"])
        t1 = time.perf_counter()
        stats = syncer.sync()
        t2 = time.perf_counter()
        report.phases.append(
            PhaseResult(name, t1 - t0, t2 - t1, provider.calls - calls_before, stats)
        )
    if out_csv:
        report.write_csv(out_csv)
    return report
