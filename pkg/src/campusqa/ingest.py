"""CSV and webpage ingestion into the relational store.

Rows are identified by a hash over their natural-key columns; a second
hash over all field values detects changes, so re-ingesting a file only
refreshes the timestamp of rows whose content actually changed. Webpages
are kept as versioned text snapshots deduplicated by SHA-256, and every
historical version stays readable.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import sqlite3
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Iterable, Sequence
from urllib.parse import urlparse

import httpx

TIMESTAMP_FMT = "%Y-%m-%d %H:%M:%S"

# vector ids and sync cursors use this name for webpage snapshots
WEB_TABLE = "web"

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_FIELD_SEP = "\x1f"


class IngestError(Exception):
    pass


class CsvFormatError(IngestError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


def content_hash(text: str) -> str:
    """SHA-256 of the UTF-8 bytes, as lowercase hex."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _hash_values(values: Sequence[str]) -> str:
    return hashlib.sha256(_FIELD_SEP.join(values).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[str, ...]
    natural_key: tuple[str, ...]

    @classmethod
    def create(cls, name: str, columns: Sequence[str], natural_key: Sequence[str]) -> "TableSchema":
        if not _IDENT_RE.match(name):
            raise IngestError(f"table name {name!r} is not a valid identifier")
        if name == WEB_TABLE:
            raise IngestError(f"table name {WEB_TABLE!r} is reserved for webpage snapshots")
        if len(set(columns)) != len(columns):
            raise IngestError(f"table {name!r} has duplicate column names")
        if not natural_key:
            raise IngestError(f"table {name!r} needs at least one natural-key column")
        missing = [c for c in natural_key if c not in columns]
        if missing:
            raise IngestError(f"natural-key column(s) {missing} not present in header {list(columns)}")
        return cls(name, tuple(columns), tuple(natural_key))


@dataclass
class SourceRow:
    table: str
    row_key: str
    field_values: dict[str, str]
    row_hash: str
    ingested_at: str


@dataclass
class WebSnapshot:
    url: str
    text: str
    content_hash: str
    version: int
    fetched_at: str


@dataclass(frozen=True)
class SnapshotOutcome:
    """Result of recording a capture: whether a new version was written."""

    changed: bool
    version: int


@dataclass(frozen=True)
class IngestStats:
    inserted: int
    updated: int
    unchanged: int


def parse_csv(data: bytes) -> tuple[list[str], list[list[str]]]:
    """Parse UTF-8 RFC-4180 CSV bytes into a header and data records.

    Raises CsvFormatError (with the offending record number, header = 1)
    for quoting problems and ragged rows; blank records are skipped.
    """
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise IngestError(f"CSV is not valid UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    header: list[str] | None = None
    rows: list[list[str]] = []
    record_no = 0
    try:
        for record in reader:
            if not record:
                continue
            record_no += 1
            if header is None:
                header = record
                continue
            if len(record) != len(header):
                raise CsvFormatError(
                    f"expected {len(header)} fields, found {len(record)}", row=record_no
                )
            rows.append(record)
    except csv.Error as exc:
        raise CsvFormatError(str(exc), row=record_no + 1) from None
    if header is None:
        raise CsvFormatError("file has no header row")
    if any(not col.strip() for col in header):
        raise CsvFormatError("header contains an empty column name", row=1)
    return header, rows


class RelationalStore:
    """SQLite-backed store for table rows and webpage snapshots.

    Writes are serialized through an in-process lock and committed in a
    single transaction, so readers on other connections only ever see
    complete ingest runs. The clock is injectable for deterministic tests.
    """

    def __init__(self, path: str | Path, clock: Callable[[], datetime] | None = None):
        self.path = str(path)
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._write_lock = threading.Lock()
        self._local = threading.local()
        with self._connect() as conn:
            conn.executescript(
                """
                PRAGMA journal_mode=WAL;
                CREATE TABLE IF NOT EXISTS table_schemas (
                    name TEXT PRIMARY KEY,
                    columns TEXT NOT NULL,
                    natural_key TEXT NOT NULL
                );
                CREATE TABLE IF NOT EXISTS source_rows (
                    table_name TEXT NOT NULL,
                    row_key TEXT NOT NULL,
                    field_values TEXT NOT NULL,
                    row_hash TEXT NOT NULL,
                    ingested_at TEXT NOT NULL,
                    PRIMARY KEY (table_name, row_key)
                );
                CREATE TABLE IF NOT EXISTS web_snapshots (
                    url TEXT NOT NULL,
                    version INTEGER NOT NULL,
                    text TEXT NOT NULL,
                    content_hash TEXT NOT NULL,
                    fetched_at TEXT NOT NULL,
                    PRIMARY KEY (url, version)
                );
                """
            )

    def _connect(self) -> sqlite3.Connection:
        # one connection per thread; sqlite connections are cheap to hold
        # and expensive to reopen per query
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(self.path, timeout=30.0)
            conn.row_factory = sqlite3.Row
            self._local.conn = conn
        return conn

    def _now(self) -> str:
        return self._clock().astimezone(timezone.utc).strftime(TIMESTAMP_FMT)

    # -- CSV tables ------------------------------------------------------

    def ingest_csv(self, data: bytes, table: str, natural_key: Sequence[str]) -> IngestStats:
        """Load one CSV file into its table; see module docstring for semantics."""
        header, rows = parse_csv(data)
        schema = TableSchema.create(table, header, natural_key)
        with self._write_lock, self._connect() as conn:
            existing_schema = conn.execute(
                "SELECT columns, natural_key FROM table_schemas WHERE name = ?", (table,)
            ).fetchone()
            if existing_schema is None:
                conn.execute(
                    "INSERT INTO table_schemas (name, columns, natural_key) VALUES (?, ?, ?)",
                    (table, json.dumps(list(schema.columns)), json.dumps(list(schema.natural_key))),
                )
            else:
                if json.loads(existing_schema["columns"]) != list(schema.columns):
                    raise IngestError(
                        f"table {table!r} already exists with different columns; "
                        "use a new table name for a different schema"
                    )
                if json.loads(existing_schema["natural_key"]) != list(schema.natural_key):
                    raise IngestError(f"table {table!r} already uses a different natural key")
            existing = {
                row["row_key"]: row["row_hash"]
                for row in conn.execute(
                    "SELECT row_key, row_hash FROM source_rows WHERE table_name = ?", (table,)
                )
            }
            latest = conn.execute(
                "SELECT MAX(ingested_at) AS ts FROM source_rows WHERE table_name = ?", (table,)
            ).fetchone()["ts"]
            # per-table timestamps never move backwards, even with a skewed clock
            now = self._now()
            ts = max(now, latest) if latest else now
            key_idx = [header.index(c) for c in schema.natural_key]
            inserted = updated = unchanged = 0
            for record in rows:
                row_key = _hash_values([record[i] for i in key_idx])
                row_hash = _hash_values(record)
                previous = existing.get(row_key)
                if previous is None:
                    conn.execute(
                        "INSERT INTO source_rows (table_name, row_key, field_values, row_hash, ingested_at)"
                        " VALUES (?, ?, ?, ?, ?)",
                        (table, row_key, json.dumps(dict(zip(header, record)), ensure_ascii=False), row_hash, ts),
                    )
                    existing[row_key] = row_hash
                    inserted += 1
                elif previous != row_hash:
                    conn.execute(
                        "UPDATE source_rows SET field_values = ?, row_hash = ?, ingested_at = ?"
                        " WHERE table_name = ? AND row_key = ?",
                        (json.dumps(dict(zip(header, record)), ensure_ascii=False), row_hash, ts, table, row_key),
                    )
                    existing[row_key] = row_hash
                    updated += 1
                else:
                    unchanged += 1
            return IngestStats(inserted, updated, unchanged)

    def table_names(self) -> list[str]:
        with self._connect() as conn:
            return [r["name"] for r in conn.execute("SELECT name FROM table_schemas ORDER BY name")]

    def schema(self, table: str) -> TableSchema:
        with self._connect() as conn:
            row = conn.execute(
                "SELECT columns, natural_key FROM table_schemas WHERE name = ?", (table,)
            ).fetchone()
        if row is None:
            raise IngestError(f"unknown table {table!r}")
        return TableSchema(table, tuple(json.loads(row["columns"])), tuple(json.loads(row["natural_key"])))

    def rows(
        self, table: str, newer_than: tuple[str, dict[str, str]] | None = None
    ) -> list[SourceRow]:
        """Rows of a table ordered by (ingested_at, row_key).

        ``newer_than`` is a (timestamp, {row_key: row_hash}) pair naming
        what a previous sync already consumed at that timestamp. Rows
        strictly newer are returned, plus rows at the same timestamp whose
        key is new or whose content hash changed. That makes incremental
        selection exact at one-second timestamp resolution, including
        same-second updates. Boundary-timestamp rows are screened by their
        stored hash alone, so an unchanged table costs no row hydration.
        """
        if newer_than is None:
            with self._connect() as conn:
                fetched = conn.execute(
                    "SELECT row_key, field_values, row_hash, ingested_at FROM source_rows"
                    " WHERE table_name = ? ORDER BY ingested_at, row_key",
                    (table,),
                ).fetchall()
            return [
                SourceRow(table, r["row_key"], json.loads(r["field_values"]), r["row_hash"], r["ingested_at"])
                for r in fetched
            ]
        ts, seen = newer_than
        with self._connect() as conn:
            newer = conn.execute(
                "SELECT row_key, field_values, row_hash, ingested_at FROM source_rows"
                " WHERE table_name = ? AND ingested_at > ?",
                (table, ts),
            ).fetchall()
            boundary = conn.execute(
                "SELECT row_key, row_hash FROM source_rows"
                " WHERE table_name = ? AND ingested_at = ?",
                (table, ts),
            ).fetchall()
        out = [
            SourceRow(table, r["row_key"], json.loads(r["field_values"]), r["row_hash"], r["ingested_at"])
            for r in newer
        ]
        changed_keys = [r["row_key"] for r in boundary if seen.get(r["row_key"]) != r["row_hash"]]
        out.extend(self._rows_by_keys(table, changed_keys))
        out.sort(key=lambda row: (row.ingested_at, row.row_key))
        return out

    def _rows_by_keys(self, table: str, keys: Sequence[str]) -> list[SourceRow]:
        if not keys:
            return []
        out = []
        with self._connect() as conn:
            for start in range(0, len(keys), 400):
                chunk = list(keys[start : start + 400])
                placeholders = ",".join("?" * len(chunk))
                fetched = conn.execute(
                    "SELECT row_key, field_values, row_hash, ingested_at FROM source_rows"
                    f" WHERE table_name = ? AND row_key IN ({placeholders})",
                    [table, *chunk],
                ).fetchall()
                out.extend(
                    SourceRow(table, r["row_key"], json.loads(r["field_values"]), r["row_hash"], r["ingested_at"])
                    for r in fetched
                )
        return out

    def row_count(self, table: str) -> int:
        with self._connect() as conn:
            return conn.execute(
                "SELECT COUNT(*) AS n FROM source_rows WHERE table_name = ?", (table,)
            ).fetchone()["n"]

    def get_row(self, table: str, row_key: str) -> SourceRow | None:
        with self._connect() as conn:
            r = conn.execute(
                "SELECT field_values, row_hash, ingested_at FROM source_rows"
                " WHERE table_name = ? AND row_key = ?",
                (table, row_key),
            ).fetchone()
        if r is None:
            return None
        return SourceRow(table, row_key, json.loads(r["field_values"]), r["row_hash"], r["ingested_at"])

    # -- webpage snapshots -------------------------------------------------

    def record_snapshot(self, url: str, text: str) -> SnapshotOutcome:
        """Store a capture unless it hashes identically to the latest version."""
        error = validate_url(url)
        if error:
            raise IngestError(error)
        digest = content_hash(text)
        with self._write_lock, self._connect() as conn:
            latest = conn.execute(
                "SELECT version, content_hash FROM web_snapshots WHERE url = ?"
                " ORDER BY version DESC LIMIT 1",
                (url,),
            ).fetchone()
            if latest is not None and latest["content_hash"] == digest:
                return SnapshotOutcome(changed=False, version=latest["version"])
            version = (latest["version"] + 1) if latest else 1
            latest_ts = conn.execute("SELECT MAX(fetched_at) AS ts FROM web_snapshots").fetchone()["ts"]
            now = self._now()
            ts = max(now, latest_ts) if latest_ts else now
            conn.execute(
                "INSERT INTO web_snapshots (url, version, text, content_hash, fetched_at)"
                " VALUES (?, ?, ?, ?, ?)",
                (url, version, text, digest, ts),
            )
            return SnapshotOutcome(changed=True, version=version)

    def snapshots(self, url: str) -> list[WebSnapshot]:
        with self._connect() as conn:
            fetched = conn.execute(
                "SELECT version, text, content_hash, fetched_at FROM web_snapshots"
                " WHERE url = ? ORDER BY version",
                (url,),
            ).fetchall()
        return [WebSnapshot(url, r["text"], r["content_hash"], r["version"], r["fetched_at"]) for r in fetched]

    def snapshot_urls(self) -> list[str]:
        with self._connect() as conn:
            return [r["url"] for r in conn.execute("SELECT DISTINCT url FROM web_snapshots ORDER BY url")]

    def latest_snapshots(self, newer_than: tuple[str, dict[str, str]] | None = None) -> list[WebSnapshot]:
        """Latest version per URL, optionally only those fetched after a cursor."""
        with self._connect() as conn:
            fetched = conn.execute(
                "SELECT s.url, s.version, s.text, s.content_hash, s.fetched_at"
                " FROM web_snapshots s"
                " JOIN (SELECT url, MAX(version) AS v FROM web_snapshots GROUP BY url) m"
                " ON s.url = m.url AND s.version = m.v"
                " ORDER BY s.fetched_at, s.url"
            ).fetchall()
        snaps = [
            WebSnapshot(r["url"], r["text"], r["content_hash"], r["version"], r["fetched_at"])
            for r in fetched
        ]
        if newer_than is None:
            return snaps
        ts, keys = newer_than
        return [
            s
            for s in snaps
            if s.fetched_at > ts
            or (s.fetched_at == ts and keys.get(url_key(s.url)) != s.content_hash)
        ]

    def counts(self) -> dict[str, int]:
        with self._connect() as conn:
            rows = conn.execute("SELECT COUNT(*) AS n FROM source_rows").fetchone()["n"]
            snaps = conn.execute("SELECT COUNT(*) AS n FROM web_snapshots").fetchone()["n"]
            urls = conn.execute("SELECT COUNT(DISTINCT url) AS n FROM web_snapshots").fetchone()["n"]
        return {"rows": rows, "snapshots": snaps, "urls": urls}


def url_key(url: str) -> str:
    """Stable row-key-style identifier for a URL."""
    return hashlib.sha256(url.encode("utf-8")).hexdigest()


def validate_url(url: str) -> str | None:
    """Return an error message for anything but an absolute http(s) URL."""
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https"):
        return f"not an http(s) URL: {url!r}"
    if not parsed.netloc:
        return f"URL has no host: {url!r}"
    return None


# -- HTML text extraction --------------------------------------------------

_SKIP_TAGS = {"script", "style", "noscript"}


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS and self._skip_depth:
            self._skip_depth -= 1

    def handle_data(self, data):
        if not self._skip_depth:
            self.parts.append(data)


_SCRIPT_RE = re.compile(r"<script", re.IGNORECASE)


def extract_text(html: bytes | str) -> str:
    """Best-effort visible text from (possibly malformed) HTML.

    Script, style, and noscript contents are dropped, tags stripped,
    entities decoded, and whitespace runs collapsed. The output never
    contains markup openers, even when they arrive encoded as entities.
    """
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    parser = _TextExtractor()
    try:
        parser.feed(html)
        parser.close()
    except Exception:
        pass  # tolerate anything; keep whatever text was collected
    text = " ".join(parser.parts)
    while "</" in text or _SCRIPT_RE.search(text):
        text = _SCRIPT_RE.sub(" ", text.replace("</", " "))
    return " ".join(text.split())


# -- URL list fetching -------------------------------------------------------


@dataclass
class FetchOutcome:
    url: str
    ok: bool
    outcome: SnapshotOutcome | None = None
    error: str | None = None


def parse_url_file(text: str) -> list[tuple[str, str | None]]:
    """Lines to (url, error) pairs; blank lines and '#' comments are dropped."""
    entries: list[tuple[str, str | None]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        entries.append((line, validate_url(line)))
    return entries


def fetch_urls(
    url_file: str | Path,
    store: RelationalStore,
    client: httpx.Client | None = None,
    parallelism: int = 8,
    timeout: float = 15.0,
) -> list[FetchOutcome]:
    """Fetch every URL in a list file and snapshot the extracted text.

    Requests run concurrently (bounded by ``parallelism``); snapshot
    writes are serialized by the store. Outcomes come back in input
    order, with per-URL failures recorded rather than raised.
    """
    text = Path(url_file).read_text(encoding="utf-8")
    return fetch_url_entries(parse_url_file(text), store, client=client, parallelism=parallelism, timeout=timeout)


def fetch_url_entries(
    entries: Iterable[tuple[str, str | None]],
    store: RelationalStore,
    client: httpx.Client | None = None,
    parallelism: int = 8,
    timeout: float = 15.0,
) -> list[FetchOutcome]:
    entries = list(entries)
    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=timeout, follow_redirects=True)

    def fetch_one(url: str) -> FetchOutcome:
        try:
            resp = client.get(url)
            if resp.status_code >= 400:
                return FetchOutcome(url, ok=False, error=f"HTTP {resp.status_code}")
            page_text = extract_text(resp.content)
            return FetchOutcome(url, ok=True, outcome=store.record_snapshot(url, page_text))
        except httpx.HTTPError as exc:
            return FetchOutcome(url, ok=False, error=f"{type(exc).__name__}: {exc}")

    results: list[FetchOutcome | None] = [None] * len(entries)
    jobs = []
    try:
        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            for i, (url, error) in enumerate(entries):
                if error:
                    results[i] = FetchOutcome(url, ok=False, error=error)
                else:
                    jobs.append((i, pool.submit(fetch_one, url)))
            for i, future in jobs:
                results[i] = future.result()
    finally:
        if own_client:
            client.close()
    return [r for r in results if r is not None]
