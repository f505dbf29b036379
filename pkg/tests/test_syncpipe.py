from datetime import datetime, timedelta, timezone

import pytest

from campusqa.embed import CountingEmbedder, EmbedError, HashEmbedder
from campusqa.ingest import RelationalStore, url_key
from campusqa.sampledata import prerequisites_csv_bytes, qa_csv_bytes
from campusqa.syncpipe import (
    IngestCursor,
    SyncBusy,
    SyncError,
    Syncer,
    bench_ingest,
    render_row,
)
from campusqa.vecstore import VectorStore


class FakeClock:
    def __init__(self, start="2025-01-26 14:32:30"):
        self.now = datetime.strptime(start, "%Y-%m-%d %H:%M:%S").replace(tzinfo=timezone.utc)

    def __call__(self):
        return self.now

    def tick(self, seconds=1):
        self.now += timedelta(seconds=seconds)


class FailingEmbedder:
    name = "failing"
    dim = 16

    def __init__(self, fail_on: str):
        self.fail_on = fail_on

    def fingerprint(self):
        return "failing:16"

    def embed(self, texts):
        if any(self.fail_on in t for t in texts):
            raise EmbedError(self.name, 0, "simulated outage")
        return HashEmbedder(dim=self.dim).embed(texts)


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def pipeline(tmp_path, clock):
    relational = RelationalStore(tmp_path / "relational.db", clock=clock)
    provider = CountingEmbedder(HashEmbedder(dim=64))
    vectors = VectorStore(provider.dim, provider.fingerprint())
    syncer = Syncer(
        relational, vectors, provider, tmp_path / "cursor.json", tmp_path / "vectors", clock=clock
    )
    return relational, vectors, provider, syncer


class TestRenderRow:
    def _row(self, store, table, csv_bytes, key, match):
        store.ingest_csv(csv_bytes, table, key)
        for row in store.rows(table):
            if match(row.field_values):
                return row
        raise AssertionError("row not found")

    def test_prerequisite_golden(self, tmp_path, clock):
        store = RelationalStore(tmp_path / "r.db", clock=clock)
        row = self._row(
            store, "prerequisites", prerequisites_csv_bytes(), ["Course"],
            lambda f: f["Course"] == "CSE111",
        )
        docs = render_row("prerequisites", row)
        assert [d.text for d in docs] == [
            "Course CSE111 has prerequisite CSE110 (HP).",
            "Full prerequisite chain for CSE111: CSE111--CSE110.",
        ]
        assert docs[0].id == f"prerequisites:{row.row_key}:prereq:0"
        assert docs[1].id == f"prerequisites:{row.row_key}:chain:0"

    def test_none_chain_facet_omitted(self, tmp_path, clock):
        store = RelationalStore(tmp_path / "r.db", clock=clock)
        row = self._row(
            store, "prerequisites", prerequisites_csv_bytes(), ["Course"],
            lambda f: f["Course"] == "CSE250",
        )
        docs = render_row("prerequisites", row)
        assert [d.id.split(":")[2] for d in docs] == ["prereq"]

    def test_faculty_facets_and_empty_email_omitted(self, tmp_path, clock):
        from campusqa.sampledata import faculty_csv_bytes

        store = RelationalStore(tmp_path / "r.db", clock=clock)
        store.ingest_csv(faculty_csv_bytes(), "faculty", ["Initial"])
        rows = {r.field_values["Initial"]: r for r in store.rows("faculty")}
        docs = render_row("faculty", rows["ABC"])
        assert [d.id.split(":")[2] for d in docs] == ["role", "email"]
        assert docs[0].text == "Faculty Ayesha B. Chowdhury (ABC) is Professor, Full time, room UB41203."
        assert docs[1].text == "Email of Ayesha B. Chowdhury (ABC): ayesha.chowdhury@example.edu."
        no_email = render_row("faculty", rows["TLM"])
        assert [d.id.split(":")[2] for d in no_email] == ["role"]

    def test_unknown_table_generic_fallback(self, tmp_path, clock):
        store = RelationalStore(tmp_path / "r.db", clock=clock)
        store.ingest_csv(b"colA,colB\nfoo,bar\n", "mystery", ["colA"])
        docs = render_row("mystery", store.rows("mystery")[0])
        assert len(docs) == 1
        assert docs[0].text == "colA: foo; colB: bar"

    def test_metadata_source_id_is_row_key(self, tmp_path, clock):
        store = RelationalStore(tmp_path / "r.db", clock=clock)
        store.ingest_csv(prerequisites_csv_bytes(), "prerequisites", ["Course"])
        for row in store.rows("prerequisites"):
            for doc in render_row("prerequisites", row):
                assert doc.metadata["source_id"] == row.row_key
                assert doc.metadata["table"] == "prerequisites"

    def test_long_text_chunked(self, tmp_path, clock):
        store = RelationalStore(tmp_path / "r.db", clock=clock)
        long_val = "word " * 500
        store.ingest_csv(f"k,v\nx,{long_val.strip()}\n".encode(), "blob", ["k"])
        docs = render_row("blob", store.rows("blob")[0], chunk_size=300, overlap=50)
        assert len(docs) > 1
        assert all(len(d.text) <= 300 for d in docs)
        assert [d.metadata["chunk_index"] for d in docs] == list(range(len(docs)))


class TestCursor:
    def test_round_trip(self, tmp_path):
        cursor = IngestCursor()
        cursor.advance("qa", "2025-01-26 14:32:30", {"k1": "h1", "k2": "h2"})
        cursor.save(tmp_path / "cursor.json")
        loaded = IngestCursor.load(tmp_path / "cursor.json")
        assert loaded.newer_than("qa") == ("2025-01-26 14:32:30", {"k1": "h1", "k2": "h2"})
        assert loaded.newer_than("other") is None

    def test_same_timestamp_merges_keys(self):
        cursor = IngestCursor()
        cursor.advance("qa", "2025-01-26 14:32:30", {"a": "h1"})
        cursor.advance("qa", "2025-01-26 14:32:30", {"b": "h2", "a": "h3"})
        assert cursor.newer_than("qa") == ("2025-01-26 14:32:30", {"a": "h3", "b": "h2"})

    def test_newer_timestamp_resets_keys(self):
        cursor = IngestCursor()
        cursor.advance("qa", "2025-01-26 14:32:30", {"a": "h1"})
        cursor.advance("qa", "2025-01-26 14:32:31", {"b": "h2"})
        assert cursor.newer_than("qa") == ("2025-01-26 14:32:31", {"b": "h2"})


class TestSync:
    def test_fresh_sync_processes_everything(self, pipeline):
        relational, vectors, provider, syncer = pipeline
        relational.ingest_csv(qa_csv_bytes(n=20), "qa", ["id"])
        relational.ingest_csv(prerequisites_csv_bytes(), "prerequisites", ["Course"])
        stats = syncer.sync()
        assert stats.rows_selected == 30
        assert stats.docs_embedded == len(vectors)
        assert stats.docs_embedded == provider.calls
        assert stats.upserted == stats.docs_embedded

    def test_noop_second_run(self, pipeline):
        relational, vectors, provider, syncer = pipeline
        relational.ingest_csv(qa_csv_bytes(n=20), "qa", ["id"])
        syncer.sync()
        before = provider.calls
        stats = syncer.sync()
        assert stats.rows_selected == 0
        assert stats.docs_embedded == 0
        assert provider.calls == before

    def test_single_row_edit_resyncs_only_that_row(self, pipeline, clock):
        relational, vectors, provider, syncer = pipeline
        relational.ingest_csv(qa_csv_bytes(n=20), "qa", ["id"])
        syncer.sync()
        clock.tick(60)
        relational.ingest_csv(qa_csv_bytes(n=20, modified=True), "qa", ["id"])
        stats = syncer.sync()
        assert stats.rows_selected == 2  # ids 0 and 10 change in the modified fixture
        assert stats.docs_embedded == 2
        changed = [r for r in vectors.records() if "revised for the current term" in r.document]
        assert len(changed) == 2

    def test_same_second_insert_not_missed(self, pipeline):
        # both ingests land at the same clock second; the key map keeps
        # selection exact
        relational, vectors, provider, syncer = pipeline
        relational.ingest_csv(b"id,question,answer\n1,q one,a one\n", "qa", ["id"])
        syncer.sync()
        relational.ingest_csv(b"id,question,answer\n1,q one,a one\n2,q two,a two\n", "qa", ["id"])
        stats = syncer.sync()
        assert stats.rows_selected == 1
        assert len(vectors) == 2

    def test_same_second_update_not_missed(self, pipeline):
        relational, vectors, provider, syncer = pipeline
        relational.ingest_csv(b"id,question,answer\n1,q one,a one\n", "qa", ["id"])
        syncer.sync()
        relational.ingest_csv(b"id,question,answer\n1,q one,a different answer\n", "qa", ["id"])
        stats = syncer.sync()
        assert stats.rows_selected == 1
        assert "different answer" in next(iter(vectors.records())).document

    def test_convergence_and_no_duplicate_ids(self, pipeline, clock):
        relational, vectors, provider, syncer = pipeline
        relational.ingest_csv(qa_csv_bytes(n=15), "qa", ["id"])
        syncer.sync()
        state_once = sorted((r.id, r.document) for r in vectors.records())
        clock.tick()
        syncer.sync()
        state_twice = sorted((r.id, r.document) for r in vectors.records())
        assert state_once == state_twice
        ids = [r.id for r in vectors.records()]
        assert len(ids) == len(set(ids))

    def test_conservation(self, pipeline):
        relational, vectors, provider, syncer = pipeline
        relational.ingest_csv(prerequisites_csv_bytes(), "prerequisites", ["Course"])
        stats = syncer.sync()
        assert stats.rows_selected == 10
        per_row = {}
        for rec in vectors.records():
            per_row.setdefault(rec.metadata["source_id"], []).append(rec.id)
            assert relational.get_row(rec.metadata["table"], rec.metadata["source_id"]) is not None
        assert len(per_row) == 10
        assert all(len(v) >= 1 for v in per_row.values())

    def test_web_snapshots_synced_and_replaced(self, pipeline, clock):
        relational, vectors, provider, syncer = pipeline
        url = "https://campus.test/policies"
        relational.record_snapshot(url, "old policy text")
        syncer.sync()
        key = url_key(url)
        assert vectors.get(f"web:{key}:page:0").document == "old policy text"
        clock.tick(60)
        relational.record_snapshot(url, "new policy text")
        stats = syncer.sync()
        assert stats.rows_selected == 1
        assert vectors.get(f"web:{key}:page:0").document == "new policy text"
        assert len([r for r in vectors.records() if r.metadata["table"] == "web"]) == 1

    def test_shrunken_rendering_deletes_stale_chunks(self, pipeline, clock):
        relational, vectors, provider, syncer = pipeline
        url = "https://campus.test/long"
        relational.record_snapshot(url, "x" * 2500)
        syncer.sync()
        key = url_key(url)
        assert len([r for r in vectors.records() if r.metadata["source_id"] == key]) == 3
        clock.tick(60)
        relational.record_snapshot(url, "short now")
        stats = syncer.sync()
        assert stats.stale_deleted == 2
        remaining = [r for r in vectors.records() if r.metadata["source_id"] == key]
        assert [r.id for r in remaining] == [f"web:{key}:page:0"]

    def test_embedding_failure_leaves_cursor_for_that_table(self, tmp_path, clock):
        relational = RelationalStore(tmp_path / "r.db", clock=clock)
        provider = FailingEmbedder(fail_on="FAILTOKEN")
        vectors = VectorStore(provider.dim, provider.fingerprint())
        syncer = Syncer(relational, vectors, provider, tmp_path / "cursor.json", tmp_path / "vectors", clock=clock)
        relational.ingest_csv(b"id,question,answer\n1,fine,ok\n", "aaa_good", ["id"])
        relational.ingest_csv(b"id,question,answer\n1,FAILTOKEN,boom\n", "zzz_bad", ["id"])
        with pytest.raises(SyncError) as exc:
            syncer.sync()
        assert exc.value.table == "zzz_bad"
        cursor = IngestCursor.load(tmp_path / "cursor.json")
        assert cursor.newer_than("aaa_good") is not None
        assert cursor.newer_than("zzz_bad") is None
        # fixing the source lets a rerun converge
        clock.tick(60)
        relational.ingest_csv(b"id,question,answer\n1,recovered,ok\n", "zzz_bad", ["id"])
        stats = syncer.sync()
        assert stats.rows_selected == 1
        assert len(vectors) == 2

    def test_busy_lock(self, pipeline):
        relational, vectors, provider, syncer = pipeline
        syncer._job_lock.acquire()
        try:
            with pytest.raises(SyncBusy):
                syncer.sync()
        finally:
            syncer._job_lock.release()


class TestBenchIngest:
    def test_phase_properties(self, tmp_path):
        report = bench_ingest(tmp_path / "bench", rows=120, out_csv=tmp_path / "report.csv")
        fresh, update, noop = (report.phase(n) for n in ("fresh", "update", "noop"))
        assert fresh.embed_calls == 120
        assert update.embed_calls == 12
        assert noop.embed_calls == 0
        assert noop.sync_s < update.sync_s < fresh.sync_s
        lines = (tmp_path / "report.csv").read_text().strip().splitlines()
        assert lines[0].startswith("phase,")
        assert len(lines) == 4
