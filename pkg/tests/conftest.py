import json

import httpx

from campusqa.config import AppConfig
from campusqa.engine import Engine
from campusqa.sampledata import (
    DEFAULT_SYNONYMS,
    faculty_csv_bytes,
    prerequisites_csv_bytes,
    qa_csv_bytes,
)


def echo_llm_transport():
    """Chat-completion stub that echoes the question line of the last user message."""

    def handler(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.read())
        last_user = [m for m in payload["messages"] if m["role"] == "user"][-1]["content"]
        question = last_user.rsplit("Question: ", 1)[-1]
        return httpx.Response(200, json={"choices": [{"message": {"content": f"echo: {question}"}}]})

    return httpx.MockTransport(handler)


def failing_llm_transport(status=503):
    return httpx.MockTransport(lambda request: httpx.Response(status, json={"error": "down"}))


def site_transport(pages: dict):
    def handler(request: httpx.Request) -> httpx.Response:
        url = str(request.url)
        if url not in pages:
            return httpx.Response(404, text="missing")
        return httpx.Response(200, content=pages[url])

    return httpx.MockTransport(handler)


def make_engine(
    tmp_path,
    llm_transport=None,
    pages=None,
    synonyms=None,
    admin_token="",
    dim=256,
    clock=None,
) -> Engine:
    config = AppConfig(data_dir=str(tmp_path / "data"))
    config.embedding.dim = dim
    config.embedding.synonyms = dict(DEFAULT_SYNONYMS if synonyms is None else synonyms)
    config.llm.base_url = "http://llm.test/v1/chat"
    config.llm.model = "stub-model"
    config.server.admin_token = admin_token
    fetch_client = httpx.Client(transport=site_transport(pages)) if pages else None
    return Engine(
        config,
        llm_transport=llm_transport or echo_llm_transport(),
        fetch_client=fetch_client,
        clock=clock,
    )


def seed_corpus(engine: Engine, qa_rows: int = 40) -> None:
    engine.ingest_csv_bytes(qa_csv_bytes(n=qa_rows), "qa", ["id"])
    engine.ingest_csv_bytes(prerequisites_csv_bytes(), "prerequisites", ["Course"])
    engine.ingest_csv_bytes(faculty_csv_bytes(), "faculty", ["Initial"])
    engine.sync()


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {name}: {verdict}", flush=True)
