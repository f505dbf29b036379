"""Wires stores, providers, retrieval, and chat into one application object."""
from __future__ import annotations

import threading
from datetime import datetime
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .chat import LlmClient, Responder, SessionStore, TurnResult
from .config import AppConfig
from .embed import EmbeddingProvider, HashEmbedder, HttpEmbedder
from .ingest import FetchOutcome, IngestStats, RelationalStore, fetch_url_entries, parse_url_file
from .retriever import HybridRetriever, ScoredDoc
from .syncpipe import Syncer, SyncStats
from .vecstore import VectorStore


def make_provider(config: AppConfig, transport: httpx.BaseTransport | None = None) -> EmbeddingProvider:
    emb = config.embedding
    if emb.provider == "hash":
        return HashEmbedder(dim=emb.dim, seed=emb.seed, synonyms=emb.synonyms)
    return HttpEmbedder(
        base_url=emb.base_url,
        model=emb.model,
        dim=emb.dim,
        api_key_env=emb.api_key_env,
        batch_size=emb.batch_size,
        max_inflight=emb.max_inflight,
        timeout=emb.timeout,
        transport=transport,
    )


class Engine:
    """Single-node application core shared by the CLI and the HTTP service."""

    def __init__(
        self,
        config: AppConfig,
        llm_transport: httpx.BaseTransport | None = None,
        embed_transport: httpx.BaseTransport | None = None,
        fetch_client: httpx.Client | None = None,
        clock: Callable[[], datetime] | None = None,
    ):
        self.config = config
        Path(config.data_dir).mkdir(parents=True, exist_ok=True)
        self.relational = RelationalStore(config.relational_path, clock=clock)
        self.provider = make_provider(config, transport=embed_transport)
        # refuses to open a store written by a different provider
        self.vectors = VectorStore.open_or_create(
            config.vector_dir, self.provider.dim, self.provider.fingerprint()
        )
        self.sessions = SessionStore(config.sessions_dir, clock=clock)
        self.syncer = Syncer(
            self.relational,
            self.vectors,
            self.provider,
            cursor_path=config.cursor_path,
            vector_dir=config.vector_dir,
            chunk_size=config.chunking.chunk_size,
            overlap=config.chunking.overlap,
            clock=clock,
        )
        self.llm = LlmClient(config.llm, transport=llm_transport)
        self.responder = Responder(
            self.llm, self.sessions, n_ctx=config.chat.n_ctx, history_turns=config.chat.history_turns
        )
        self._fetch_client = fetch_client
        self._retriever_lock = threading.Lock()
        self._retriever = self._build_retriever()

    def _build_retriever(self) -> HybridRetriever:
        ret = self.config.retrieval
        return HybridRetriever.build(
            self.vectors,
            self.provider,
            lam=ret.fusion_lambda,
            k1=ret.k1,
            b=ret.b,
            bm25_fanin=ret.bm25_fanin,
            vector_fanin=ret.vector_fanin,
        )

    def rebuild_retriever(self) -> None:
        fresh = self._build_retriever()
        with self._retriever_lock:
            self._retriever = fresh

    @property
    def retriever(self) -> HybridRetriever:
        with self._retriever_lock:
            return self._retriever

    # -- operations -------------------------------------------------------

    def ingest_csv_bytes(self, data: bytes, table: str, natural_key: Sequence[str]) -> IngestStats:
        return self.relational.ingest_csv(data, table, natural_key)

    def ingest_url_text(self, url_lines: str) -> list[FetchOutcome]:
        return fetch_url_entries(parse_url_file(url_lines), self.relational, client=self._fetch_client)

    def sync(self) -> SyncStats:
        stats = self.syncer.sync()
        self.rebuild_retriever()
        return stats

    def search(self, query: str, k: int, lam: float | None = None) -> list[ScoredDoc]:
        return self.retriever.retrieve(query, k, lam=lam)

    def chat_turn(self, session_id: str | None, message: str) -> tuple[str, TurnResult]:
        session = self.sessions.create() if session_id is None else self.sessions.get(session_id)
        hits = self.search(message, k=self.config.chat.n_ctx)
        result = self.responder.reply(session, message, hits)
        return session.id, result

    def health(self) -> dict:
        from . import __version__
        from .vecstore import FORMAT_VERSION

        status = "ok"
        counts: dict = {}
        try:
            counts = self.relational.counts()
            counts["vectors"] = len(self.vectors)
        except Exception:
            status = "degraded"
        return {
            "status": status,
            "versions": {"app": __version__, "store_format": FORMAT_VERSION},
            "counts": counts,
        }

    def close(self) -> None:
        self.llm.close()
        if isinstance(self.provider, HttpEmbedder):
            self.provider.close()
