"""Conversation sessions, prompt assembly, and the chat-completion client.

Sessions are append-only JSONL files, one per session id, so a crash
never loses confirmed turns. Prompts carry the retrieved context blocks
with their source references; the system message always instructs the
model to answer only from that context.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .retriever import ScoredDoc

log = logging.getLogger(__name__)

SYSTEM_PROMPT = (
    "You are the campus knowledge assistant for university students. "
    "You answer questions about courses, prerequisites, schedules, faculty, "
    "policies, and student services. Answer using only the numbered context "
    "passages provided below; every passage names the source record it came "
    "from. Do not use outside knowledge. If the context does not contain the "
    "answer, say you don't know and suggest contacting the relevant office. "
    "Keep answers short, factual, and friendly."
)

NO_CONTEXT_NOTICE = "No matching sources were found in the knowledge base for this question."

RETRY_MESSAGE = (
    "Sorry, I could not reach the answer service just now. "
    "Please try again in a few minutes."
)
BUSY_MESSAGE = (
    "The answer service is handling too many requests right now. "
    "Please try again shortly."
)


@dataclass
class ChatMessage:
    role: str  # system | user | assistant
    content: str
    at: str

    def as_dict(self) -> dict:
        return {"role": self.role, "content": self.content, "at": self.at}


@dataclass
class ChatSession:
    id: str
    created_at: str
    messages: list[ChatMessage] = field(default_factory=list)


class SessionStore:
    """Per-session JSONL persistence with in-memory caching."""

    def __init__(self, directory: str | Path, clock: Callable[[], datetime] | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._cache: dict[str, ChatSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _now(self) -> str:
        return self._clock().astimezone(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")

    def _path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.jsonl"

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def create(self) -> ChatSession:
        session = ChatSession(id=uuid.uuid4().hex, created_at=self._now())
        self._path(session.id).write_text(
            json.dumps({"session": session.id, "created_at": session.created_at}) + "\n",
            encoding="utf-8",
        )
        self._cache[session.id] = session
        return session

    def get(self, session_id: str) -> ChatSession:
        if session_id in self._cache:
            return self._cache[session_id]
        path = self._path(session_id)
        if not path.exists():
            raise KeyError(session_id)
        lines = path.read_text(encoding="utf-8").splitlines()
        head = json.loads(lines[0])
        session = ChatSession(id=session_id, created_at=head["created_at"])
        for line in lines[1:]:
            row = json.loads(line)
            session.messages.append(ChatMessage(row["role"], row["content"], row["at"]))
        self._cache[session_id] = session
        return session

    def append(self, session: ChatSession, role: str, content: str) -> ChatMessage:
        message = ChatMessage(role, content, self._now())
        session.messages.append(message)
        with open(self._path(session.id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(message.as_dict(), ensure_ascii=False) + "\n")
        return message


@dataclass(frozen=True)
class SourceRef:
    id: str
    table: str
    source_id: str
    combined: float

    def as_dict(self) -> dict:
        return {"id": self.id, "table": self.table, "source_id": self.source_id, "combined": self.combined}


@dataclass(frozen=True)
class ContextBlock:
    ref: SourceRef
    text: str


@dataclass
class PromptBundle:
    system: str
    blocks: list[ContextBlock]
    history: list[ChatMessage]
    query: str

    def user_message(self) -> str:
        lines = ["Context:"]
        if self.blocks:
            for i, block in enumerate(self.blocks, start=1):
                lines.append(
                    f"[{i}] (source {block.ref.id}, score {block.ref.combined:.4f}) {block.text}"
                )
        else:
            lines.append(NO_CONTEXT_NOTICE)
        lines.append("")
        lines.append(f"Question: {self.query}")
        return "\n".join(lines)

    def messages(self) -> list[dict]:
        payload = [{"role": "system", "content": self.system}]
        payload.extend({"role": m.role, "content": m.content} for m in self.history)
        payload.append({"role": "user", "content": self.user_message()})
        return payload

    def sources(self) -> list[SourceRef]:
        return [block.ref for block in self.blocks]


def build_prompt(
    session: ChatSession,
    query: str,
    hits: Sequence[ScoredDoc],
    n_ctx: int = 5,
    history_turns: int = 10,
) -> PromptBundle:
    """Assemble the prompt: charter, top context blocks, trimmed history, query.

    Context blocks keep the retriever's ranking (highest combined score
    first); the history window keeps the last ``history_turns`` user and
    assistant exchanges.
    """
    ranked = sorted(hits, key=lambda h: (-h.combined, h.id))[:n_ctx]
    blocks = [
        ContextBlock(
            SourceRef(
                id=h.id,
                table=str(h.id).split(":", 1)[0],
                source_id=str(h.id).split(":")[1] if ":" in str(h.id) else "",
                combined=h.combined,
            ),
            h.document,
        )
        for h in ranked
    ]
    history = session.messages[-2 * history_turns :]
    return PromptBundle(SYSTEM_PROMPT, blocks, list(history), query)


@dataclass
class LlmConfig:
    """Chat-completion endpoint settings; the key itself stays in the env."""

    base_url: str = ""
    model: str = ""
    api_key_env: str = "LLM_API_KEY"
    temperature: float = 0.2
    max_tokens: int = 512
    timeout: float = 30.0


class LlmError(Exception):
    def __init__(self, kind: str, detail: str = "", status: int | None = None):
        super().__init__(f"{kind}{f' ({status})' if status else ''}")
        self.kind = kind
        self.detail = detail
        self.status = status


class LlmClient:
    """Minimal chat-completion HTTP client."""

    def __init__(self, config: LlmConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, messages: list[dict]) -> str:
        if not self.config.base_url:
            raise LlmError("not_configured", "no chat endpoint configured")
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        try:
            resp = self._client.post(self.config.base_url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise LlmError("timeout", str(exc)) from exc
        except httpx.HTTPError as exc:
            raise LlmError("transport", str(exc)) from exc
        if resp.status_code >= 400:
            raise LlmError("http", resp.text[:200], status=resp.status_code)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmError("protocol", str(exc)) from exc
        if not isinstance(content, str):
            raise LlmError("protocol", "reply content is not text")
        return content


def handle_failure(error: Exception) -> str:
    """Map an endpoint failure to a user-facing retry message.

    Only an internal error code is logged; the returned text never
    includes exception details, keys, or stack traces.
    """
    if isinstance(error, LlmError):
        code = f"llm_{error.kind}" + (f"_{error.status}" if error.status else "")
        busy = error.status == 429
    else:
        code = f"llm_unexpected_{type(error).__name__}"
        busy = False
    log.warning("chat completion failed: %s", code)
    return BUSY_MESSAGE if busy else RETRY_MESSAGE


@dataclass
class TurnResult:
    reply: str
    sources: list[SourceRef]
    ok: bool


class Responder:
    """Runs one conversational turn against the LLM and records it."""

    def __init__(
        self,
        llm: LlmClient,
        sessions: SessionStore,
        n_ctx: int = 5,
        history_turns: int = 10,
    ):
        self.llm = llm
        self.sessions = sessions
        self.n_ctx = n_ctx
        self.history_turns = history_turns

    def reply(self, session: ChatSession, query: str, hits: Sequence[ScoredDoc]) -> TurnResult:
        # turns within one session are serialized; concurrent sessions are not
        with self.sessions.lock(session.id):
            bundle = build_prompt(session, query, hits, self.n_ctx, self.history_turns)
            try:
                text = self.llm.complete(bundle.messages()).strip()
                ok = True
            except (LlmError, httpx.HTTPError) as exc:
                text = handle_failure(exc)
                ok = False
            # history stores the bare query, not the context-stuffed message,
            # so follow-up prompts don't snowball
            self.sessions.append(session, "user", query)
            self.sessions.append(session, "assistant", text)
            return TurnResult(text, bundle.sources(), ok)
