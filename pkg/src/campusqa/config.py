"""Application configuration: defaults, YAML file overlay, env overrides."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .chat import LlmConfig


class ConfigError(Exception):
    def __init__(self, setting: str, message: str):
        super().__init__(f"{setting}: {message}")
        self.setting = setting


@dataclass
class EmbeddingSettings:
    provider: str = "hash"  # "hash" (deterministic, offline) or "http"
    dim: int = 256
    seed: int = 42
    synonyms: dict = field(default_factory=dict)
    base_url: str = ""
    model: str = ""
    api_key_env: str = "EMBED_API_KEY"
    batch_size: int = 64
    max_inflight: int = 4
    timeout: float = 30.0


@dataclass
class RetrievalSettings:
    fusion_lambda: float = 0.5
    k1: float = 1.5
    b: float = 0.75
    bm25_fanin: int = 10
    vector_fanin: int = 10


@dataclass
class ChunkSettings:
    chunk_size: int = 1000
    overlap: int = 200


@dataclass
class ChatSettings:
    n_ctx: int = 5
    history_turns: int = 10


@dataclass
class ServerSettings:
    host: str = "127.0.0.1"
    port: int = 8000
    cors_origins: list = field(default_factory=list)
    admin_token: str = ""


@dataclass
class AppConfig:
    data_dir: str = "data"
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    llm: LlmConfig = field(default_factory=LlmConfig)
    retrieval: RetrievalSettings = field(default_factory=RetrievalSettings)
    chunking: ChunkSettings = field(default_factory=ChunkSettings)
    chat: ChatSettings = field(default_factory=ChatSettings)
    server: ServerSettings = field(default_factory=ServerSettings)

    @property
    def relational_path(self) -> Path:
        return Path(self.data_dir) / "relational.db"

    @property
    def vector_dir(self) -> Path:
        return Path(self.data_dir) / "vectors"

    @property
    def cursor_path(self) -> Path:
        return Path(self.data_dir) / "cursor.json"

    @property
    def sessions_dir(self) -> Path:
        return Path(self.data_dir) / "sessions"


def _apply(target, data: dict, prefix: str) -> None:
    known = {f.name: f for f in fields(target)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{prefix}{key}", "unknown setting")
        current = getattr(target, key)
        if is_dataclass(current) and isinstance(value, dict):
            _apply(current, value, f"{prefix}{key}.")
        else:
            setattr(target, key, value)


def _apply_env(config: AppConfig) -> None:
    env_map = {
        "EMBED_BASE_URL": ("embedding", "base_url"),
        "EMBED_MODEL": ("embedding", "model"),
        "LLM_BASE_URL": ("llm", "base_url"),
        "LLM_MODEL": ("llm", "model"),
    }
    for var, (section, attr) in env_map.items():
        value = os.environ.get(var)
        if value:
            setattr(getattr(config, section), attr, value)


def validate(config: AppConfig) -> None:
    emb = config.embedding
    if emb.provider not in ("hash", "http"):
        raise ConfigError("embedding.provider", "must be 'hash' or 'http'")
    if emb.dim < 8:
        raise ConfigError("embedding.dim", "must be at least 8")
    if emb.provider == "http" and not emb.base_url:
        raise ConfigError("embedding.base_url", "required when embedding.provider is 'http'")
    if not isinstance(emb.synonyms, dict):
        raise ConfigError("embedding.synonyms", "must be a token-to-group mapping")
    ret = config.retrieval
    if not 0.0 <= ret.fusion_lambda <= 1.0:
        raise ConfigError("retrieval.fusion_lambda", "must be within [0, 1]")
    if ret.k1 < 0:
        raise ConfigError("retrieval.k1", "must be non-negative")
    if not 0.0 <= ret.b <= 1.0:
        raise ConfigError("retrieval.b", "must be within [0, 1]")
    if ret.bm25_fanin < 1 or ret.vector_fanin < 1:
        raise ConfigError("retrieval.bm25_fanin", "fan-ins must be at least 1")
    chunk = config.chunking
    if not 0 <= chunk.overlap < chunk.chunk_size:
        raise ConfigError("chunking.overlap", "must satisfy 0 <= overlap < chunk_size")
    if config.chat.n_ctx < 1:
        raise ConfigError("chat.n_ctx", "must be at least 1")
    if config.chat.history_turns < 0:
        raise ConfigError("chat.history_turns", "must be non-negative")
    if not 1 <= config.server.port <= 65535:
        raise ConfigError("server.port", "must be a valid TCP port")
    if config.llm.temperature < 0:
        raise ConfigError("llm.temperature", "must be non-negative")
    if config.llm.timeout <= 0:
        raise ConfigError("llm.timeout", "must be positive")


def load_config(path: str | Path | None = None) -> AppConfig:
    """Defaults, overlaid with a YAML file if given, then env overrides."""
    config = AppConfig()
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config file must contain a mapping")
        _apply(config, raw, "")
    _apply_env(config)
    validate(config)
    return config
