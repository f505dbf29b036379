import pytest

from campusqa.config import AppConfig, ConfigError, load_config


class TestDefaults:
    def test_defaults_validate(self):
        config = load_config()
        assert config.retrieval.fusion_lambda == 0.5
        assert config.retrieval.bm25_fanin == 10
        assert config.chunking.chunk_size == 1000
        assert config.chunking.overlap == 200
        assert config.chat.history_turns == 10
        assert config.embedding.provider == "hash"

    def test_derived_paths(self):
        config = AppConfig(data_dir="/tmp/x")
        assert str(config.relational_path).endswith("relational.db")
        assert str(config.vector_dir).endswith("vectors")
        assert str(config.cursor_path).endswith("cursor.json")


class TestFileOverlay:
    def test_yaml_overrides(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text(
            "data_dir: /srv/qa\n"
            "retrieval:\n  fusion_lambda: 0.7\n"
            "server:\n  port: 9001\n  cors_origins: ['http://localhost:5173']\n"
        )
        config = load_config(path)
        assert config.data_dir == "/srv/qa"
        assert config.retrieval.fusion_lambda == 0.7
        assert config.server.port == 9001
        assert config.server.cors_origins == ["http://localhost:5173"]

    def test_unknown_setting_rejected(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("retrieval:\n  typo_field: 1\n")
        with pytest.raises(ConfigError, match="retrieval.typo_field"):
            load_config(path)

    def test_env_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LLM_BASE_URL", "http://llm.internal/chat")
        monkeypatch.setenv("LLM_MODEL", "some-model")
        config = load_config()
        assert config.llm.base_url == "http://llm.internal/chat"
        assert config.llm.model == "some-model"


class TestValidation:
    @pytest.mark.parametrize(
        "yaml_text,setting",
        [
            ("retrieval:\n  fusion_lambda: 1.5\n", "retrieval.fusion_lambda"),
            ("chunking:\n  overlap: 1000\n", "chunking.overlap"),
            ("embedding:\n  provider: magic\n", "embedding.provider"),
            ("embedding:\n  provider: http\n", "embedding.base_url"),
            ("embedding:\n  dim: 2\n", "embedding.dim"),
            ("server:\n  port: 0\n", "server.port"),
            ("chat:\n  n_ctx: 0\n", "chat.n_ctx"),
        ],
    )
    def test_field_level_errors(self, tmp_path, yaml_text, setting):
        path = tmp_path / "config.yaml"
        path.write_text(yaml_text)
        with pytest.raises(ConfigError) as exc:
            load_config(path)
        assert exc.value.setting == setting
