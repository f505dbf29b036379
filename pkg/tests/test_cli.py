import json

import pytest
from click.testing import CliRunner

from campusqa.cli import main
from campusqa.sampledata import prerequisites_csv_bytes


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text(f"data_dir: {tmp_path / 'data'}\n")
    csv_path = tmp_path / "prerequisites.csv"
    csv_path.write_bytes(prerequisites_csv_bytes())
    return tmp_path, config, csv_path


class TestIngestSyncSearch:
    def test_full_cli_pipeline(self, runner, workspace):
        tmp_path, config, csv_path = workspace
        result = runner.invoke(
            main,
            ["--config", str(config), "ingest", "csv", str(csv_path), "--table", "prerequisites", "--key", "Course"],
        )
        assert result.exit_code == 0, result.output
        assert "inserted=10" in result.output

        result = runner.invoke(main, ["--config", str(config), "sync"])
        assert result.exit_code == 0, result.output
        assert "selected=10" in result.output

        result = runner.invoke(
            main, ["--config", str(config), "search", "CSE310 prerequisite", "-k", "3", "--explain"]
        )
        assert result.exit_code == 0, result.output
        assert "CSE310" in result.output
        assert "bm25_raw=" in result.output

    def test_search_empty_store(self, runner, workspace):
        tmp_path, config, _ = workspace
        result = runner.invoke(main, ["--config", str(config), "search", "anything"])
        assert result.exit_code == 0
        assert "no matches" in result.output

    def test_bad_key_fails_cleanly(self, runner, workspace):
        tmp_path, config, csv_path = workspace
        result = runner.invoke(
            main,
            ["--config", str(config), "ingest", "csv", str(csv_path), "--table", "p", "--key", "Nope"],
        )
        assert result.exit_code != 0
        assert "natural-key" in result.output


class TestEvalCli:
    def test_eval_report(self, runner, workspace, tmp_path):
        _, config, _ = workspace
        pred = tmp_path / "preds.jsonl"
        ref = tmp_path / "refs.jsonl"
        pred.write_text(
            "\n".join(
                json.dumps(r)
                for r in [
                    {"id": "1", "text": "the cat sat on mat"},
                    {"id": "2", "text": "advising opens in week three"},
                ]
            )
        )
        ref.write_text(
            "\n".join(
                json.dumps(r)
                for r in [
                    {"id": "1", "text": "the cat sat on the mat"},
                    {"id": "2", "text": "advising opens in week three"},
                ]
            )
        )
        out = tmp_path / "report.csv"
        result = runner.invoke(
            main,
            ["--config", str(config), "eval", "--pred", str(pred), "--ref", str(ref), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert "bleu=" in result.output
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 4  # header + 2 pairs + mean

    def test_eval_missing_reference(self, runner, workspace, tmp_path):
        _, config, _ = workspace
        pred = tmp_path / "preds.jsonl"
        ref = tmp_path / "refs.jsonl"
        pred.write_text(json.dumps({"id": "1", "text": "x"}))
        ref.write_text(json.dumps({"id": "2", "text": "y"}))
        result = runner.invoke(
            main,
            ["--config", str(config), "eval", "--pred", str(pred), "--ref", str(ref), "--out", str(tmp_path / "o.csv")],
        )
        assert result.exit_code != 0
        assert "no reference" in result.output


class TestSampleAndBench:
    def test_init_sample(self, runner, tmp_path):
        result = runner.invoke(main, ["init-sample", str(tmp_path / "corpus"), "--rows", "20"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "corpus" / "qa.csv").exists()
        assert (tmp_path / "corpus" / "prerequisites.csv").exists()
        assert (tmp_path / "corpus" / "faculty.csv").exists()

    def test_bench_ingest_cli(self, runner, tmp_path):
        out = tmp_path / "bench.csv"
        result = runner.invoke(main, ["bench-ingest", "--rows", "60", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "fresh" in result.output
        assert out.exists()
