"""Command-line interface: serve, ingest, sync, search, chat, eval, bench."""
from __future__ import annotations

import json
from pathlib import Path

import click

from .config import ConfigError, load_config


def _engine(ctx):
    from .engine import Engine

    if ctx.obj.get("engine") is None:
        ctx.obj["engine"] = Engine(ctx.obj["config"])
    return ctx.obj["engine"]


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML config file; defaults apply without one.")
@click.pass_context
def main(ctx, config_path):
    """Retrieval-augmented campus QA engine."""
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        raise click.ClickException(f"invalid configuration: {exc}")
    ctx.obj = {"config": config, "engine": None}


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP API server."""
    import uvicorn

    from .service import create_app

    config = ctx.obj["config"]
    app = create_app(_engine(ctx))
    uvicorn.run(app, host=host or config.server.host, port=port or config.server.port)


@main.group()
def ingest():
    """Load CSV files or webpages into the relational store."""


@ingest.command("csv")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--table", required=True, help="Target table name.")
@click.option("--key", required=True, help="Comma-separated natural-key columns.")
@click.pass_context
def ingest_csv(ctx, file, table, key):
    """Ingest one CSV file into TABLE."""
    from .ingest import IngestError

    engine = _engine(ctx)
    natural_key = [c.strip() for c in key.split(",") if c.strip()]
    try:
        stats = engine.ingest_csv_bytes(Path(file).read_bytes(), table, natural_key)
    except IngestError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"inserted={stats.inserted} updated={stats.updated} unchanged={stats.unchanged}")


@ingest.command("web")
@click.argument("urls_file", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def ingest_web(ctx, urls_file):
    """Fetch every URL in URLS_FILE and snapshot the extracted text."""
    engine = _engine(ctx)
    outcomes = engine.ingest_url_text(Path(urls_file).read_text(encoding="utf-8"))
    for o in outcomes:
        if o.ok:
            state = f"version {o.outcome.version}" + ("" if o.outcome.changed else " (unchanged)")
            click.echo(f"ok    {o.url}  {state}")
        else:
            click.echo(f"error {o.url}  {o.error}")


@main.command()
@click.pass_context
def sync(ctx):
    """Embed and upsert everything newer than the ingestion cursor."""
    from .syncpipe import SyncBusy, SyncError

    engine = _engine(ctx)
    try:
        stats = engine.sync()
    except SyncBusy as exc:
        raise click.ClickException(str(exc))
    except SyncError as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"scanned={stats.rows_scanned} selected={stats.rows_selected} "
        f"embedded={stats.docs_embedded} upserted={stats.upserted} "
        f"elapsed={stats.elapsed:.2f}s"
    )


@main.command()
@click.argument("query")
@click.option("-k", "top_k", type=int, default=5, show_default=True)
@click.option("--lambda", "fusion_lambda", type=float, default=None,
              help="Fusion weight for BM25 vs similarity (default from config).")
@click.option("--explain", is_flag=True, help="Print every score component per hit.")
@click.pass_context
def search(ctx, query, top_k, fusion_lambda, explain):
    """Hybrid search over the synced corpus."""
    engine = _engine(ctx)
    hits = engine.search(query, k=top_k, lam=fusion_lambda)
    if not hits:
        click.echo("no matches")
        return
    for rank, hit in enumerate(hits, start=1):
        click.echo(f"{rank}. [{hit.combined:.4f}] {hit.id}")
        click.echo(f"   {hit.document}")
        if explain:
            distance = "absent" if hit.distance is None else f"{hit.distance:.6f}"
            click.echo(
                f"   bm25_raw={hit.bm25_raw:.6f} bm25_norm={hit.bm25_norm:.6f} "
                f"distance={distance} similarity={hit.similarity:.6f} combined={hit.combined:.6f}"
            )


@main.command()
@click.pass_context
def chat(ctx):
    """Interactive chat loop; replies cite their sources."""
    engine = _engine(ctx)
    session_id = None
    click.echo("campus assistant ready; empty line or Ctrl-D exits")
    while True:
        try:
            question = click.prompt("you", prompt_suffix="> ", default="", show_default=False)
        except (EOFError, click.Abort):
            break
        if not question.strip():
            break
        session_id, result = engine.chat_turn(session_id, question.strip())
        click.echo(result.reply)
        click.echo(f"Sources: [{', '.join(ref.id for ref in result.sources)}]")


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSONL of {'id':..., 'text':...} predictions.")
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSONL of {'id':..., 'text':...} references.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="CSV report destination.")
@click.pass_context
def eval_command(ctx, pred_path, ref_path, out_path):
    """Score predictions against references with BLEU/ROUGE-L/METEOR/embedding."""
    from .engine import make_provider
    from .evalkit import evaluate_corpus

    def read_jsonl(path):
        rows = {}
        order = []
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rows[str(row["id"])] = str(row["text"])
            except (ValueError, KeyError):
                raise click.ClickException(f"{path}:{line_no}: expected JSON with 'id' and 'text'")
            order.append(str(row["id"]))
        return rows, order

    preds, order = read_jsonl(pred_path)
    refs, _ = read_jsonl(ref_path)
    missing = [i for i in order if i not in refs]
    if missing:
        raise click.ClickException(f"no reference for prediction id(s): {', '.join(missing[:5])}")
    pairs = [(preds[i], refs[i]) for i in order]
    provider = make_provider(ctx.obj["config"])
    report = evaluate_corpus(pairs, provider=provider, ids=order)
    report.write_csv(out_path)
    means = report.means
    click.echo("  ".join(f"{k}={v:.4f}" for k, v in means.items()))
    click.echo(f"wrote {out_path}")


@main.command("bench-ingest")
@click.option("--out", "out_path", default="bench-report.csv", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--rows", type=int, default=500, show_default=True)
@click.option("--workdir", type=click.Path(file_okay=False), default=None,
              help="Scratch directory (a temp dir by default).")
@click.pass_context
def bench_ingest_command(ctx, out_path, rows, workdir):
    """Time fresh vs incremental vs no-op ingestion on the sample corpus."""
    import tempfile

    from .syncpipe import bench_ingest

    if workdir is None:
        with tempfile.TemporaryDirectory(prefix="campusqa-bench-") as tmp:
            report = bench_ingest(tmp, rows=rows, out_csv=out_path)
    else:
        report = bench_ingest(workdir, rows=rows, out_csv=out_path)
    for phase in report.phases:
        click.echo(
            f"{phase.name:>7}: ingest {phase.ingest_s:.3f}s  sync {phase.sync_s:.3f}s  "
            f"total {phase.total_s:.3f}s  embed_calls {phase.embed_calls}"
        )
    click.echo(f"wrote {out_path}")


@main.command("init-sample")
@click.argument("directory", type=click.Path(file_okay=False))
@click.option("--rows", type=int, default=500, show_default=True, help="QA rows to generate.")
def init_sample(directory, rows):
    """Write the bundled sample corpus CSVs into DIRECTORY."""
    from .sampledata import write_sample_corpus

    written = write_sample_corpus(directory, qa_count=rows)
    for path in written:
        click.echo(f"wrote {path}")
    click.echo("next: campusqa ingest csv <file> --table qa --key id && campusqa sync")


if __name__ == "__main__":
    main()
