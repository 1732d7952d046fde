"""Command-line entrypoint wiring the pipeline stages together.

Subcommands: ingest, stats, baseline, extract, union, annotate-serve,
aggregate, evaluate, cluster, cluster-eval, report, demo. Configuration comes
from an INI file (--config); flags override config values. Every artifact is
written together with a run manifest.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .annotation import (
    AnnotationStore,
    AnnotationTask,
    GoldSet,
    aggregate_majority,
    compute_alpha,
    read_vote_log,
)
from .baseline import load_lexicon, run_baseline
from .clustering import ClusterJob, PurposeItem, cluster_all, dedupe_entry_cluster
from .config import PipelineConfig, load_config
from .corpus import Corpus, Pricing, corpus_stats, filter_entries, ingest_authors, ingest_corpus
from .errors import ConfigError, DiaristError, UndefinedAlphaError
from .extraction import (
    ExtractionRecord,
    ExtractionRun,
    ExtractorConfig,
    PromptTemplate,
    run_extractor,
    union_entry_sets,
)
from .gateway import RecordingSession, build_provider
from .jsonl import read_jsonl, write_json, write_jsonl, write_manifest
from .metrics import (
    Partition,
    identification_metrics,
    identification_metrics_from_counts,
    identification_table_csv,
    rand_index,
)
from .report import cluster_composition, emit_report, frequency_distribution, gender_ratios
from .tokencount import get_counter, whitespace_tokens

from . import demo as _demo  # noqa: F401  (registers the bundled scripted providers)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="INI config file.")
@click.option("--log-level", default="warning", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Recorded in manifests; demos are deterministic regardless.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, log_level: str, seed: int) -> None:
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.WARNING))
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config(config_path)
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed


def _cfg(ctx: click.Context) -> PipelineConfig:
    return ctx.obj["config"]


def _load_corpus(corpus_path: str, authors_path: str, cfg: PipelineConfig) -> tuple[Corpus, list]:
    for path in (corpus_path, authors_path):
        if not Path(path).exists():
            raise ConfigError(f"input file {path} does not exist")
    authors, author_errors = ingest_authors(
        Path(authors_path).read_text(encoding="utf-8").splitlines()
    )
    corpus, entry_errors = ingest_corpus(
        Path(corpus_path).read_text(encoding="utf-8").splitlines(), authors, cfg.window
    )
    return corpus, author_errors + entry_errors


def _eligible(corpus: Corpus, cfg: PipelineConfig, exclusions_out: Path | None):
    counter = get_counter(cfg.token_counter)
    eligible, exclusions = filter_entries(
        corpus, whitespace_tokens, counter, cfg.max_tokens, cfg.min_words
    )
    if exclusions_out is not None:
        write_jsonl(exclusions_out, [{"entry_id": x.entry_id, "reason": x.reason} for x in exclusions])
    return eligible


def _records_to_dicts(records) -> list[dict]:
    return [
        {"entry_id": r.entry_id, "extractor_id": r.extractor_id, "purposes": list(r.purposes)}
        for r in records
    ]


def _read_results(path: str) -> list[ExtractionRecord]:
    return [
        ExtractionRecord(rec["entry_id"], rec["extractor_id"], tuple(rec["purposes"]))
        for rec in read_jsonl(path)
    ]


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--authors", "authors_path", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the validated corpus back out as JSONL.")
@click.option("--errors", "errors_path", type=click.Path(), default=None)
@click.pass_context
def ingest(ctx, corpus_path, authors_path, out_path, errors_path):
    """Load and validate a corpus, reporting per-record failures."""
    cfg = _cfg(ctx)
    corpus, errors = _load_corpus(corpus_path, authors_path, cfg)
    for error in errors:
        click.echo(f"invalid record: {error}", err=True)
    if errors_path:
        write_jsonl(
            errors_path,
            [
                {"source": e.source, "line": e.line, "entry_id": e.entry_id, "message": e.message}
                for e in errors
            ],
        )
    if out_path:
        path = write_jsonl(
            out_path,
            [
                {"entry_id": e.entry_id, "author_id": e.author_id,
                 "date": e.date.isoformat(), "text": e.text}
                for e in corpus.entries
            ],
        )
        write_manifest(path, "ingest", [corpus_path, authors_path], cfg.to_dict(), ctx.obj["seed"])
    click.echo(f"loaded {len(corpus)} entries, {len(corpus.authors)} authors, {len(errors)} invalid record(s)")


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--authors", "authors_path", required=True, type=click.Path())
@click.option("--pricing", "pricing_specs", multiple=True,
              help="name=input_rate[:output_rate[:expected_output_tokens]] per million tokens.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def stats(ctx, corpus_path, authors_path, pricing_specs, out_path):
    """Corpus statistics: buckets, token totals, optional cost estimates."""
    cfg = _cfg(ctx)
    corpus, _ = _load_corpus(corpus_path, authors_path, cfg)
    pricing = {}
    for spec in pricing_specs:
        try:
            name, rates = spec.split("=", 1)
            parts = rates.split(":")
            pricing[name] = Pricing(
                float(parts[0]),
                float(parts[1]) if len(parts) > 1 else 0.0,
                int(parts[2]) if len(parts) > 2 else 0,
            )
        except (ValueError, IndexError):
            raise ConfigError(f"bad --pricing spec {spec!r}") from None
    result = corpus_stats(corpus, get_counter(cfg.token_counter), pricing or None)
    payload = {
        "entry_count": result.entry_count,
        "token_count": result.token_count,
        "avg_tokens": round(result.avg_tokens, 2),
        "stddev_tokens": round(result.stddev_tokens, 2),
        "gender": result.gender_counts,
        "age": result.age_counts,
        "period": result.period_counts,
        "estimated_cost": result.estimated_cost,
    }
    click.echo(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True))
    if out_path:
        write_json(out_path, payload)
        write_manifest(out_path, "stats", [corpus_path, authors_path], cfg.to_dict(), ctx.obj["seed"])


@cli.command()
@click.option("--lexicon", "lexicon_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--authors", "authors_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def baseline(ctx, lexicon_path, corpus_path, authors_path, out_path):
    """Run the template baseline over the filtered corpus."""
    cfg = _cfg(ctx)
    if not Path(lexicon_path).exists():
        raise ConfigError(f"lexicon file {lexicon_path} does not exist")
    corpus, _ = _load_corpus(corpus_path, authors_path, cfg)
    eligible = _eligible(corpus, cfg, Path(out_path).with_suffix(".exclusions.jsonl"))
    records = run_baseline(eligible, load_lexicon(lexicon_path))
    path = write_jsonl(out_path, _records_to_dicts(records))
    write_manifest(path, "baseline", [lexicon_path, corpus_path, authors_path],
                   cfg.to_dict(), ctx.obj["seed"])
    click.echo(f"baseline flagged {len(records)} entries "
               f"({sum(len(r.purposes) for r in records)} purposes)")


@cli.command()
@click.option("--extractor", "extractor_name", required=True)
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--authors", "authors_path", required=True, type=click.Path())
@click.option("--prompt", "prompt_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--resume", "resume_path", type=click.Path(), default=None,
              help="Checkpoint file; succeeded batches are never re-submitted.")
@click.option("--record", "record_path", type=click.Path(), default=None,
              help="Record provider responses for later replay.")
@click.pass_context
def extract(ctx, extractor_name, corpus_path, authors_path, prompt_path, out_path,
            resume_path, record_path):
    """Run a configured model extractor over the filtered corpus."""
    cfg = _cfg(ctx)
    if not Path(prompt_path).exists():
        raise ConfigError(f"prompt file {prompt_path} does not exist")
    spec = cfg.extractor(extractor_name)
    provider = build_provider(cfg.provider(spec.provider))
    corpus, _ = _load_corpus(corpus_path, authors_path, cfg)
    eligible = _eligible(corpus, cfg, Path(out_path).with_suffix(".exclusions.jsonl"))
    template = PromptTemplate.from_file(prompt_path)
    session = None
    if record_path:
        session = RecordingSession(provider, record_path)
        provider = session
    try:
        run = run_extractor(
            eligible,
            ExtractorConfig(extractor_name, spec.model, spec.temperature, spec.max_output_tokens),
            provider,
            template,
            get_counter(cfg.token_counter),
            cfg.budget,
            cfg.batch_max_entries,
            checkpoint_path=resume_path,
            max_workers=cfg.provider(spec.provider).max_in_flight,
        )
    finally:
        if session is not None:
            session.close()
    path = write_jsonl(out_path, _records_to_dicts(run.records))
    write_manifest(path, "extract", [corpus_path, authors_path, prompt_path],
                   cfg.to_dict(), ctx.obj["seed"])
    click.echo(f"{extractor_name}: {run.n_entries} entries, {run.n_purposes} purposes, "
               f"{len(run.failed_batches)} failed batch(es), "
               f"tokens in/out {run.input_tokens}/{run.output_tokens}")
    if run.failed_batches:
        for batch_id, reason in run.failed_batches:
            click.echo(f"failed {batch_id}: {reason}", err=True)


@cli.command()
@click.option("--in", "in_paths", required=True, multiple=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", type=click.Path(), default=None,
              help="Embed entry text (needed when the union feeds annotation).")
@click.option("--authors", "authors_path", type=click.Path(), default=None)
@click.pass_context
def union(ctx, in_paths, out_path, corpus_path, authors_path):
    """Union of extractor result files with per-extractor provenance."""
    cfg = _cfg(ctx)
    runs = []
    for path in in_paths:
        records = _read_results(path)
        extractor_ids = {r.extractor_id for r in records}
        if len(extractor_ids) > 1:
            raise ConfigError(f"{path} mixes extractors {sorted(extractor_ids)}")
        extractor_id = extractor_ids.pop() if extractor_ids else Path(path).stem
        runs.append(ExtractionRun(extractor_id, tuple(records)))
    merged = union_entry_sets(runs)
    texts = {}
    if corpus_path:
        if not authors_path:
            raise ConfigError("--corpus requires --authors")
        corpus, _ = _load_corpus(corpus_path, authors_path, cfg)
        texts = {e.entry_id: e.text for e in corpus.entries}
    records = []
    for entry_id in sorted(merged.entries):
        rec = {
            "entry_id": entry_id,
            "extractors": sorted(merged.entries[entry_id]),
            "purposes": {ext: list(p) for ext, p in sorted(merged.entries[entry_id].items())},
        }
        if texts:
            rec["text"] = texts.get(entry_id, "")
        records.append(rec)
    path = write_jsonl(out_path, records)
    write_manifest(path, "union", list(in_paths), cfg.to_dict(), ctx.obj["seed"])
    sizes = ", ".join(f"{run.extractor_id}={run.n_entries}" for run in runs)
    click.echo(f"union of {len(runs)} runs ({sizes}) -> {len(merged)} entries")


@cli.command("annotate-serve")
@click.option("--tasks", "tasks_path", required=True, type=click.Path())
@click.option("--log", "log_path", required=True, type=click.Path())
@click.option("--port", type=int, default=8710, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--annotators", default=None, help="Comma-separated ids; default from config.")
@click.option("--panel-size", type=int, default=None)
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="Static UI directory to serve at /.")
@click.pass_context
def annotate_serve(ctx, tasks_path, log_path, port, host, annotators, panel_size, ui_dir):
    """Serve annotation tasks over HTTP, appending votes to the durable log."""
    import uvicorn

    from .service import create_app

    cfg = _cfg(ctx)
    if not Path(tasks_path).exists():
        raise ConfigError(f"tasks file {tasks_path} does not exist")
    tasks = [AnnotationTask.from_dict(rec) for rec in read_jsonl(tasks_path)]
    ids = tuple(a.strip() for a in annotators.split(",")) if annotators else cfg.annotators
    store = AnnotationStore(tasks, list(ids), panel_size or cfg.panel_size, log_path=log_path)
    app = create_app(store, ui_dir)
    click.echo(f"serving {len(tasks)} tasks for {len(ids)} annotators on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command()
@click.option("--log", "log_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--tasks", "tasks_path", type=click.Path(), default=None,
              help="Task universe for completeness checking.")
@click.option("--panel-size", type=int, default=None)
@click.option("--partial", is_flag=True, help="Aggregate even if some tasks are incomplete.")
@click.pass_context
def aggregate(ctx, log_path, out_path, tasks_path, panel_size, partial):
    """Majority-vote the log into a gold set; prints agreement."""
    cfg = _cfg(ctx)
    if not Path(log_path).exists():
        raise ConfigError(f"vote log {log_path} does not exist")
    votes = read_vote_log(log_path)
    panel = panel_size or cfg.panel_size
    universe = None
    if tasks_path:
        universe = [rec["entry_id"] for rec in read_jsonl(tasks_path)]
    gold = aggregate_majority(votes, panel, universe=universe, partial=partial)
    write_json(out_path, gold.to_dict())
    write_manifest(out_path, "aggregate", [log_path], cfg.to_dict(), ctx.obj["seed"])
    summary = {
        "correct_entries": len(gold.correct_entries),
        "correct_purposes": len(gold.correct_purposes),
    }
    for question in ("entry", "purpose"):
        try:
            summary[f"alpha_{question}"] = round(
                compute_alpha(votes, question, panel_size=panel), 4
            )
        except UndefinedAlphaError:
            summary[f"alpha_{question}"] = None
    click.echo(json.dumps(summary, ensure_ascii=False, sort_keys=True))


@cli.command()
@click.option("--results", "results_paths", multiple=True, type=click.Path())
@click.option("--gold", "gold_path", type=click.Path(), default=None)
@click.option("--union", "union_specs", multiple=True,
              help="Extra union rows, e.g. 'alpha+beta' (ids must match result files).")
@click.option("--counts", "counts_path", type=click.Path(), default=None,
              help="JSON list of [name, answered, correct] triples instead of result files.")
@click.option("--gold-total", type=int, default=None, help="Gold size for --counts mode.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def evaluate(ctx, results_paths, gold_path, union_specs, counts_path, gold_total, out_path):
    """Identification metrics table (precision / relative recall / relative F1)."""
    cfg = _cfg(ctx)
    rows = []
    inputs: list[str] = []
    if counts_path:
        if gold_total is None:
            raise ConfigError("--counts requires --gold-total")
        for name, answered, correct in json.loads(Path(counts_path).read_text(encoding="utf-8")):
            rows.append((name, identification_metrics_from_counts(answered, correct, gold_total)))
        inputs = [counts_path]
    else:
        if not results_paths or not gold_path:
            raise ConfigError("provide --results and --gold, or --counts with --gold-total")
        gold = GoldSet.from_dict(json.loads(Path(gold_path).read_text(encoding="utf-8")))
        gold_entries = set(gold.correct_entries)
        answered_sets: dict[str, set[str]] = {}
        for path in results_paths:
            records = _read_results(path)
            name = records[0].extractor_id if records else Path(path).stem
            answered_sets[name] = {r.entry_id for r in records}
            rows.append((name, identification_metrics(answered_sets[name], gold_entries)))
        for spec in union_specs:
            names = [n.strip() for n in spec.split("+")]
            missing = [n for n in names if n not in answered_sets]
            if missing:
                raise ConfigError(f"--union {spec!r} references unknown extractor(s) {missing}")
            combined: set[str] = set()
            for name in names:
                combined |= answered_sets[name]
            rows.append((" U ".join(names), identification_metrics(combined, gold_entries)))
        inputs = list(results_paths) + [gold_path]
    table = identification_table_csv(rows)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text(table, encoding="utf-8")
    write_manifest(out_path, "evaluate", inputs, cfg.to_dict(), ctx.obj["seed"])
    click.echo(table, nl=False)


def _read_purposes(path: str) -> list[PurposeItem]:
    purposes: list[PurposeItem] = []
    for rec in read_jsonl(path):
        if "purpose_id" in rec:
            purposes.append(
                PurposeItem(rec["purpose_id"], rec["text"], rec["entry_id"],
                            rec.get("extractor_id", ""))
            )
        elif "purposes" in rec:  # extraction-results format
            for index, text in enumerate(rec["purposes"]):
                purposes.append(
                    PurposeItem(
                        f"{rec['entry_id']}:{rec['extractor_id']}:{index:02d}",
                        text, rec["entry_id"], rec["extractor_id"],
                    )
                )
        else:
            raise ConfigError(f"unrecognized purposes record: {rec}")
    return purposes


@cli.command()
@click.option("--purposes", "purposes_path", required=True, type=click.Path())
@click.option("--provider", "provider_name", required=True)
@click.option("--init-prompt", "init_prompt_path", required=True, type=click.Path())
@click.option("--assign-prompt", "assign_prompt_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--model", "model_id", default="cluster-model", show_default=True)
@click.option("--max-stalls", type=int, default=None)
@click.option("--max-rounds", type=int, default=None)
@click.pass_context
def cluster(ctx, purposes_path, provider_name, init_prompt_path, assign_prompt_path,
            out_path, model_id, max_stalls, max_rounds):
    """Iteratively cluster purposes with a model provider."""
    cfg = _cfg(ctx)
    for path in (purposes_path, init_prompt_path, assign_prompt_path):
        if not Path(path).exists():
            raise ConfigError(f"input file {path} does not exist")
    purposes = _read_purposes(purposes_path)
    provider = build_provider(cfg.provider(provider_name))
    job = ClusterJob(
        model_id=model_id,
        init_template=Path(init_prompt_path).read_text(encoding="utf-8"),
        assign_template=Path(assign_prompt_path).read_text(encoding="utf-8"),
        budget=cfg.budget,
        max_stalls=max_stalls or cfg.max_stalls,
        max_rounds=max_rounds or cfg.max_rounds,
    )
    outcome = cluster_all(purposes, provider, job, get_counter(cfg.token_counter))
    label = outcome.partition.label_of()
    by_id = {p.purpose_id: p for p in purposes}
    path = write_jsonl(
        out_path,
        [
            {"purpose_id": pid, "entry_id": by_id[pid].entry_id, "cluster": label[pid]}
            for pid in sorted(by_id)
        ],
    )
    write_manifest(path, "cluster", [purposes_path, init_prompt_path, assign_prompt_path],
                   cfg.to_dict(), ctx.obj["seed"])
    unclustered = len(outcome.state.remaining)
    click.echo(
        f"{len(outcome.partition.clusters)} clusters over {len(purposes)} purposes "
        f"in {len(outcome.rounds)} round(s); {unclustered} left unassigned"
    )


def _read_partition(path: str) -> Partition:
    mapping = {rec["purpose_id"]: rec["cluster"] for rec in read_jsonl(path)}
    clusters: dict[str, set[str]] = {}
    for purpose_id, name in mapping.items():
        clusters.setdefault(name, set()).add(purpose_id)
    return Partition(clusters)


@cli.command("cluster-eval")
@click.option("--pred", "pred_path", required=True, type=click.Path())
@click.option("--ref", "ref_path", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def cluster_eval(ctx, pred_path, ref_path, out_path):
    """Rand index between a predicted and a reference partition."""
    ri = rand_index(_read_partition(pred_path), _read_partition(ref_path))
    click.echo(f"rand_index {ri:.4f}")
    if out_path:
        write_json(out_path, {"rand_index": ri})
        write_manifest(out_path, "cluster-eval", [pred_path, ref_path],
                       _cfg(ctx).to_dict(), ctx.obj["seed"])


@cli.command()
@click.option("--purposes", "purposes_path", required=True, type=click.Path())
@click.option("--partition", "partition_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--authors", "authors_path", required=True, type=click.Path())
@click.option("--dims", default="gender,age,period", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def report(ctx, purposes_path, partition_path, corpus_path, authors_path, dims, out_dir):
    """Cluster composition tables by demographic dimension."""
    cfg = _cfg(ctx)
    corpus, _ = _load_corpus(corpus_path, authors_path, cfg)
    purposes = _read_purposes(purposes_path)
    partition = _read_partition(partition_path)
    deduped = dedupe_entry_cluster(partition, purposes)
    frequency = frequency_distribution(deduped, partition)
    dimensions = [d.strip() for d in dims.split(",") if d.strip()]
    reports = [cluster_composition(deduped, partition, corpus, dim) for dim in dimensions]
    files = emit_report(reports, frequency, out_dir, gender_ratios(corpus, deduped))
    write_manifest(Path(out_dir) / "summary.json", "report",
                   [purposes_path, partition_path, corpus_path], cfg.to_dict(), ctx.obj["seed"])
    click.echo(f"wrote {len(files)} report file(s) to {out_dir} "
               f"({len(deduped)} purposes after entry-cluster dedup)")


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def demo(ctx, out_dir):
    """Run the full pipeline on the bundled synthetic corpus, offline."""
    from .demo import run_demo

    summary = run_demo(out_dir, seed=ctx.obj["seed"])
    click.echo(json.dumps(summary, ensure_ascii=False, indent=2, sort_keys=True))


def main(argv: list[str] | None = None) -> int:
    try:
        cli(args=argv, standalone_mode=False, obj={})
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        return 130
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except DiaristError as exc:
        click.echo(f"error ({type(exc).__name__}): {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
