"""Bundled offline demo: a ~50-entry synthetic corpus with planted purpose
sentences, scripted extractor/clustering providers, scripted annotators, and
an end-to-end run that writes every pipeline artifact into one directory.

Everything is deterministic; running twice produces byte-identical files.
"""

from __future__ import annotations

import datetime as dt
import json
import re
from pathlib import Path

from .annotation import AnnotationStore, AnnotationTask, aggregate_majority, compute_alpha
from .baseline import load_lexicon, run_baseline, split_sentences
from .clustering import ClusterJob, PurposeItem, cluster_all, dedupe_entry_cluster
from .config import PipelineConfig, load_config
from .corpus import corpus_stats, filter_entries, ingest_authors, ingest_corpus
from .errors import UndefinedAlphaError
from .extraction import (
    ExtractionRun,
    ExtractorConfig,
    PromptTemplate,
    run_extractor,
    union_entry_sets,
)
from .gateway import ChatRequest, ScriptedProvider, register_script
from .jsonl import write_json, write_jsonl, write_manifest
from .metrics import (
    Partition,
    identification_metrics,
    identification_table_csv,
    purpose_metrics,
    rand_index,
)
from .report import cluster_composition, emit_report, frequency_distribution, gender_ratios
from .tokencount import get_counter, whitespace_tokens

DATA_DIR = Path(__file__).parent / "data" / "demo"

_BLOCK_RE = re.compile(r"ID:(\S+)\n(.*?)(?=\n\nID:|\Z)", re.DOTALL)
_CLAUSE_RE = re.compile(r"чтобы\s+([^.!?…]+)")
_NUMBERED_RE = re.compile(r"^(\d+)\.\s+(.*)$", re.MULTILINE)

_DIARY_WORDS = ("дневник", "записк", "тетрад")

CLUSTER_NAMES = (
    "Память о времени",
    "Самоанализ",
    "Язык и навыки",
    "Порядок и дисциплина",
    "Для близких",
)


def _conversation(request: ChatRequest) -> str:
    # repair re-prompts append messages, so scripted handlers read them all
    return "\n\n".join(m.content for m in request.messages)


def _entry_blocks(request: ChatRequest) -> list[tuple[str, str]]:
    return [(m.group(1), m.group(2).strip()) for m in _BLOCK_RE.finditer(_conversation(request))]


def _clauses(text: str) -> list[str]:
    return [f"чтобы {m.group(1).strip()}" for m in _CLAUSE_RE.finditer(text)]


def extract_alpha(request: ChatRequest) -> str:
    """Scripted model: every final-clause purpose marker counts."""
    result = [
        {"entry_id": eid, "purposes": _clauses(text)} for eid, text in _entry_blocks(request)
    ]
    return json.dumps(result, ensure_ascii=False)


def extract_beta(request: ChatRequest) -> str:
    """Scripted model: stated-goal sentences, plus purpose clauses that sit in
    a sentence mentioning the diary itself."""
    result = []
    for eid, text in _entry_blocks(request):
        purposes: list[str] = []
        for sentence in split_sentences(text):
            folded = sentence.casefold()
            if "цель" in folded:
                purposes.append(sentence.strip())
            elif any(word in folded for word in _DIARY_WORDS):
                purposes.extend(_clauses(sentence))
        result.append({"entry_id": eid, "purposes": purposes})
    return json.dumps(result, ensure_ascii=False)


def cluster_keyword(text: str) -> str:
    folded = text.casefold()
    if any(k in folded for k in ("памят", "помн", "не забы", "вспомин")):
        return "Память о времени"
    if any(k in folded for k in ("мысл", "себя", "настроен")):
        return "Самоанализ"
    if any(k in folded for k in ("язык", "немецк")):
        return "Язык и навыки"
    if any(k in folded for k in ("порядок", "приуч")):
        return "Порядок и дисциплина"
    if any(k in folded for k in ("дет", "внук", "рассказ", "читател", "близк")):
        return "Для близких"
    return "Память о времени"


def demo_cluster(request: ChatRequest) -> str:
    prompt = _conversation(request)
    if "Придумай" in prompt:
        return json.dumps(list(CLUSTER_NAMES), ensure_ascii=False)
    pairs = [
        {"index": int(m.group(1)), "cluster": cluster_keyword(m.group(2))}
        for m in _NUMBERED_RE.finditer(prompt)
    ]
    return json.dumps(pairs, ensure_ascii=False)


register_script("demo-extract-alpha", extract_alpha)
register_script("demo-extract-beta", extract_beta)
register_script("demo-cluster", demo_cluster)


def _load_truth() -> dict:
    return json.loads((DATA_DIR / "truth.json").read_text(encoding="utf-8"))


def scripted_vote(truth: dict, annotator: str, task: AnnotationTask):
    """Deterministic annotator: ground truth with per-annotator deviations."""
    truly = task.entry_id in truth["purpose_entries"]
    yes = truly
    if task.entry_id in truth["entry_dissent_no"].get(annotator, []):
        yes = False
    if task.entry_id in truth["entry_dissent_yes"].get(annotator, []):
        yes = True
    if not yes:
        return False, None
    judgments = {}
    flip = task.entry_id in truth["purpose_flip_entries"].get(annotator, [])
    markers = truth["purpose_invalid_markers"].get("*", []) + truth[
        "purpose_invalid_markers"
    ].get(annotator, [])
    for purpose in task.purposes:
        valid = not any(marker in purpose.text for marker in markers)
        if flip:
            valid = not valid
        judgments[purpose.key] = valid
    return True, judgments


def _logical_clock():
    epoch = dt.datetime(1970, 1, 1, tzinfo=dt.timezone.utc)
    tick = 0

    def clock() -> str:
        nonlocal tick
        tick += 1
        return (epoch + dt.timedelta(seconds=tick)).isoformat()

    return clock


def run_demo(out_dir: str | Path, config: PipelineConfig | None = None, seed: int = 0) -> dict:
    """Full pipeline over the bundled corpus; returns a summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config or load_config(DATA_DIR / "config.ini")
    counter = get_counter(cfg.token_counter)
    corpus_path = DATA_DIR / "corpus.jsonl"
    authors_path = DATA_DIR / "authors.jsonl"
    prompt_path = DATA_DIR / "extract_prompt.txt"

    # ingest + filter + stats
    authors, author_errors = ingest_authors(authors_path.read_text(encoding="utf-8").splitlines())
    corpus, entry_errors = ingest_corpus(
        corpus_path.read_text(encoding="utf-8").splitlines(), authors, cfg.window
    )
    eligible, exclusions = filter_entries(
        corpus, whitespace_tokens, counter, cfg.max_tokens, cfg.min_words
    )
    write_json(
        out / "ingest_report.json",
        {
            "entries_loaded": len(corpus),
            "eligible": len(eligible),
            "errors": [str(e) for e in author_errors + entry_errors],
        },
    )
    write_jsonl(out / "exclusions.jsonl", [{"entry_id": x.entry_id, "reason": x.reason} for x in exclusions])
    stats = corpus_stats(corpus, counter)
    write_json(
        out / "stats.json",
        {
            "entry_count": stats.entry_count,
            "token_count": stats.token_count,
            "avg_tokens": round(stats.avg_tokens, 2),
            "stddev_tokens": round(stats.stddev_tokens, 2),
            "gender": stats.gender_counts,
            "age": stats.age_counts,
            "period": stats.period_counts,
        },
    )

    # extractors: template baseline plus the two scripted models
    template = PromptTemplate.from_file(prompt_path)
    lexicon = load_lexicon(str(DATA_DIR / "lexicon.ini"))
    runs: dict[str, ExtractionRun] = {
        "baseline": ExtractionRun("baseline", tuple(run_baseline(eligible, lexicon)))
    }
    providers = {
        "alpha": ScriptedProvider(handler=extract_alpha),
        "beta": ScriptedProvider(handler=extract_beta),
    }
    for name, provider in providers.items():
        spec = cfg.extractor(name)
        runs[name] = run_extractor(
            eligible,
            ExtractorConfig(name, spec.model, spec.temperature, spec.max_output_tokens),
            provider,
            template,
            counter,
            cfg.budget,
            cfg.batch_max_entries,
        )
    for name, run in runs.items():
        path = write_jsonl(
            out / f"results_{name}.jsonl",
            [
                {"entry_id": r.entry_id, "extractor_id": r.extractor_id, "purposes": list(r.purposes)}
                for r in run.records
            ],
        )
        write_manifest(path, f"demo:extract:{name}", [corpus_path, authors_path, prompt_path],
                       cfg.to_dict(), seed)

    # union feeds the annotation tasks (entry text embedded)
    union = union_entry_sets(list(runs.values()))
    union_records = [
        {
            "entry_id": entry_id,
            "extractors": sorted(union.entries[entry_id]),
            "purposes": {ext: list(p) for ext, p in sorted(union.entries[entry_id].items())},
            "text": corpus.entry(entry_id).text,
        }
        for entry_id in sorted(union.entries)
    ]
    union_path = write_jsonl(out / "union.jsonl", union_records)
    write_manifest(union_path, "demo:union", [corpus_path], cfg.to_dict(), seed)

    # scripted annotators vote through the real store, log included
    truth = _load_truth()
    tasks = [AnnotationTask.from_dict(rec) for rec in union_records]
    votes_path = out / "votes.jsonl"
    if votes_path.exists():
        votes_path.unlink()
    store = AnnotationStore(
        tasks, list(cfg.annotators), cfg.panel_size, log_path=votes_path, clock=_logical_clock()
    )
    progressed = True
    while progressed:
        progressed = False
        for annotator in cfg.annotators:
            task = store.next_task(annotator)
            if task is None:
                continue
            has_purpose, judgments = scripted_vote(truth, annotator, task)
            store.submit_vote(task.entry_id, annotator, has_purpose, judgments)
            progressed = True

    gold = aggregate_majority(store.latest_votes(), cfg.panel_size, universe=store.tasks)
    gold_path = write_json(out / "gold.json", gold.to_dict())
    write_manifest(gold_path, "demo:aggregate", [union_path], cfg.to_dict(), seed)
    agreement = {}
    for question in ("entry", "purpose"):
        try:
            agreement[question] = compute_alpha(
                store.latest_votes(), question, panel_size=cfg.panel_size
            )
        except UndefinedAlphaError as exc:
            agreement[question] = None
            agreement[f"{question}_reason"] = str(exc)
    write_json(out / "agreement.json", agreement)

    # Table-5-style evaluation of every run and the model unions
    gold_entries = set(gold.correct_entries)
    rows = []
    for name in ("baseline", "alpha", "beta"):
        rows.append((name, identification_metrics(runs[name].entry_ids(), gold_entries)))
    alpha_set = runs["alpha"].entry_ids()
    beta_set = runs["beta"].entry_ids()
    baseline_set = runs["baseline"].entry_ids()
    rows.append(("alpha U beta", identification_metrics(alpha_set | beta_set, gold_entries)))
    rows.append(
        (
            "baseline U alpha U beta",
            identification_metrics(baseline_set | alpha_set | beta_set, gold_entries),
        )
    )
    eval_path = out / "evaluation.csv"
    eval_path.write_text(identification_table_csv(rows), encoding="utf-8")
    write_manifest(eval_path, "demo:evaluate", [gold_path], cfg.to_dict(), seed)

    # purpose-level extraction results over the gold entries
    purpose_lines = ["extractor,purposes,mean_per_entry,correct_purposes,precision"]
    for name in ("alpha", "beta"):
        restricted = [r for r in runs[name].records if r.entry_id in gold_entries]
        metrics = purpose_metrics(restricted, gold.correct_purposes, name)
        mean_cell, precision_cell = metrics.cells()
        purpose_lines.append(
            f"{name},{metrics.purposes},{mean_cell},{metrics.correct_purposes},{precision_cell}"
        )
    (out / "purpose_metrics.csv").write_text("\n".join(purpose_lines) + "\n", encoding="utf-8")

    # cluster the correct purposes of the alpha extractor
    purposes = []
    for record in runs["alpha"].records:
        if record.entry_id not in gold_entries:
            continue
        for index, text in enumerate(record.purposes):
            if (record.entry_id, "alpha", index) in gold.correct_purposes:
                purposes.append(
                    PurposeItem(f"{record.entry_id}:alpha:{index:02d}", text, record.entry_id, "alpha")
                )
    write_jsonl(
        out / "purposes.jsonl",
        [
            {"purpose_id": p.purpose_id, "entry_id": p.entry_id, "extractor_id": p.extractor_id,
             "text": p.text}
            for p in purposes
        ],
    )
    job = ClusterJob(
        model_id="scripted-cluster",
        init_template=(DATA_DIR / "cluster_init_prompt.txt").read_text(encoding="utf-8"),
        assign_template=(DATA_DIR / "cluster_assign_prompt.txt").read_text(encoding="utf-8"),
        budget=cfg.budget,
        max_stalls=cfg.max_stalls,
        max_rounds=cfg.max_rounds,
    )
    outcome = cluster_all(purposes, ScriptedProvider(handler=demo_cluster), job, counter)
    label = outcome.partition.label_of()
    partition_path = write_jsonl(
        out / "partition.jsonl",
        [
            {"purpose_id": p.purpose_id, "entry_id": p.entry_id, "cluster": label[p.purpose_id]}
            for p in sorted(purposes, key=lambda p: p.purpose_id)
        ],
    )
    write_manifest(partition_path, "demo:cluster", [gold_path], cfg.to_dict(), seed)

    # reference partition from the same keyword rule; scripted run must agree
    reference = Partition(
        {
            name: {p.purpose_id for p in purposes if cluster_keyword(p.text) == name}
            for name in CLUSTER_NAMES
            if any(cluster_keyword(p.text) == name for p in purposes)
        }
    )
    write_jsonl(
        out / "partition_ref.jsonl",
        [
            {"purpose_id": p.purpose_id, "entry_id": p.entry_id,
             "cluster": cluster_keyword(p.text)}
            for p in sorted(purposes, key=lambda p: p.purpose_id)
        ],
    )
    ri = rand_index(outcome.partition, reference)
    write_json(out / "cluster_eval.json", {"rand_index": ri})

    # per-entry-per-cluster dedup, then demographic composition
    deduped = dedupe_entry_cluster(outcome.partition, purposes)
    frequency = frequency_distribution(deduped, outcome.partition)
    reports = [
        cluster_composition(deduped, outcome.partition, corpus, dim)
        for dim in ("gender", "age", "period")
    ]
    report_files = emit_report(
        reports, frequency, out / "report", gender_ratios(corpus, deduped)
    )
    write_manifest(out / "report" / "summary.json", "demo:report", [partition_path],
                   cfg.to_dict(), seed)

    return {
        "entries": len(corpus),
        "eligible": len(eligible),
        "tasks": len(tasks),
        "gold_entries": len(gold.correct_entries),
        "gold_purposes": len(gold.correct_purposes),
        "clustered_purposes": len(purposes),
        "deduped_purposes": len(deduped),
        "rand_index": ri,
        "agreement": agreement,
        "rounds": len(outcome.rounds),
        "report_files": [str(p) for p in report_files],
    }
