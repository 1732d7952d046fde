from __future__ import annotations

import json
from pathlib import Path

import pytest

from diarist.cli import main
from diarist.demo import DATA_DIR

DEMO_CONFIG = str(DATA_DIR / "config.ini")
DEMO_CORPUS = str(DATA_DIR / "corpus.jsonl")
DEMO_AUTHORS = str(DATA_DIR / "authors.jsonl")


def run(*args: str) -> int:
    return main(list(args))


def test_unknown_subcommand_exits_2(capsys):
    assert run("frobnicate") == 2


def test_missing_input_file_is_config_error(tmp_path, capsys):
    code = run("ingest", "--corpus", str(tmp_path / "nope.jsonl"),
               "--authors", DEMO_AUTHORS)
    assert code == 2
    assert "does not exist" in capsys.readouterr().err


def test_ingest_and_stats(tmp_path, capsys):
    out = tmp_path / "normalized.jsonl"
    errors = tmp_path / "errors.jsonl"
    assert run("ingest", "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--out", str(out), "--errors", str(errors)) == 0
    assert out.exists() and (tmp_path / "normalized.jsonl.manifest.json").exists()
    captured = capsys.readouterr().out
    assert "52 entries" in captured

    assert run("stats", "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--pricing", "m1=2.50:10.0") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["entry_count"] == 52
    assert payload["estimated_cost"]["m1"] > 0


def test_stats_rejects_bad_pricing(capsys):
    assert run("stats", "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--pricing", "oops") == 2


def test_baseline_extract_union_flow(tmp_path, capsys):
    baseline_out = tmp_path / "baseline.jsonl"
    assert run("baseline", "--lexicon", str(DATA_DIR / "lexicon.ini"),
               "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--out", str(baseline_out)) == 0
    assert baseline_out.exists()
    assert (tmp_path / "baseline.exclusions.jsonl").exists()

    alpha_out = tmp_path / "alpha.jsonl"
    assert run("--config", DEMO_CONFIG, "extract", "--extractor", "alpha",
               "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--prompt", str(DATA_DIR / "extract_prompt.txt"),
               "--out", str(alpha_out)) == 0
    records = [json.loads(l) for l in alpha_out.read_text().splitlines()]
    assert all(r["extractor_id"] == "alpha" for r in records)
    assert len(records) == 13

    union_out = tmp_path / "union.jsonl"
    assert run("union", "--in", str(baseline_out), "--in", str(alpha_out),
               "--out", str(union_out), "--corpus", DEMO_CORPUS,
               "--authors", DEMO_AUTHORS) == 0
    union_records = [json.loads(l) for l in union_out.read_text().splitlines()]
    assert all("text" in r for r in union_records)
    baseline_ids = {json.loads(l)["entry_id"] for l in baseline_out.read_text().splitlines()}
    alpha_ids = {r["entry_id"] for r in records}
    assert {r["entry_id"] for r in union_records} == baseline_ids | alpha_ids


def test_extract_missing_prompt_is_config_error(tmp_path, capsys):
    code = run("--config", DEMO_CONFIG, "extract", "--extractor", "alpha",
               "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--prompt", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o.jsonl"))
    assert code == 2


def test_extract_unknown_extractor_is_config_error(tmp_path):
    code = run("--config", DEMO_CONFIG, "extract", "--extractor", "nope",
               "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--prompt", str(DATA_DIR / "extract_prompt.txt"),
               "--out", str(tmp_path / "o.jsonl"))
    assert code == 2


def test_evaluate_counts_mode_reproduces_published_table(tmp_path, capsys):
    counts = tmp_path / "counts.json"
    counts.write_text(json.dumps([
        ["baseline", 177, 35],
        ["gpt-4o", 108, 83],
        ["o1-mini", 71, 48],
        ["deepseek", 290, 140],
        ["gpt-4o U o1-mini", 153, 107],
        ["gpt-4o U deepseek", 306, 147],
        ["o1-mini U deepseek", 319, 156],
        ["gpt-4o U o1-mini U deepseek", 333, 161],
    ]))
    out = tmp_path / "table.csv"
    assert run("evaluate", "--counts", str(counts), "--gold-total", "170",
               "--out", str(out)) == 0
    table = out.read_text().splitlines()
    assert "baseline,177,35,0.1977,0.2059,0.2017" in table
    assert "gpt-4o,108,83,0.7685,0.4882,0.5971" in table
    assert "o1-mini,71,48,0.6761,0.2824,0.3983" in table
    assert "deepseek,290,140,0.4828,0.8235,0.6087" in table
    assert "gpt-4o U o1-mini,153,107,0.6993,0.6294,0.6625" in table
    # exact arithmetic; the printed source table is off by one ulp in three
    # of these cells (see the acceptance suite notes)
    assert "gpt-4o U deepseek,306,147,0.4804,0.8647,0.6176" in table
    assert "o1-mini U deepseek,319,156,0.4890,0.9176,0.6380" in table
    assert "gpt-4o U o1-mini U deepseek,333,161,0.4835,0.9471,0.6402" in table


def test_evaluate_requires_inputs(tmp_path):
    assert run("evaluate", "--out", str(tmp_path / "t.csv")) == 2
    counts = tmp_path / "counts.json"
    counts.write_text("[]")
    assert run("evaluate", "--counts", str(counts), "--out", str(tmp_path / "t.csv")) == 2


def test_demo_then_downstream_commands(tmp_path, capsys):
    demo_dir = tmp_path / "demo"
    assert run("demo", "--out", str(demo_dir)) == 0
    capsys.readouterr()

    # aggregate the demo vote log against the demo tasks
    gold_out = tmp_path / "gold.json"
    assert run("aggregate", "--log", str(demo_dir / "votes.jsonl"),
               "--out", str(gold_out), "--tasks", str(demo_dir / "union.jsonl")) == 0
    gold = json.loads(gold_out.read_text())
    reference = json.loads((demo_dir / "gold.json").read_text())
    assert gold == reference

    # evaluate the demo runs against the gold set, with a union row
    eval_out = tmp_path / "eval.csv"
    assert run("evaluate",
               "--results", str(demo_dir / "results_alpha.jsonl"),
               "--results", str(demo_dir / "results_beta.jsonl"),
               "--gold", str(gold_out), "--union", "alpha+beta",
               "--out", str(eval_out)) == 0
    lines = eval_out.read_text().splitlines()
    assert lines[1].startswith("alpha,13,11,")
    assert any(line.startswith("alpha U beta,14,12,") for line in lines)

    # cluster the demo purposes with the scripted provider, then evaluate
    partition_out = tmp_path / "partition.jsonl"
    assert run("--config", DEMO_CONFIG, "cluster",
               "--purposes", str(demo_dir / "purposes.jsonl"),
               "--provider", "demo-cluster",
               "--init-prompt", str(DATA_DIR / "cluster_init_prompt.txt"),
               "--assign-prompt", str(DATA_DIR / "cluster_assign_prompt.txt"),
               "--out", str(partition_out)) == 0
    assert partition_out.read_bytes() == (demo_dir / "partition.jsonl").read_bytes()

    assert run("cluster-eval", "--pred", str(partition_out),
               "--ref", str(demo_dir / "partition_ref.jsonl")) == 0
    assert "rand_index 1.0000" in capsys.readouterr().out

    report_dir = tmp_path / "report"
    assert run("report", "--purposes", str(demo_dir / "purposes.jsonl"),
               "--partition", str(partition_out),
               "--corpus", DEMO_CORPUS, "--authors", DEMO_AUTHORS,
               "--dims", "gender,age,period", "--out", str(report_dir)) == 0
    produced = {p.name for p in report_dir.iterdir()}
    assert {"frequency.csv", "composition_gender.csv", "composition_age.csv",
            "composition_period.csv", "summary.json"} <= produced
    assert (report_dir / "composition_gender.csv").read_bytes() == (
        demo_dir / "report" / "composition_gender.csv"
    ).read_bytes()


def test_aggregate_missing_log_is_config_error(tmp_path):
    assert run("aggregate", "--log", str(tmp_path / "none.jsonl"),
               "--out", str(tmp_path / "g.json")) == 2


def test_union_requires_authors_with_corpus(tmp_path, tmp_jsonl):
    results = tmp_jsonl("r.jsonl", [{"entry_id": "e1", "extractor_id": "m", "purposes": ["p"]}])
    assert run("union", "--in", results, "--out", str(tmp_path / "u.jsonl"),
               "--corpus", DEMO_CORPUS) == 2
