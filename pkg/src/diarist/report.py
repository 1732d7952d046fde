"""Cluster composition by author demographics.

Counting unit is the deduplicated purpose. For each demographic dimension the
report gives, per cluster, the count and the within-group proportion (count
over that group's total purposes), with clusters ordered by overall frequency.
Purposes whose entry lacks the attribute are excluded from that dimension and
the exclusion is counted, not silently dropped.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .clustering import PurposeItem
from .corpus import AgeCategory, Corpus, Gender, PeriodBucket
from .metrics import Partition, round_half_up

logger = logging.getLogger(__name__)

DIMENSIONS = ("gender", "age", "period")

_GROUP_ORDER = {
    "gender": [Gender.MALE.value, Gender.FEMALE.value],
    "age": [c.value for c in AgeCategory],
    "period": [p.value for p in PeriodBucket],
}


@dataclass(frozen=True)
class FrequencyRow:
    cluster: str
    count: int


@dataclass(frozen=True)
class CompositionRow:
    cluster: str
    counts: dict[str, int]
    proportions: dict[str, float]


@dataclass(frozen=True)
class CompositionReport:
    dimension: str
    groups: tuple[str, ...]
    group_totals: dict[str, int]
    rows: tuple[CompositionRow, ...]
    excluded_missing: int = 0
    omitted_groups: tuple[str, ...] = ()


def frequency_distribution(
    purposes: Sequence[PurposeItem], partition: Partition
) -> list[FrequencyRow]:
    """Clusters by descending purpose count, name as tiebreak."""
    if not purposes:
        raise ValueError("no purposes to report")
    label = partition.label_of()
    counts: dict[str, int] = {name: 0 for name in partition.clusters}
    for purpose in purposes:
        counts[label[purpose.purpose_id]] += 1
    return [
        FrequencyRow(name, count)
        for name, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]


def _attribute(corpus: Corpus, entry_id: str, dimension: str) -> str | None:
    entry = corpus.entry(entry_id)
    if dimension == "gender":
        gender = corpus.gender_of(entry)
        return None if gender is Gender.UNKNOWN else gender.value
    if dimension == "age":
        category = corpus.age_category_of(entry)
        return category.value if category else None
    if dimension == "period":
        return corpus.period_of(entry).value
    raise ValueError(f"unknown dimension {dimension!r}")


def cluster_composition(
    purposes: Sequence[PurposeItem],
    partition: Partition,
    corpus: Corpus,
    dimension: str,
) -> CompositionReport:
    label = partition.label_of()
    order = [row.cluster for row in frequency_distribution(purposes, partition)]

    counts: dict[str, dict[str, int]] = {cluster: {} for cluster in order}
    totals: dict[str, int] = {}
    excluded = 0
    for purpose in purposes:
        group = _attribute(corpus, purpose.entry_id, dimension)
        if group is None:
            excluded += 1
            continue
        totals[group] = totals.get(group, 0) + 1
        cluster_counts = counts[label[purpose.purpose_id]]
        cluster_counts[group] = cluster_counts.get(group, 0) + 1
    if excluded:
        logger.info("%s report: %d purpose(s) excluded for missing attribute", dimension, excluded)

    groups = [g for g in _GROUP_ORDER[dimension] if totals.get(g, 0) > 0]
    omitted = tuple(g for g in _GROUP_ORDER[dimension] if totals.get(g, 0) == 0)
    for group in omitted:
        logger.warning("%s report: group %r has zero purposes; omitted", dimension, group)

    rows = tuple(
        CompositionRow(
            cluster=cluster,
            counts={g: counts[cluster].get(g, 0) for g in groups},
            proportions={g: counts[cluster].get(g, 0) / totals[g] for g in groups},
        )
        for cluster in order
    )
    return CompositionReport(
        dimension=dimension,
        groups=tuple(groups),
        group_totals={g: totals[g] for g in groups},
        rows=rows,
        excluded_missing=excluded,
        omitted_groups=omitted,
    )


def gender_ratios(corpus: Corpus, purposes: Sequence[PurposeItem]) -> dict[str, float | None]:
    """Male:female entry ratios, corpus-wide and among entries backing the
    reported purposes. None when the denominator is zero."""

    def ratio(male: int, female: int) -> float | None:
        return male / female if female else None

    corpus_m = sum(1 for e in corpus.entries if corpus.gender_of(e) is Gender.MALE)
    corpus_f = sum(1 for e in corpus.entries if corpus.gender_of(e) is Gender.FEMALE)
    entry_ids = {p.entry_id for p in purposes}
    gold_m = sum(
        1 for eid in entry_ids if corpus.gender_of(corpus.entry(eid)) is Gender.MALE
    )
    gold_f = sum(
        1 for eid in entry_ids if corpus.gender_of(corpus.entry(eid)) is Gender.FEMALE
    )
    return {
        "corpus_male_entries": corpus_m,
        "corpus_female_entries": corpus_f,
        "corpus_male_female_ratio": ratio(corpus_m, corpus_f),
        "purpose_entries_male": gold_m,
        "purpose_entries_female": gold_f,
        "purpose_entries_male_female_ratio": ratio(gold_m, gold_f),
    }


def composition_csv(report: CompositionReport) -> str:
    """Comma-separated table: clusters in frequency order; header carries the
    per-group totals; proportions displayed at 2 decimals."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = ["cluster"]
    for group in report.groups:
        total = report.group_totals[group]
        header += [f"{group}(n={total})_count", f"{group}(n={total})_prop"]
    writer.writerow(header)
    for row in report.rows:
        cells: list[str] = [row.cluster]
        for group in report.groups:
            cells.append(str(row.counts[group]))
            cells.append(round_half_up(row.proportions[group], 2))
        writer.writerow(cells)
    return buffer.getvalue()


def frequency_csv(rows: Sequence[FrequencyRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["cluster", "count"])
    for row in rows:
        writer.writerow([row.cluster, str(row.count)])
    return buffer.getvalue()


def emit_report(
    reports: Sequence[CompositionReport],
    frequency: Sequence[FrequencyRow],
    out_dir: str | Path,
    ratios: dict[str, float | None] | None = None,
    formats: Sequence[str] = ("delimited_table", "structured"),
) -> list[Path]:
    """Write the frequency table, one composition table per dimension, and a
    structured summary. Output is byte-deterministic for identical inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "delimited_table" in formats:
        path = out / "frequency.csv"
        path.write_text(frequency_csv(frequency), encoding="utf-8")
        written.append(path)
        for report in reports:
            path = out / f"composition_{report.dimension}.csv"
            path.write_text(composition_csv(report), encoding="utf-8")
            written.append(path)
    if "structured" in formats:
        payload = {
            "frequency": [{"cluster": r.cluster, "count": r.count} for r in frequency],
            "dimensions": {
                report.dimension: {
                    "group_totals": report.group_totals,
                    "excluded_missing_attribute": report.excluded_missing,
                    "omitted_groups": list(report.omitted_groups),
                    "rows": [
                        {
                            "cluster": row.cluster,
                            "counts": row.counts,
                            "proportions": {
                                g: round(p, 6) for g, p in row.proportions.items()
                            },
                        }
                        for row in report.rows
                    ],
                }
                for report in reports
            },
            "gender_ratios": ratios or {},
        }
        path = out / "summary.json"
        path.write_text(
            json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        written.append(path)
    return written
