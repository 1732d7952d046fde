"""Pure metric kernels: precision / relative recall / relative F1 over a
pooled gold set, per-extractor purpose statistics, and the Rand index for
comparing partitions.

Internals keep full precision; rounding is half-up and happens only at
presentation time.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from math import comb
from typing import AbstractSet, Iterable, Mapping, Sequence

from .errors import UndefinedMetricError


def round_half_up(value: float, places: int) -> str:
    """Half-up decimal string for table cells ('0.4835', '1.70', ...)."""
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class IdentificationMetrics:
    answered: int
    correct: int
    gold_total: int
    precision: float
    relative_recall: float
    relative_f1: float

    def cells(self) -> tuple[str, str, str]:
        """The three table cells at 4 decimal places."""
        return (
            round_half_up(self.precision, 4),
            round_half_up(self.relative_recall, 4),
            round_half_up(self.relative_f1, 4),
        )


def identification_metrics_from_counts(
    answered: int, correct: int, gold_total: int
) -> IdentificationMetrics:
    """Precision = correct/answered (0 for an empty answer set), relative
    recall = correct/gold, relative F1 = harmonic mean."""
    if gold_total <= 0:
        raise UndefinedMetricError("gold set is empty; relative metrics undefined")
    if answered < 0 or correct < 0 or correct > min(answered, gold_total):
        raise ValueError(f"inconsistent counts: answered={answered} correct={correct} gold={gold_total}")
    precision = correct / answered if answered else 0.0
    recall = correct / gold_total
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return IdentificationMetrics(answered, correct, gold_total, precision, recall, f1)


def identification_metrics(
    answered_set: AbstractSet[str], gold_set: AbstractSet[str]
) -> IdentificationMetrics:
    return identification_metrics_from_counts(
        len(answered_set), len(answered_set & gold_set), len(gold_set)
    )


@dataclass(frozen=True)
class PurposeMetrics:
    purposes: int
    correct_entries: int
    mean_per_entry: float
    correct_purposes: int
    precision: float

    def cells(self) -> tuple[str, str]:
        """Displayed mean (2 decimals) and precision (4 decimals)."""
        return round_half_up(self.mean_per_entry, 2), round_half_up(self.precision, 4)


def purpose_metrics_from_counts(
    purposes: int, correct_entries: int, correct_purposes: int
) -> PurposeMetrics:
    if purposes <= 0:
        raise UndefinedMetricError("no purposes after gold restriction; precision undefined")
    if correct_entries <= 0:
        raise UndefinedMetricError("no correct entries; mean per entry undefined")
    if correct_purposes > purposes:
        raise ValueError("correct purposes cannot exceed purposes")
    return PurposeMetrics(
        purposes=purposes,
        correct_entries=correct_entries,
        mean_per_entry=purposes / correct_entries,
        correct_purposes=correct_purposes,
        precision=correct_purposes / purposes,
    )


def purpose_metrics(
    records: Iterable,  # ExtractionRecords already restricted to gold entries
    gold_correct_purposes: AbstractSet[tuple[str, str, int]],
    extractor_id: str,
) -> PurposeMetrics:
    """Counts over records whose entries the annotators accepted; the gold
    purpose set is keyed by (entry_id, extractor_id, purpose_index)."""
    total = 0
    entries = 0
    correct = 0
    for record in records:
        entries += 1
        total += len(record.purposes)
        for index in range(len(record.purposes)):
            if (record.entry_id, extractor_id, index) in gold_correct_purposes:
                correct += 1
    return purpose_metrics_from_counts(total, entries, correct)


class Partition:
    """Named, pairwise-disjoint clusters that exactly cover a universe."""

    def __init__(self, clusters: Mapping[str, Iterable[str]]) -> None:
        self._clusters: dict[str, frozenset[str]] = {
            name: frozenset(members) for name, members in clusters.items()
        }
        universe: set[str] = set()
        size = 0
        for name, members in self._clusters.items():
            universe |= members
            size += len(members)
        if size != len(universe):
            raise ValueError("clusters overlap")
        self._universe = frozenset(universe)

    @property
    def universe(self) -> frozenset[str]:
        return self._universe

    @property
    def clusters(self) -> dict[str, frozenset[str]]:
        return dict(self._clusters)

    def label_of(self) -> dict[str, str]:
        return {member: name for name, members in self._clusters.items() for member in members}

    def __len__(self) -> int:
        return len(self._universe)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self._clusters == other._clusters


def rand_index(p: Partition, q: Partition) -> float:
    """Fraction of element pairs on which two partitions agree.

    RI = (a + d) / C(n, 2): a pairs co-clustered in both, d pairs separated
    in both. Computed from the contingency table rather than by pair
    enumeration."""
    if p.universe != q.universe:
        raise ValueError("partitions are over different universes")
    n = len(p.universe)
    if n < 2:
        raise UndefinedMetricError("Rand index needs at least two elements")
    label_q = q.label_of()
    contingency: dict[tuple[str, str], int] = {}
    for name, members in p.clusters.items():
        for member in members:
            key = (name, label_q[member])
            contingency[key] = contingency.get(key, 0) + 1
    sum_cells = sum(comb(v, 2) for v in contingency.values())
    sum_rows = sum(comb(len(m), 2) for m in p.clusters.values())
    sum_cols = sum(comb(len(m), 2) for m in q.clusters.values())
    pairs = comb(n, 2)
    agreements = pairs + 2 * sum_cells - sum_rows - sum_cols
    return agreements / pairs


def mean_rand_over_sets(pairs: Sequence[tuple[Partition, Partition]]) -> float:
    if not pairs:
        raise ValueError("mean over an empty list of partition pairs")
    return sum(rand_index(p, q) for p, q in pairs) / len(pairs)


def identification_table_csv(rows: Sequence[tuple[str, IdentificationMetrics]]) -> str:
    """Comma-separated table with the identification-results column layout:
    extractor, answered entries, correct entries, then the three metrics at
    4 decimal places."""
    lines = ["extractor,entries,correct_entries,precision,relative_recall,relative_f1"]
    for name, metrics in rows:
        precision, recall, f1 = metrics.cells()
        lines.append(f"{name},{metrics.answered},{metrics.correct},{precision},{recall},{f1}")
    return "\n".join(lines) + "\n"
