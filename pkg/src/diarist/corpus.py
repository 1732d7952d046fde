"""Corpus ingestion, validation, filtering and demographic enrichment.

A corpus is immutable once ingested; per-record validation failures are
collected with line numbers instead of aborting the load.
"""

from __future__ import annotations

import datetime as dt
import json
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .errors import OutOfWindowError
from .tokencount import TokenCounter

DEFAULT_WINDOW = (1922, 1929)


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class AgeCategory(str, Enum):
    PRE_ADULTHOOD = "pre_adulthood"
    EARLY_ADULTHOOD = "early_adulthood"
    MIDDLE_ADULTHOOD = "middle_adulthood"
    LATE_ADULTHOOD = "late_adulthood"


class PeriodBucket(str, Enum):
    EARLY = "early"
    MID = "mid"
    LATE = "late"


# (bucket, first year, last year); edges follow the 1920s corpus convention.
DEFAULT_PERIOD_BUCKETS: tuple[tuple[PeriodBucket, int, int], ...] = (
    (PeriodBucket.EARLY, 1922, 1923),
    (PeriodBucket.MID, 1924, 1926),
    (PeriodBucket.LATE, 1927, 1929),
)


@dataclass(frozen=True)
class Author:
    author_id: str
    gender: Gender = Gender.UNKNOWN
    birth_year: int | None = None


@dataclass(frozen=True)
class DiaryEntry:
    entry_id: str
    author_id: str
    date: dt.date
    text: str


@dataclass(frozen=True)
class RecordError:
    source: str  # "authors" | "entries"
    line: int
    message: str
    entry_id: str | None = None

    def __str__(self) -> str:
        where = f"{self.source}:{self.line}"
        return f"{where}: {self.message}" if self.entry_id is None else (
            f"{where} [{self.entry_id}]: {self.message}"
        )


@dataclass(frozen=True)
class Exclusion:
    entry_id: str
    reason: str  # "too_short" | "too_long"


@dataclass(frozen=True)
class Pricing:
    """Per-model token pricing; rates are per million tokens."""

    input_per_million: float
    output_per_million: float = 0.0
    expected_output_tokens: int = 0


@dataclass(frozen=True)
class CorpusStats:
    entry_count: int
    token_count: int
    avg_tokens: float
    stddev_tokens: float
    gender_counts: dict[str, int]
    age_counts: dict[str, int]
    period_counts: dict[str, int]
    estimated_cost: dict[str, float] = field(default_factory=dict)


class Corpus:
    """Immutable set of validated diary entries plus their authors."""

    def __init__(
        self,
        entries: Sequence[DiaryEntry],
        authors: Mapping[str, Author],
        window: tuple[int, int] = DEFAULT_WINDOW,
        period_buckets: Sequence[tuple[PeriodBucket, int, int]] = DEFAULT_PERIOD_BUCKETS,
    ) -> None:
        self._entries = tuple(entries)
        self._authors = dict(authors)
        self._by_id = {e.entry_id: e for e in self._entries}
        self.window = window
        self.period_buckets = tuple(period_buckets)

    @property
    def entries(self) -> tuple[DiaryEntry, ...]:
        return self._entries

    @property
    def authors(self) -> dict[str, Author]:
        return dict(self._authors)

    def __len__(self) -> int:
        return len(self._entries)

    def entry(self, entry_id: str) -> DiaryEntry:
        return self._by_id[entry_id]

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._by_id

    def author_of(self, entry: DiaryEntry) -> Author:
        return self._authors[entry.author_id]

    def gender_of(self, entry: DiaryEntry) -> Gender:
        return self.author_of(entry).gender

    def age_category_of(self, entry: DiaryEntry) -> AgeCategory | None:
        """Age bucket for the entry's author, or None when birth year is absent."""
        birth = self.author_of(entry).birth_year
        if birth is None:
            return None
        return derive_age_category(birth, entry.date)

    def period_of(self, entry: DiaryEntry) -> PeriodBucket:
        return derive_period(entry.date, self.period_buckets)


def derive_age_category(birth_year: int, entry_date: dt.date) -> AgeCategory:
    """Map author age at writing time onto the four adult-development stages.

    Age is entry year minus birth year; 17 and under is pre-adulthood, the
    next bands start at 18, 40 and 60.
    """
    age = entry_date.year - birth_year
    if age < 0:
        raise ValueError(f"entry year {entry_date.year} precedes birth year {birth_year}")
    if age <= 17:
        return AgeCategory.PRE_ADULTHOOD
    if age <= 39:
        return AgeCategory.EARLY_ADULTHOOD
    if age <= 59:
        return AgeCategory.MIDDLE_ADULTHOOD
    return AgeCategory.LATE_ADULTHOOD


def derive_period(
    entry_date: dt.date,
    buckets: Sequence[tuple[PeriodBucket, int, int]] = DEFAULT_PERIOD_BUCKETS,
) -> PeriodBucket:
    year = entry_date.year
    for bucket, first, last in buckets:
        if first <= year <= last:
            return bucket
    lo = min(first for _, first, _ in buckets)
    hi = max(last for _, _, last in buckets)
    raise OutOfWindowError(f"year {year} outside corpus window [{lo}, {hi}]")


def _parse_json_line(line: str) -> dict | None:
    line = line.strip()
    if not line:
        return None
    return json.loads(line)


def ingest_authors(lines: Iterable[str]) -> tuple[dict[str, Author], list[RecordError]]:
    """Load the authors file; malformed records are reported, not fatal."""
    authors: dict[str, Author] = {}
    first_line: dict[str, int] = {}
    errors: list[RecordError] = []
    for lineno, raw in enumerate(lines, start=1):
        try:
            rec = _parse_json_line(raw)
        except json.JSONDecodeError as exc:
            errors.append(RecordError("authors", lineno, f"invalid JSON: {exc}"))
            continue
        if rec is None:
            continue
        author_id = rec.get("author_id")
        if not author_id:
            errors.append(RecordError("authors", lineno, "missing author_id"))
            continue
        if author_id in authors:
            errors.append(
                RecordError(
                    "authors", lineno,
                    f"duplicate author_id {author_id!r} (first seen at line {first_line[author_id]})",
                )
            )
            continue
        gender_raw = rec.get("gender", "unknown") or "unknown"
        try:
            gender = Gender(gender_raw)
        except ValueError:
            errors.append(RecordError("authors", lineno, f"unknown gender {gender_raw!r}"))
            continue
        birth_year = rec.get("birth_year")
        if birth_year is not None:
            if not isinstance(birth_year, int) or not 1000 <= birth_year <= 9999:
                errors.append(
                    RecordError("authors", lineno, f"birth_year {birth_year!r} is not a 4-digit year")
                )
                continue
        authors[author_id] = Author(author_id, gender, birth_year)
        first_line[author_id] = lineno
    return authors, errors


def ingest_corpus(
    entry_lines: Iterable[str],
    authors: Mapping[str, Author],
    window: tuple[int, int] = DEFAULT_WINDOW,
    period_buckets: Sequence[tuple[PeriodBucket, int, int]] = DEFAULT_PERIOD_BUCKETS,
) -> tuple[Corpus, list[RecordError]]:
    """Load and validate entry records against an already-loaded author table."""
    entries: list[DiaryEntry] = []
    first_line: dict[str, int] = {}
    errors: list[RecordError] = []
    for lineno, raw in enumerate(entry_lines, start=1):
        try:
            rec = _parse_json_line(raw)
        except json.JSONDecodeError as exc:
            errors.append(RecordError("entries", lineno, f"invalid JSON: {exc}"))
            continue
        if rec is None:
            continue
        entry_id = rec.get("entry_id")
        if not entry_id:
            errors.append(RecordError("entries", lineno, "missing entry_id"))
            continue
        if entry_id in first_line:
            errors.append(
                RecordError(
                    "entries", lineno,
                    f"duplicate entry_id (first seen at line {first_line[entry_id]})",
                    entry_id=entry_id,
                )
            )
            continue
        first_line[entry_id] = lineno

        author_id = rec.get("author_id")
        if not author_id or author_id not in authors:
            errors.append(
                RecordError("entries", lineno, f"unknown author_id {author_id!r}", entry_id=entry_id)
            )
            continue
        try:
            date = dt.date.fromisoformat(str(rec.get("date")))
        except (TypeError, ValueError):
            errors.append(
                RecordError("entries", lineno, f"unparseable date {rec.get('date')!r}", entry_id=entry_id)
            )
            continue
        if not window[0] <= date.year <= window[1]:
            errors.append(
                RecordError(
                    "entries", lineno,
                    f"date {date.isoformat()} outside window [{window[0]}, {window[1]}]",
                    entry_id=entry_id,
                )
            )
            continue
        text = rec.get("text")
        if not isinstance(text, str) or not text.strip():
            errors.append(RecordError("entries", lineno, "empty text", entry_id=entry_id))
            continue
        birth = authors[author_id].birth_year
        if birth is not None and date.year <= birth:
            errors.append(
                RecordError(
                    "entries", lineno,
                    f"entry date {date.isoformat()} not after author birth year {birth}",
                    entry_id=entry_id,
                )
            )
            continue
        entries.append(DiaryEntry(entry_id, author_id, date, text))
    return Corpus(entries, authors, window, period_buckets), errors


def filter_entries(
    corpus: Corpus,
    word_counter: Callable[[str], int],
    token_counter: TokenCounter,
    max_tokens: int = 1400,
    min_words: int = 3,
) -> tuple[list[DiaryEntry], list[Exclusion]]:
    """Drop too-short and too-long entries; every drop is logged with its rule."""
    if max_tokens <= 0:
        raise ValueError("max_tokens must be positive")
    kept: list[DiaryEntry] = []
    excluded: list[Exclusion] = []
    for entry in corpus.entries:
        if word_counter(entry.text) < min_words:
            excluded.append(Exclusion(entry.entry_id, "too_short"))
        elif token_counter(entry.text) > max_tokens:
            excluded.append(Exclusion(entry.entry_id, "too_long"))
        else:
            kept.append(entry)
    return kept, excluded


def corpus_stats(
    corpus: Corpus,
    token_counter: TokenCounter,
    pricing: Mapping[str, Pricing] | None = None,
) -> CorpusStats:
    """Bucket counts, token totals and optional per-extractor cost estimates."""
    tokens = [token_counter(e.text) for e in corpus.entries]
    total = sum(tokens)
    gender_counts = {g.value: 0 for g in Gender}
    age_counts = {c.value: 0 for c in AgeCategory}
    age_counts["unknown"] = 0
    period_counts = {p.value: 0 for p in PeriodBucket}
    for entry in corpus.entries:
        gender_counts[corpus.gender_of(entry).value] += 1
        category = corpus.age_category_of(entry)
        age_counts[category.value if category else "unknown"] += 1
        period_counts[corpus.period_of(entry).value] += 1

    costs: dict[str, float] = {}
    if pricing:
        for name, rate in pricing.items():
            expected_out = rate.expected_output_tokens * len(corpus.entries)
            costs[name] = (
                total * rate.input_per_million + expected_out * rate.output_per_million
            ) / 1_000_000

    return CorpusStats(
        entry_count=len(corpus.entries),
        token_count=total,
        avg_tokens=total / len(corpus.entries) if corpus.entries else 0.0,
        stddev_tokens=statistics.pstdev(tokens) if tokens else 0.0,
        gender_counts=gender_counts,
        age_counts=age_counts,
        period_counts=period_counts,
        estimated_cost=costs,
    )
