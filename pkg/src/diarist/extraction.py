"""Batch construction, prompt rendering, extractor runs and entry-set unions.

Eligible entries are greedily packed into batches of at most ten entries whose
rendered prompt stays under the token budget. Responses must be a JSON array
of {entry_id, purposes:[...]} objects; one repair re-prompt is attempted
before a batch is marked failed. Entries with no purposes simply produce no
record.
"""

from __future__ import annotations

import json
import logging
import re
import string
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Corpus, DiaryEntry
from .errors import BatchOversizeError, ParseError, TemplateError
from .gateway import ChatMessage, ChatRequest, Provider
from .tokencount import TokenCounter, whitespace_tokens

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 15_000
DEFAULT_MAX_ENTRIES = 10
TEMPLATE_SEPARATOR = "===ENTRY==="
REPAIR_INSTRUCTION = (
    "The previous reply could not be parsed. Respond again with only a JSON array of "
    'objects of the form {"entry_id": "...", "purposes": ["..."]}, one object per '
    "entry, nothing else."
)

_ALLOWED_PLACEHOLDERS = {"entry_id", "entry_text"}


@dataclass(frozen=True)
class PromptTemplate:
    """Per-entry block plus an optional system preamble."""

    entry_block: str
    system: str | None = None

    def __post_init__(self) -> None:
        for _, name, _, _ in string.Formatter().parse(self.entry_block):
            if name is None:
                continue
            if name not in _ALLOWED_PLACEHOLDERS:
                raise TemplateError(f"unresolvable placeholder {{{name or ''}}} in entry template")

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        text = Path(path).read_text(encoding="utf-8")
        if TEMPLATE_SEPARATOR in text:
            system, block = text.split(TEMPLATE_SEPARATOR, 1)
            return cls(entry_block=block.strip("\n"), system=system.strip() or None)
        return cls(entry_block=text.strip("\n"))


@dataclass(frozen=True)
class Batch:
    batch_id: str
    entry_ids: tuple[str, ...]
    prompt_tokens: int

    def __post_init__(self) -> None:
        if not self.entry_ids:
            raise ValueError("batches are non-empty by invariant")


@dataclass(frozen=True)
class ExtractionRecord:
    entry_id: str
    extractor_id: str
    purposes: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.purposes:
            raise ValueError("records with no purposes must not be created")
        if len(set(self.purposes)) != len(self.purposes):
            raise ValueError("purposes must be deduplicated within a record")


@dataclass(frozen=True)
class ExtractionRun:
    extractor_id: str
    records: tuple[ExtractionRecord, ...]
    failed_batches: tuple[tuple[str, str], ...] = ()
    input_tokens: int = 0
    output_tokens: int = 0

    @property
    def n_entries(self) -> int:
        return len(self.records)

    @property
    def n_purposes(self) -> int:
        return sum(len(r.purposes) for r in self.records)

    def entry_ids(self) -> set[str]:
        return {r.entry_id for r in self.records}


@dataclass(frozen=True)
class ExtractorConfig:
    extractor_id: str
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 2048


def render_entries(template: PromptTemplate, entries: Sequence[DiaryEntry]) -> tuple[ChatMessage, ...]:
    blocks = [
        template.entry_block.format(entry_id=e.entry_id, entry_text=e.text) for e in entries
    ]
    messages: list[ChatMessage] = []
    if template.system:
        messages.append(ChatMessage("system", template.system))
    messages.append(ChatMessage("user", "\n\n".join(blocks)))
    return tuple(messages)


def render_prompt(template: PromptTemplate, batch: Batch, corpus: Corpus) -> tuple[ChatMessage, ...]:
    """Deterministic rendering of a batch in batch order, entries tagged by id."""
    return render_entries(template, [corpus.entry(eid) for eid in batch.entry_ids])


def prompt_token_count(
    template: PromptTemplate, entries: Sequence[DiaryEntry], token_counter: TokenCounter
) -> int:
    return sum(token_counter(m.content) for m in render_entries(template, entries))


def build_batches(
    entries: Sequence[DiaryEntry],
    template: PromptTemplate,
    token_counter: TokenCounter,
    budget: int = DEFAULT_BUDGET,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> list[Batch]:
    """Greedy fill preserving corpus order; the batches partition the input."""
    if budget <= 0 or max_entries <= 0:
        raise ValueError("budget and max_entries must be positive")
    batches: list[Batch] = []
    current: list[DiaryEntry] = []
    current_tokens = 0

    def close() -> None:
        nonlocal current, current_tokens
        batches.append(
            Batch(f"b{len(batches):04d}", tuple(e.entry_id for e in current), current_tokens)
        )
        current, current_tokens = [], 0

    for entry in entries:
        candidate_tokens = prompt_token_count(template, current + [entry], token_counter)
        if current and (len(current) == max_entries or candidate_tokens > budget):
            close()
            candidate_tokens = prompt_token_count(template, [entry], token_counter)
        if not current and candidate_tokens > budget:
            raise BatchOversizeError(entry.entry_id, candidate_tokens, budget)
        current.append(entry)
        current_tokens = candidate_tokens
    if current:
        close()
    return batches


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*?)\n?```$", re.DOTALL)


def strip_code_fences(content: str) -> str:
    text = content.strip()
    fenced = _FENCE_RE.match(text)
    return fenced.group(1) if fenced else text


def parse_extraction_response(
    content: str, expected_entry_ids: Iterable[str], extractor_id: str
) -> list[ExtractionRecord]:
    """Parse a JSON array of {entry_id, purposes}; unknown ids are dropped with
    a warning, absent ids mean "no purpose found", purposes are trimmed and
    deduplicated. Anything non-structured raises ParseError."""
    expected = set(expected_entry_ids)
    try:
        data = json.loads(strip_code_fences(content))
    except json.JSONDecodeError as exc:
        raise ParseError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ParseError(f"expected a JSON array, got {type(data).__name__}")

    by_entry: dict[str, list[str]] = {}
    for item in data:
        if not isinstance(item, dict) or "entry_id" not in item:
            raise ParseError(f"malformed item in response array: {item!r}")
        entry_id = str(item["entry_id"])
        if entry_id not in expected:
            logger.warning("extractor %s returned unknown entry_id %r; dropped", extractor_id, entry_id)
            continue
        purposes = item.get("purposes") or []
        if not isinstance(purposes, list):
            raise ParseError(f"purposes for {entry_id!r} is not a list")
        bucket = by_entry.setdefault(entry_id, [])
        for purpose in purposes:
            if not isinstance(purpose, str):
                logger.warning("non-string purpose for %r dropped", entry_id)
                continue
            trimmed = purpose.strip()
            if trimmed and trimmed not in bucket:
                bucket.append(trimmed)

    return [
        ExtractionRecord(entry_id, extractor_id, tuple(purposes))
        for entry_id, purposes in by_entry.items()
        if purposes
    ]


class _Checkpoint:
    """Append-only batch checkpoint; a resumed run never re-submits a
    succeeded batch (failed batches are retried). Writes are serialized."""

    def __init__(self, path: str | Path | None) -> None:
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self.done: dict[str, dict] = {}
        if self._path and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self.done[rec["batch_id"]] = rec

    def record(self, batch_id: str, payload: dict) -> None:
        if payload.get("failure"):
            return  # only succeeded batches are durable
        payload = {"batch_id": batch_id, **payload}
        with self._lock:
            self.done[batch_id] = payload
            if self._path:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")


@dataclass
class _BatchOutcome:
    records: list[ExtractionRecord] = field(default_factory=list)
    failure: str | None = None
    input_tokens: int = 0
    output_tokens: int = 0


def _run_batch(
    batch: Batch,
    corpus_index: Mapping[str, DiaryEntry],
    config: ExtractorConfig,
    provider: Provider,
    template: PromptTemplate,
) -> _BatchOutcome:
    entries = [corpus_index[eid] for eid in batch.entry_ids]
    messages = render_entries(template, entries)
    request = ChatRequest(config.model_id, messages, config.temperature, config.max_output_tokens)
    outcome = _BatchOutcome()
    response = provider.send(request)
    outcome.input_tokens += response.input_tokens
    outcome.output_tokens += response.output_tokens
    try:
        outcome.records = parse_extraction_response(
            response.content, batch.entry_ids, config.extractor_id
        )
        return outcome
    except ParseError as first:
        logger.warning("batch %s unparseable (%s); sending repair re-prompt", batch.batch_id, first)
    repair = ChatRequest(
        config.model_id,
        messages + (ChatMessage("assistant", response.content), ChatMessage("user", REPAIR_INSTRUCTION)),
        config.temperature,
        config.max_output_tokens,
    )
    retry = provider.send(repair)
    outcome.input_tokens += retry.input_tokens
    outcome.output_tokens += retry.output_tokens
    try:
        outcome.records = parse_extraction_response(
            retry.content, batch.entry_ids, config.extractor_id
        )
    except ParseError as second:
        outcome.failure = f"unparseable after repair: {second}"
    return outcome


def run_extractor(
    eligible: Sequence[DiaryEntry],
    config: ExtractorConfig,
    provider: Provider,
    template: PromptTemplate,
    token_counter: TokenCounter = whitespace_tokens,
    budget: int = DEFAULT_BUDGET,
    max_entries: int = DEFAULT_MAX_ENTRIES,
    checkpoint_path: str | Path | None = None,
    max_workers: int = 1,
) -> ExtractionRun:
    """Attempt every batch; aggregate records, token totals and failures.

    Parse failures mark individual batches failed; provider hard failures
    abort the run (the checkpoint keeps everything already succeeded).
    """
    batches = build_batches(eligible, template, token_counter, budget, max_entries)
    corpus_index = {e.entry_id: e for e in eligible}
    checkpoint = _Checkpoint(checkpoint_path)

    pending = [b for b in batches if b.batch_id not in checkpoint.done]
    outcomes: dict[str, dict] = dict(checkpoint.done)

    def execute(batch: Batch) -> None:
        result = _run_batch(batch, corpus_index, config, provider, template)
        payload = {
            "records": [
                {"entry_id": r.entry_id, "purposes": list(r.purposes)} for r in result.records
            ],
            "failure": result.failure,
            "input_tokens": result.input_tokens,
            "output_tokens": result.output_tokens,
        }
        checkpoint.record(batch.batch_id, payload)
        outcomes[batch.batch_id] = {"batch_id": batch.batch_id, **payload}

    if max_workers <= 1:
        for batch in pending:
            execute(batch)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(execute, b) for b in pending]
            done, not_done = wait(futures, return_when=FIRST_EXCEPTION)
            for fut in not_done:
                fut.cancel()
            for fut in done:
                fut.result()  # re-raise provider hard failures

    # Accumulate in corpus order regardless of completion order.
    order = {e.entry_id: i for i, e in enumerate(eligible)}
    records: list[ExtractionRecord] = []
    failed: list[tuple[str, str]] = []
    in_tokens = out_tokens = 0
    for batch in batches:
        outcome = outcomes[batch.batch_id]
        in_tokens += outcome.get("input_tokens", 0)
        out_tokens += outcome.get("output_tokens", 0)
        if outcome.get("failure"):
            failed.append((batch.batch_id, outcome["failure"]))
            continue
        for rec in outcome["records"]:
            records.append(
                ExtractionRecord(rec["entry_id"], config.extractor_id, tuple(rec["purposes"]))
            )
    records.sort(key=lambda r: order[r.entry_id])
    seen: set[str] = set()
    for record in records:
        if record.entry_id in seen:
            raise ValueError(f"entry {record.entry_id} appears in more than one record")
        seen.add(record.entry_id)
    return ExtractionRun(
        extractor_id=config.extractor_id,
        records=tuple(records),
        failed_batches=tuple(failed),
        input_tokens=in_tokens,
        output_tokens=out_tokens,
    )


@dataclass(frozen=True)
class EntryUnion:
    """Union of flagged entries with per-extractor provenance; purposes stay
    separated per (entry, extractor) pair."""

    entries: dict[str, dict[str, tuple[str, ...]]]

    def __len__(self) -> int:
        return len(self.entries)

    def entry_ids(self) -> set[str]:
        return set(self.entries)

    def provenance(self, entry_id: str) -> set[str]:
        return set(self.entries[entry_id])


def union_entry_sets(runs: Sequence[ExtractionRun]) -> EntryUnion:
    seen_extractors: set[str] = set()
    for run in runs:
        if run.extractor_id in seen_extractors:
            raise ValueError(f"duplicate extractor id {run.extractor_id!r} in union")
        seen_extractors.add(run.extractor_id)
    merged: dict[str, dict[str, tuple[str, ...]]] = {}
    for run in runs:
        for record in run.records:
            merged.setdefault(record.entry_id, {})[record.extractor_id] = record.purposes
    return EntryUnion({eid: merged[eid] for eid in sorted(merged)})
