"""Iterative model-driven clustering of extracted purposes.

One initialization call proposes cluster names from the complete purpose
list; assignment rounds then repeatedly ask the model to place the remaining
purposes into those (frozen) clusters, removing whatever got assigned.
Purposes are referenced by stable numeric index, never by echoed text.
Stall and round caps guarantee termination against any provider; leftovers
land in the reserved "Unclustered" cluster.
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .errors import ClusterInitError, ParseError, TemplateError
from .extraction import strip_code_fences
from .gateway import ChatMessage, ChatRequest, Provider, chat_request
from .metrics import Partition
from .tokencount import TokenCounter, whitespace_tokens

logger = logging.getLogger(__name__)

UNCLUSTERED = "Unclustered"

REPAIR_NAMES = (
    "The previous reply could not be parsed. Respond again with only a JSON array of "
    "cluster name strings, nothing else."
)
REPAIR_ASSIGNMENTS = (
    "The previous reply could not be parsed. Respond again with only a JSON array of "
    '{"index": <purpose number>, "cluster": "<cluster name>"} objects, nothing else.'
)


@dataclass(frozen=True)
class PurposeItem:
    purpose_id: str
    text: str
    entry_id: str
    extractor_id: str


@dataclass(frozen=True)
class ClusteringState:
    cluster_names: tuple[str, ...]
    assigned: dict[str, str]  # purpose_id -> cluster name
    remaining: frozenset[str]
    round: int = 0
    stall_count: int = 0


@dataclass(frozen=True)
class RoundLog:
    round: int
    assigned: int
    remaining_after: int


@dataclass(frozen=True)
class ClusteringOutcome:
    partition: Partition
    state: ClusteringState
    rounds: tuple[RoundLog, ...]


@dataclass(frozen=True)
class ClusterJob:
    model_id: str
    init_template: str
    assign_template: str
    temperature: float = 0.0
    max_output_tokens: int = 4096
    budget: int = 15_000
    max_stalls: int = 2
    max_rounds: int = 50

    def __post_init__(self) -> None:
        _check_placeholders(self.init_template, {"purpose_list", "purpose_count"}, "init")
        _check_placeholders(
            self.assign_template, {"purpose_list", "cluster_list", "purpose_count"}, "assign"
        )


def _check_placeholders(template: str, allowed: set[str], which: str) -> None:
    for _, name, _, _ in string.Formatter().parse(template):
        if name is not None and name not in allowed:
            raise TemplateError(f"unresolvable placeholder {{{name}}} in {which} template")


def _purpose_lines(purposes: Sequence[PurposeItem], indices: Sequence[int]) -> str:
    return "\n".join(f"{i + 1}. {purposes[i].text}" for i in indices)


def parse_cluster_names(content: str) -> list[str]:
    try:
        data = json.loads(strip_code_fences(content))
    except json.JSONDecodeError as exc:
        raise ParseError(f"cluster names are not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise ParseError("expected a JSON array of cluster name strings")
    names: list[str] = []
    for raw in data:
        name = raw.strip()
        if not name:
            continue
        if name == UNCLUSTERED:
            logger.warning("model proposed reserved cluster name %r; dropped", UNCLUSTERED)
            continue
        if name not in names:
            names.append(name)
    return names


def parse_assignments(content: str) -> list[tuple[int, str]]:
    try:
        data = json.loads(strip_code_fences(content))
    except json.JSONDecodeError as exc:
        raise ParseError(f"assignments are not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ParseError("expected a JSON array of assignment objects")
    pairs: list[tuple[int, str]] = []
    for item in data:
        if not isinstance(item, dict) or "index" not in item or "cluster" not in item:
            raise ParseError(f"malformed assignment item: {item!r}")
        try:
            index = int(item["index"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"non-numeric purpose index: {item['index']!r}") from exc
        pairs.append((index, str(item["cluster"])))
    return pairs


def _repair_request(request: ChatRequest, reply: str, instruction: str) -> ChatRequest:
    return ChatRequest(
        request.model_id,
        request.messages + (ChatMessage("assistant", reply), ChatMessage("user", instruction)),
        request.temperature,
        request.max_output_tokens,
    )


def init_clusters(
    purposes: Sequence[PurposeItem], provider: Provider, job: ClusterJob
) -> list[str]:
    """Ask the model for cluster names over the complete purpose list."""
    if not purposes:
        raise ValueError("cannot cluster an empty purpose list")
    prompt = job.init_template.format(
        purpose_list=_purpose_lines(purposes, range(len(purposes))),
        purpose_count=len(purposes),
    )
    request = chat_request(job.model_id, prompt, temperature=job.temperature,
                           max_output_tokens=job.max_output_tokens)
    response = provider.send(request)
    try:
        names = parse_cluster_names(response.content)
    except ParseError as first:
        logger.warning("cluster-name response unparseable (%s); repair re-prompt", first)
        retry = provider.send(_repair_request(request, response.content, REPAIR_NAMES))
        try:
            names = parse_cluster_names(retry.content)
        except ParseError as second:
            raise ClusterInitError(f"cluster initialization failed: {second}") from second
    if not names:
        raise ClusterInitError("model returned no usable cluster names")
    logger.info("initialized %d clusters", len(names))
    return names


def _assign_chunks(
    purposes: Sequence[PurposeItem],
    remaining_indices: Sequence[int],
    job: ClusterJob,
    token_counter: TokenCounter,
) -> list[list[int]]:
    """Split remaining purposes so each rendered assign prompt fits the budget."""
    chunks: list[list[int]] = []
    current: list[int] = []
    cluster_list_stub = ""  # cluster names are constant per round; included via overhead below
    for index in remaining_indices:
        candidate = current + [index]
        text = job.assign_template.format(
            purpose_list=_purpose_lines(purposes, candidate),
            cluster_list=cluster_list_stub,
            purpose_count=len(candidate),
        )
        if current and token_counter(text) > job.budget:
            chunks.append(current)
            current = [index]
        else:
            current = candidate
    if current:
        chunks.append(current)
    return chunks


def assign_round(
    state: ClusteringState,
    purposes: Sequence[PurposeItem],
    provider: Provider,
    job: ClusterJob,
    token_counter: TokenCounter = whitespace_tokens,
) -> ClusteringState:
    """One assignment round over every remaining purpose.

    Pairs naming unknown clusters, unknown indices or already-assigned
    purposes are dropped with warnings. Zero assigned purposes increments
    the stall counter; any progress resets it.
    """
    if not state.remaining:
        raise ValueError("assign_round requires remaining purposes")
    index_of = {p.purpose_id: i for i, p in enumerate(purposes)}
    remaining_indices = sorted(index_of[pid] for pid in state.remaining)
    cluster_list = "\n".join(f"- {name}" for name in state.cluster_names)

    newly: dict[str, str] = {}
    for chunk in _assign_chunks(purposes, remaining_indices, job, token_counter):
        prompt = job.assign_template.format(
            purpose_list=_purpose_lines(purposes, chunk),
            cluster_list=cluster_list,
            purpose_count=len(chunk),
        )
        request = chat_request(job.model_id, prompt, temperature=job.temperature,
                               max_output_tokens=job.max_output_tokens)
        response = provider.send(request)
        try:
            pairs = parse_assignments(response.content)
        except ParseError as first:
            logger.warning("assignment response unparseable (%s); repair re-prompt", first)
            retry = provider.send(_repair_request(request, response.content, REPAIR_ASSIGNMENTS))
            try:
                pairs = parse_assignments(retry.content)
            except ParseError as second:
                logger.warning("assignments still unparseable (%s); chunk yields nothing", second)
                continue
        for index, cluster in pairs:
            if not 1 <= index <= len(purposes):
                logger.warning("assignment to unknown purpose index %d dropped", index)
                continue
            purpose_id = purposes[index - 1].purpose_id
            if cluster not in state.cluster_names:
                logger.warning("assignment to unknown cluster %r dropped", cluster)
                continue
            if purpose_id not in state.remaining:
                logger.warning("purpose %s already assigned; pair dropped", purpose_id)
                continue
            if purpose_id in newly:
                continue  # first assignment wins
            newly[purpose_id] = cluster

    assigned = dict(state.assigned)
    assigned.update(newly)
    return replace(
        state,
        assigned=assigned,
        remaining=state.remaining - set(newly),
        round=state.round + 1,
        stall_count=0 if newly else state.stall_count + 1,
    )


def cluster_all(
    purposes: Sequence[PurposeItem],
    provider: Provider,
    job: ClusterJob,
    token_counter: TokenCounter = whitespace_tokens,
) -> ClusteringOutcome:
    """Initialization plus assignment rounds until the purpose list empties,
    the stall cap trips, or the round cap trips; leftovers go to Unclustered."""
    if not purposes:
        raise ValueError("cannot cluster an empty purpose list")
    ids = [p.purpose_id for p in purposes]
    if len(set(ids)) != len(ids):
        raise ValueError("purpose ids must be unique within a clustering job")
    names = init_clusters(purposes, provider, job)
    state = ClusteringState(
        cluster_names=tuple(names),
        assigned={},
        remaining=frozenset(ids),
    )
    rounds: list[RoundLog] = []
    while state.remaining and state.round < job.max_rounds and state.stall_count < job.max_stalls:
        before = len(state.remaining)
        state = assign_round(state, purposes, provider, job, token_counter)
        rounds.append(RoundLog(state.round, before - len(state.remaining), len(state.remaining)))

    assigned = dict(state.assigned)
    for purpose_id in sorted(state.remaining):
        assigned[purpose_id] = UNCLUSTERED
    clusters: dict[str, set[str]] = {}
    for purpose_id, cluster in assigned.items():
        clusters.setdefault(cluster, set()).add(purpose_id)
    return ClusteringOutcome(Partition(clusters), state, tuple(rounds))


def dedupe_entry_cluster(
    partition: Partition, purposes: Sequence[PurposeItem]
) -> list[PurposeItem]:
    """Collapse same-entry purposes that landed in the same cluster, keeping
    the lowest purpose_id of each (entry, cluster) group."""
    label = partition.label_of()
    keep: dict[tuple[str, str], PurposeItem] = {}
    for purpose in purposes:
        key = (purpose.entry_id, label[purpose.purpose_id])
        current = keep.get(key)
        if current is None or purpose.purpose_id < current.purpose_id:
            keep[key] = purpose
    kept_ids = {p.purpose_id for p in keep.values()}
    return [p for p in purposes if p.purpose_id in kept_ids]


def partition_from_records(records: Mapping[str, str]) -> Partition:
    """purpose_id -> cluster mapping to a Partition."""
    clusters: dict[str, set[str]] = {}
    for purpose_id, cluster in records.items():
        clusters.setdefault(cluster, set()).add(purpose_id)
    return Partition(clusters)
