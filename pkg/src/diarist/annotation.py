"""Human annotation workflow: a durable vote log, two-level binary votes with
purpose gating, majority aggregation into a pooled gold set, and
Krippendorff's alpha over either question.

The vote log is append-only and event-sourced: replaying it reconstructs
identical store state. Corrections are superseding events; "latest" is the
highest server-assigned sequence number, so reconstruction does not depend
on file order.
"""

from __future__ import annotations

import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

from .errors import (
    AuthorizationError,
    ConflictError,
    IncompleteTaskError,
    UndefinedAlphaError,
    VoteValidationError,
)

PurposeKey = tuple[str, int]  # (extractor_id, purpose_index) within one entry
GoldPurposeKey = tuple[str, str, int]  # (entry_id, extractor_id, purpose_index)


@dataclass(frozen=True)
class PurposeRef:
    extractor_id: str
    index: int
    text: str

    @property
    def key(self) -> PurposeKey:
        return (self.extractor_id, self.index)


@dataclass(frozen=True)
class AnnotationTask:
    entry_id: str
    text: str
    purposes: tuple[PurposeRef, ...]

    def purpose_keys(self) -> set[PurposeKey]:
        return {p.key for p in self.purposes}

    @classmethod
    def from_dict(cls, rec: Mapping[str, Any]) -> "AnnotationTask":
        purposes = []
        for extractor_id in sorted(rec.get("purposes", {})):
            for index, text in enumerate(rec["purposes"][extractor_id]):
                purposes.append(PurposeRef(extractor_id, index, text))
        return cls(rec["entry_id"], rec.get("text", ""), tuple(purposes))

    def to_dict(self) -> dict[str, Any]:
        grouped: dict[str, list[str]] = {}
        for p in self.purposes:
            grouped.setdefault(p.extractor_id, []).append(p.text)
        return {"entry_id": self.entry_id, "text": self.text, "purposes": grouped}


@dataclass(frozen=True)
class AnnotationVote:
    entry_id: str
    annotator_id: str
    has_purpose: bool
    purpose_judgments: tuple[tuple[PurposeKey, bool], ...] = ()
    seq: int = 0
    ts: str = ""

    def judgments(self) -> dict[PurposeKey, bool]:
        return dict(self.purpose_judgments)

    def to_dict(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "seq": self.seq,
            "ts": self.ts,
            "entry_id": self.entry_id,
            "annotator_id": self.annotator_id,
            "has_purpose": self.has_purpose,
        }
        if self.has_purpose:
            rec["purpose_judgments"] = [
                {"extractor_id": ext, "purpose_index": idx, "valid": valid}
                for (ext, idx), valid in self.purpose_judgments
            ]
        else:
            rec["purpose_judgments"] = None
        return rec

    @classmethod
    def from_dict(cls, rec: Mapping[str, Any]) -> "AnnotationVote":
        raw = rec.get("purpose_judgments") or []
        judgments = tuple(
            ((j["extractor_id"], int(j["purpose_index"])), bool(j["valid"])) for j in raw
        )
        return cls(
            entry_id=rec["entry_id"],
            annotator_id=rec["annotator_id"],
            has_purpose=bool(rec["has_purpose"]),
            purpose_judgments=judgments,
            seq=int(rec.get("seq", 0)),
            ts=str(rec.get("ts", "")),
        )


@dataclass(frozen=True)
class GoldSet:
    correct_entries: frozenset[str]
    correct_purposes: frozenset[GoldPurposeKey]

    def __post_init__(self) -> None:
        orphans = {key for key in self.correct_purposes if key[0] not in self.correct_entries}
        if orphans:
            raise ValueError(f"correct purposes outside correct entries: {sorted(orphans)}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "correct_entries": sorted(self.correct_entries),
            "correct_purposes": [list(key) for key in sorted(self.correct_purposes)],
        }

    @classmethod
    def from_dict(cls, rec: Mapping[str, Any]) -> "GoldSet":
        return cls(
            frozenset(rec["correct_entries"]),
            frozenset((e, x, int(i)) for e, x, i in rec["correct_purposes"]),
        )


def _utc_now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


class AnnotationStore:
    """Serves tasks and collects votes on top of an append-only log."""

    def __init__(
        self,
        tasks: Sequence[AnnotationTask],
        annotators: Sequence[str],
        panel_size: int = 3,
        log_path: str | Path | None = None,
        clock: Callable[[], str] = _utc_now,
    ) -> None:
        if panel_size < 1:
            raise ValueError("panel_size must be >= 1")
        self.tasks = {t.entry_id: t for t in tasks}
        self.annotators = list(annotators)
        self.panel_size = panel_size
        self._clock = clock
        self._log_path = Path(log_path) if log_path else None
        self._votes: dict[tuple[str, str], AnnotationVote] = {}
        self._seq = 0
        if self._log_path and self._log_path.exists():
            for vote in read_vote_log(self._log_path):
                self._apply(vote)

    def _apply(self, vote: AnnotationVote) -> None:
        key = (vote.entry_id, vote.annotator_id)
        current = self._votes.get(key)
        if current is None or vote.seq > current.seq:
            self._votes[key] = vote
        self._seq = max(self._seq, vote.seq)

    # -- reads ---------------------------------------------------------------

    def latest_votes(self) -> list[AnnotationVote]:
        return list(self._votes.values())

    def votes_for(self, entry_id: str) -> list[AnnotationVote]:
        return [v for (eid, _), v in self._votes.items() if eid == entry_id]

    def vote_count(self, entry_id: str) -> int:
        return len(self.votes_for(entry_id))

    def is_complete(self, entry_id: str) -> bool:
        return self.vote_count(entry_id) >= self.panel_size

    def next_task(self, annotator_id: str) -> AnnotationTask | None:
        """Open task this annotator has not voted on; tasks closest to
        completion first, entry_id as tiebreak. None when exhausted."""
        if annotator_id not in self.annotators:
            raise AuthorizationError(f"unknown annotator {annotator_id!r}")
        candidates = [
            task
            for task in self.tasks.values()
            if not self.is_complete(task.entry_id)
            and (task.entry_id, annotator_id) not in self._votes
        ]
        if not candidates:
            return None
        return min(
            candidates,
            key=lambda t: (self.panel_size - self.vote_count(t.entry_id), t.entry_id),
        )

    def progress(self) -> dict[str, Any]:
        complete = sum(1 for eid in self.tasks if self.is_complete(eid))
        per_annotator = Counter(v.annotator_id for v in self._votes.values())
        return {
            "tasks_total": len(self.tasks),
            "tasks_complete": complete,
            "tasks_open": len(self.tasks) - complete,
            "votes_total": len(self._votes),
            "per_annotator": {a: per_annotator.get(a, 0) for a in self.annotators},
        }

    # -- writes --------------------------------------------------------------

    def submit_vote(
        self,
        entry_id: str,
        annotator_id: str,
        has_purpose: bool,
        purpose_judgments: Mapping[PurposeKey, bool] | None = None,
        supersede: bool = False,
    ) -> AnnotationVote:
        if annotator_id not in self.annotators:
            raise AuthorizationError(f"unknown annotator {annotator_id!r}")
        task = self.tasks.get(entry_id)
        if task is None:
            raise VoteValidationError(f"unknown entry {entry_id!r}")
        existing = (entry_id, annotator_id) in self._votes
        if existing and not supersede:
            raise ConflictError(f"{annotator_id} already voted on {entry_id}")
        if not existing and self.is_complete(entry_id):
            raise ConflictError(f"task {entry_id} is complete")

        judgments = dict(purpose_judgments or {})
        if not has_purpose and judgments:
            raise VoteValidationError("purpose judgments are only allowed after an entry-level yes")
        if has_purpose:
            shown = task.purpose_keys()
            missing = shown - set(judgments)
            unknown = set(judgments) - shown
            if missing:
                raise VoteValidationError(f"judgments missing for shown purposes: {sorted(missing)}")
            if unknown:
                raise VoteValidationError(f"judgments for purposes never shown: {sorted(unknown)}")

        self._seq += 1
        vote = AnnotationVote(
            entry_id=entry_id,
            annotator_id=annotator_id,
            has_purpose=has_purpose,
            purpose_judgments=tuple(sorted(judgments.items())),
            seq=self._seq,
            ts=self._clock(),
        )
        if self._log_path:
            with self._log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(vote.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        self._apply(vote)
        return vote


def read_vote_log(path: str | Path) -> list[AnnotationVote]:
    votes = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            votes.append(AnnotationVote.from_dict(json.loads(line)))
    return votes


def latest_votes(votes: Iterable[AnnotationVote]) -> list[AnnotationVote]:
    """Collapse superseding events: highest seq wins per (entry, annotator)."""
    latest: dict[tuple[str, str], AnnotationVote] = {}
    for vote in votes:
        key = (vote.entry_id, vote.annotator_id)
        if key not in latest or vote.seq > latest[key].seq:
            latest[key] = vote
    return list(latest.values())


def aggregate_majority(
    votes: Iterable[AnnotationVote],
    panel_size: int = 3,
    universe: Iterable[str] | None = None,
    partial: bool = False,
) -> GoldSet:
    """Entry is correct on a strict panel majority of yes votes; a purpose is
    correct on a strict majority of the annotators who judged it (the entry's
    yes-voters); ties are invalid."""
    votes = latest_votes(votes)
    by_entry: dict[str, list[AnnotationVote]] = {}
    for vote in votes:
        by_entry.setdefault(vote.entry_id, []).append(vote)
    entry_ids = set(universe) if universe is not None else set(by_entry)

    if not partial:
        incomplete = [eid for eid in entry_ids if len(by_entry.get(eid, [])) < panel_size]
        if incomplete:
            raise IncompleteTaskError(
                f"{len(incomplete)} task(s) incomplete (e.g. {sorted(incomplete)[:3]}); "
                "pass partial=True to aggregate anyway"
            )

    correct_entries: set[str] = set()
    correct_purposes: set[GoldPurposeKey] = set()
    for entry_id in entry_ids:
        entry_votes = by_entry.get(entry_id, [])
        yes_votes = [v for v in entry_votes if v.has_purpose]
        if len(yes_votes) * 2 <= panel_size:
            continue
        correct_entries.add(entry_id)
        tallies: dict[PurposeKey, list[int]] = {}
        for vote in yes_votes:
            for key, valid in vote.judgments().items():
                judged = tallies.setdefault(key, [0, 0])
                judged[0] += 1
                judged[1] += int(valid)
        for (extractor_id, index), (judged, valid) in tallies.items():
            if valid * 2 > judged:
                correct_purposes.add((entry_id, extractor_id, index))
    return GoldSet(frozenset(correct_entries), frozenset(correct_purposes))


def krippendorff_alpha(ratings: Mapping[Hashable, Mapping[str, Hashable]]) -> float:
    """Nominal-data alpha via the coincidence matrix.

    ratings maps unit -> {rater -> value}. Units with fewer than two ratings
    carry no pairable information and are skipped; each ordered value pair
    within a unit contributes 1/(m_u - 1) to the coincidence count.
    """
    coincidence: Counter = Counter()
    raters: set[str] = set()
    pairable = 0
    for unit_votes in ratings.values():
        raters |= set(unit_votes)
        values = list(unit_votes.values())
        m = len(values)
        if m < 2:
            continue
        pairable += m
        weight = 1.0 / (m - 1)
        for i, a in enumerate(values):
            for j, b in enumerate(values):
                if i != j:
                    coincidence[(a, b)] += weight
    if len(ratings) < 2 or len(raters) < 2 or pairable < 2:
        raise UndefinedAlphaError("at least two items rated by at least two annotators required")
    marginals: Counter = Counter()
    for (a, _b), weight in coincidence.items():
        marginals[a] += weight
    n = sum(marginals.values())
    observed_off = sum(w for (a, b), w in coincidence.items() if a != b)
    expected_off = sum(
        marginals[a] * marginals[b] for a in marginals for b in marginals if a != b
    )
    if expected_off == 0:
        raise UndefinedAlphaError("all votes share a single value; expected disagreement is zero")
    return 1.0 - (n - 1) * observed_off / expected_off


def compute_alpha(
    votes: Iterable[AnnotationVote],
    question: str = "entry",
    complete_only: bool = False,
    panel_size: int = 3,
) -> float:
    """Alpha over the entry-level question or the purpose-level question.

    For purposes, raters are the entry's yes-voters, so units naturally have
    missing ratings; complete_only additionally restricts to purposes judged
    by a full panel."""
    votes = latest_votes(votes)
    ratings: dict[Hashable, dict[str, Hashable]] = {}
    if question == "entry":
        for vote in votes:
            ratings.setdefault(vote.entry_id, {})[vote.annotator_id] = vote.has_purpose
    elif question == "purpose":
        for vote in votes:
            if not vote.has_purpose:
                continue
            for (extractor_id, index), valid in vote.judgments().items():
                unit = (vote.entry_id, extractor_id, index)
                ratings.setdefault(unit, {})[vote.annotator_id] = valid
        if complete_only:
            ratings = {u: r for u, r in ratings.items() if len(r) >= panel_size}
    else:
        raise ValueError(f"unknown question {question!r}")
    return krippendorff_alpha(ratings)
