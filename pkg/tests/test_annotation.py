from __future__ import annotations

import itertools
import random

import pytest

from diarist.annotation import (
    AnnotationStore,
    AnnotationTask,
    AnnotationVote,
    GoldSet,
    PurposeRef,
    aggregate_majority,
    compute_alpha,
    krippendorff_alpha,
    latest_votes,
    read_vote_log,
)
from diarist.errors import (
    AuthorizationError,
    ConflictError,
    IncompleteTaskError,
    UndefinedAlphaError,
    VoteValidationError,
)

ANNOTATORS = ["ann1", "ann2", "ann3"]


def task(entry_id: str, n_purposes: int = 1) -> AnnotationTask:
    purposes = tuple(PurposeRef("m", i, f"цель {i} ({entry_id})") for i in range(n_purposes))
    return AnnotationTask(entry_id, f"текст {entry_id}", purposes)


def fresh_store(n_tasks=3, n_purposes=1, log_path=None):
    return AnnotationStore(
        [task(f"e{i}", n_purposes) for i in range(n_tasks)], ANNOTATORS, 3, log_path=log_path
    )


def judge_all(t: AnnotationTask, valid=True):
    return {p.key: valid for p in t.purposes}


def test_next_task_excludes_own_votes_and_exhausts():
    store = fresh_store(2)
    first = store.next_task("ann1")
    store.submit_vote(first.entry_id, "ann1", False)
    second = store.next_task("ann1")
    assert second.entry_id != first.entry_id
    store.submit_vote(second.entry_id, "ann1", False)
    assert store.next_task("ann1") is None


def test_next_task_prefers_nearly_complete_tasks_with_id_tiebreak():
    store = fresh_store(3)
    assert store.next_task("ann1").entry_id == "e0"  # fresh: entry_id tiebreak
    store.submit_vote("e1", "ann2", False)
    assert store.next_task("ann1").entry_id == "e1"  # e1 now closest to completion


def test_next_task_unknown_annotator():
    with pytest.raises(AuthorizationError):
        fresh_store().next_task("stranger")


def test_submit_vote_happy_path_and_duplicate_conflict():
    store = fresh_store()
    t = store.tasks["e0"]
    store.submit_vote("e0", "ann1", True, judge_all(t))
    with pytest.raises(ConflictError):
        store.submit_vote("e0", "ann1", False)


def test_submit_vote_gating_rules():
    store = fresh_store()
    t = store.tasks["e0"]
    with pytest.raises(VoteValidationError):
        store.submit_vote("e0", "ann1", False, judge_all(t))  # judgments without yes
    with pytest.raises(VoteValidationError):
        store.submit_vote("e0", "ann1", True, {})  # yes without judging shown purposes
    with pytest.raises(VoteValidationError):
        store.submit_vote("e0", "ann1", True, {("m", 99): True})  # unknown purpose
    with pytest.raises(VoteValidationError):
        store.submit_vote("e-unknown", "ann1", False)
    with pytest.raises(AuthorizationError):
        store.submit_vote("e0", "stranger", False)


def test_submit_vote_complete_task_conflict():
    store = AnnotationStore([task("e0")], ["a", "b", "c", "d"], panel_size=3)
    for annotator in ("a", "b", "c"):
        store.submit_vote("e0", annotator, False)
    with pytest.raises(ConflictError):
        store.submit_vote("e0", "d", False)


def test_supersede_replaces_vote():
    store = fresh_store()
    t = store.tasks["e0"]
    store.submit_vote("e0", "ann1", False)
    store.submit_vote("e0", "ann1", True, judge_all(t), supersede=True)
    votes = store.votes_for("e0")
    assert len(votes) == 1 and votes[0].has_purpose is True


def test_vote_log_replay_reconstructs_state(tmp_path):
    log = tmp_path / "votes.jsonl"
    store = fresh_store(2, log_path=log)
    t0 = store.tasks["e0"]
    store.submit_vote("e0", "ann1", True, judge_all(t0))
    store.submit_vote("e0", "ann2", False)
    store.submit_vote("e1", "ann1", False)

    rebuilt = fresh_store(2, log_path=log)
    assert {v.entry_id for v in rebuilt.latest_votes()} == {"e0", "e1"}
    assert rebuilt.progress() == store.progress()
    assert sorted(v.to_dict()["seq"] for v in rebuilt.latest_votes()) == [1, 2, 3]


def vote(entry_id, annotator, has, judgments=(), seq=0):
    return AnnotationVote(entry_id, annotator, has, tuple(judgments), seq=seq)


def test_aggregate_majority_entry_rule():
    votes = [
        vote("e0", "ann1", True, [(("m", 0), True)], seq=1),
        vote("e0", "ann2", True, [(("m", 0), True)], seq=2),
        vote("e0", "ann3", False, seq=3),
        vote("e1", "ann1", False, seq=4),
        vote("e1", "ann2", False, seq=5),
        vote("e1", "ann3", True, [(("m", 0), True)], seq=6),
    ]
    gold = aggregate_majority(votes, 3)
    assert gold.correct_entries == {"e0"}
    assert gold.correct_purposes == {("e0", "m", 0)}


def test_aggregate_majority_purpose_tie_is_invalid():
    votes = [
        vote("e0", "ann1", True, [(("m", 0), True)], seq=1),
        vote("e0", "ann2", True, [(("m", 0), False)], seq=2),
        vote("e0", "ann3", False, seq=3),
    ]
    gold = aggregate_majority(votes, 3)
    assert gold.correct_entries == {"e0"}
    assert gold.correct_purposes == frozenset()


def test_aggregate_majority_matches_enumerated_rule():
    # every 3-annotator yes/no combination against the strict-majority oracle
    for combo in itertools.product([True, False], repeat=3):
        votes = [
            vote("e0", f"ann{i}", has, [(("m", 0), True)] if has else (), seq=i + 1)
            for i, has in enumerate(combo)
        ]
        gold = aggregate_majority(votes, 3)
        assert (sum(combo) > 1.5) == ("e0" in gold.correct_entries)


def test_aggregate_incomplete_task_requires_partial():
    votes = [vote("e0", "ann1", False, seq=1)]
    with pytest.raises(IncompleteTaskError):
        aggregate_majority(votes, 3)
    gold = aggregate_majority(votes, 3, partial=True)
    assert gold.correct_entries == frozenset()
    with pytest.raises(IncompleteTaskError):
        aggregate_majority(votes, 3, universe=["e0", "e-notvoted"], partial=False)


def test_aggregate_shuffled_log_reproduces_gold(tmp_path):
    log = tmp_path / "votes.jsonl"
    store = fresh_store(4, n_purposes=2, log_path=log)
    rng = random.Random(7)
    for annotator in ANNOTATORS:
        while (t := store.next_task(annotator)) is not None:
            has = rng.random() < 0.6
            store.submit_vote(
                t.entry_id, annotator, has,
                {p.key: rng.random() < 0.5 for p in t.purposes} if has else None,
            )
    votes = read_vote_log(log)
    reference = aggregate_majority(votes, 3)
    for seed in range(5):
        shuffled = votes[:]
        random.Random(seed).shuffle(shuffled)
        assert aggregate_majority(shuffled, 3) == reference


def test_gold_set_invariant():
    with pytest.raises(ValueError):
        GoldSet(frozenset({"e1"}), frozenset({("e2", "m", 0)}))


def test_latest_votes_prefers_highest_seq():
    votes = [
        vote("e0", "ann1", False, seq=5),
        vote("e0", "ann1", True, [(("m", 0), True)], seq=9),
        vote("e0", "ann1", False, seq=2),
    ]
    (latest,) = latest_votes(votes)
    assert latest.seq == 9 and latest.has_purpose


# -- Krippendorff's alpha ----------------------------------------------------


def test_alpha_spec_example_two_annotators_four_items():
    ratings = {
        "i1": {"a": 1, "b": 1},
        "i2": {"a": 0, "b": 0},
        "i3": {"a": 1, "b": 0},
        "i4": {"a": 0, "b": 0},
    }
    assert krippendorff_alpha(ratings) == pytest.approx(16 / 30, abs=1e-12)


def test_alpha_perfect_mixed_agreement_is_exactly_one():
    ratings = {
        "i1": {"a": "yes", "b": "yes", "c": "yes"},
        "i2": {"a": "no", "b": "no", "c": "no"},
        "i3": {"a": "yes", "b": "yes", "c": "yes"},
    }
    assert krippendorff_alpha(ratings) == 1.0


def test_alpha_single_label_is_undefined():
    ratings = {
        "i1": {"a": "yes", "b": "yes"},
        "i2": {"a": "yes", "b": "yes"},
    }
    with pytest.raises(UndefinedAlphaError):
        krippendorff_alpha(ratings)


def test_alpha_insufficient_data():
    with pytest.raises(UndefinedAlphaError):
        krippendorff_alpha({"i1": {"a": 1}})
    with pytest.raises(UndefinedAlphaError):
        krippendorff_alpha({"i1": {"a": 1, "b": 0}})  # only one item


def test_alpha_invariances():
    rng = random.Random(99)
    ratings = {
        f"i{i}": {a: rng.randrange(2) for a in ("a", "b", "c") if rng.random() < 0.9}
        for i in range(12)
    }
    ratings = {u: r for u, r in ratings.items() if r}
    base = krippendorff_alpha(ratings)
    relabeled = {u: {a: 1 - v for a, v in r.items()} for u, r in ratings.items()}
    assert krippendorff_alpha(relabeled) == pytest.approx(base, abs=1e-12)
    renamed = {u: {a + "_x": v for a, v in r.items()} for u, r in ratings.items()}
    assert krippendorff_alpha(renamed) == pytest.approx(base, abs=1e-12)


def test_alpha_tolerates_missing_votes():
    ratings = {
        "i1": {"a": 1, "b": 1, "c": 1},
        "i2": {"a": 0, "b": 0},
        "i3": {"b": 1, "c": 0},
        "i4": {"a": 0},  # unpairable, skipped
    }
    value = krippendorff_alpha(ratings)
    assert -1 < value <= 1


def test_compute_alpha_entry_and_purpose_questions():
    votes = [
        vote("e0", "ann1", True, [(("m", 0), True), (("m", 1), False)], seq=1),
        vote("e0", "ann2", True, [(("m", 0), True), (("m", 1), False)], seq=2),
        vote("e0", "ann3", False, seq=3),
        vote("e1", "ann1", False, seq=4),
        vote("e1", "ann2", False, seq=5),
        vote("e1", "ann3", False, seq=6),
    ]
    assert compute_alpha(votes, "entry") == pytest.approx(
        krippendorff_alpha(
            {
                "e0": {"ann1": True, "ann2": True, "ann3": False},
                "e1": {"ann1": False, "ann2": False, "ann3": False},
            }
        )
    )
    assert compute_alpha(votes, "purpose") == 1.0  # both judged purposes unanimous, mixed labels
    with pytest.raises(UndefinedAlphaError):
        compute_alpha(votes, "purpose", complete_only=True)  # no purpose judged by full panel
    with pytest.raises(ValueError):
        compute_alpha(votes, "sentiment")
