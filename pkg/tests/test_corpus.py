from __future__ import annotations

import datetime as dt

import pytest
from hypothesis import given
from hypothesis import strategies as st

from diarist.corpus import (
    AgeCategory,
    Author,
    Gender,
    PeriodBucket,
    Pricing,
    corpus_stats,
    derive_age_category,
    derive_period,
    filter_entries,
    ingest_authors,
    ingest_corpus,
)
from diarist.errors import OutOfWindowError
from diarist.tokencount import whitespace_tokens

from .conftest import entry, jsonl_lines, make_corpus

AUTHOR_LINES = jsonl_lines(
    [
        {"author_id": "a1", "gender": "male", "birth_year": 1890},
        {"author_id": "a2", "gender": "female", "birth_year": 1900},
        {"author_id": "a3", "gender": "unknown"},
    ]
)


def load(entry_records, author_lines=AUTHOR_LINES):
    authors, author_errors = ingest_authors(author_lines)
    assert not author_errors
    return ingest_corpus(jsonl_lines(entry_records), authors)


def rec(entry_id, date="1925-06-01", author_id="a1", text="Писал письмо брату."):
    return {"entry_id": entry_id, "author_id": author_id, "date": date, "text": text}


def test_ingest_three_wellformed_records():
    corpus, errors = load([rec("e1"), rec("e2"), rec("e3")])
    assert len(corpus) == 3
    assert errors == []


def test_ingest_rejects_unparseable_date():
    corpus, errors = load([rec("e1"), rec("e2", date="1921-13-40"), rec("e3")])
    assert len(corpus) == 2
    assert len(errors) == 1
    assert errors[0].entry_id == "e2"
    assert "date" in errors[0].message


def test_ingest_duplicate_entry_id_names_both_lines():
    corpus, errors = load([rec("e1"), rec("e2"), rec("e1")])
    assert len(corpus) == 2
    assert len(errors) == 1
    error = errors[0]
    assert error.entry_id == "e1"
    assert error.line == 3
    assert "line 1" in error.message


def test_ingest_unknown_author_is_record_level_error():
    corpus, errors = load([rec("e1", author_id="nobody")])
    assert len(corpus) == 0
    assert "unknown author_id" in errors[0].message


def test_ingest_rejects_empty_text_and_out_of_window():
    corpus, errors = load([rec("e1", text="   "), rec("e2", date="1919-01-01")])
    assert len(corpus) == 0
    assert {e.entry_id for e in errors} == {"e1", "e2"}


def test_ingest_rejects_entry_dated_before_birth():
    _, errors = load([rec("e1", date="1925-01-01", author_id="a1"),
                      rec("e2", date="1922-01-01", author_id="a2")],
                     jsonl_lines([{"author_id": "a1", "gender": "male", "birth_year": 1890},
                                  {"author_id": "a2", "gender": "female", "birth_year": 1922}]))
    assert len(errors) == 1
    assert errors[0].entry_id == "e2"


def test_ingest_authors_validation():
    authors, errors = ingest_authors(
        jsonl_lines(
            [
                {"author_id": "a1", "gender": "male", "birth_year": 1890},
                {"author_id": "a1", "gender": "male"},
                {"author_id": "a2", "gender": "martian"},
                {"author_id": "a4", "gender": "female", "birth_year": 88},
                {"gender": "male"},
            ]
        )
    )
    assert set(authors) == {"a1"}
    assert len(errors) == 4


def test_filter_too_short_too_long_and_retained():
    long_text = "слово " * 1401
    corpus = make_corpus(
        [
            entry("e1", "Сильный мороз."),
            entry("e2", long_text.strip()),
            entry("e3", "Писал письмо брату."),
        ]
    )
    kept, excluded = filter_entries(corpus, whitespace_tokens, whitespace_tokens, max_tokens=1400)
    assert [e.entry_id for e in kept] == ["e3"]
    assert {(x.entry_id, x.reason) for x in excluded} == {
        ("e1", "too_short"),
        ("e2", "too_long"),
    }


def test_filter_is_total_and_idempotent():
    corpus = make_corpus(
        [entry(f"e{i}", "слово " * i) for i in range(1, 30)]
    )
    kept, excluded = filter_entries(corpus, whitespace_tokens, whitespace_tokens, max_tokens=20)
    assert len(kept) + len(excluded) == len(corpus)
    again, again_excluded = filter_entries(
        make_corpus(kept), whitespace_tokens, whitespace_tokens, max_tokens=20
    )
    assert again == kept
    assert again_excluded == []
    for item in kept:
        words = whitespace_tokens(item.text)
        assert words >= 3 and words <= 20


@given(st.integers(min_value=0, max_value=120))
def test_age_category_matches_interval_oracle(age):
    # independent oracle: the four-interval table
    if age <= 17:
        expected = AgeCategory.PRE_ADULTHOOD
    elif age <= 39:
        expected = AgeCategory.EARLY_ADULTHOOD
    elif age <= 59:
        expected = AgeCategory.MIDDLE_ADULTHOOD
    else:
        expected = AgeCategory.LATE_ADULTHOOD
    assert derive_age_category(1900, dt.date(1900 + age, 6, 1)) == expected


def test_age_category_known_cases():
    assert derive_age_category(1900, dt.date(1925, 1, 1)) == AgeCategory.EARLY_ADULTHOOD
    assert derive_age_category(1862, dt.date(1922, 1, 1)) == AgeCategory.LATE_ADULTHOOD
    assert derive_age_category(1908, dt.date(1925, 1, 1)) == AgeCategory.PRE_ADULTHOOD


def test_age_category_monotone_in_age():
    order = list(AgeCategory)
    previous = -1
    for age in range(0, 121):
        category = derive_age_category(1800, dt.date(1800 + age, 1, 1))
        assert order.index(category) >= previous
        previous = order.index(category)


def test_derive_period_buckets_and_window():
    assert derive_period(dt.date(1923, 5, 1)) == PeriodBucket.EARLY
    assert derive_period(dt.date(1926, 12, 31)) == PeriodBucket.MID
    assert derive_period(dt.date(1927, 1, 1)) == PeriodBucket.LATE
    with pytest.raises(OutOfWindowError):
        derive_period(dt.date(1921, 1, 1))


def test_period_total_on_window():
    for year in range(1922, 1930):
        derive_period(dt.date(year, 1, 1))


def test_corpus_stats_counts_and_degenerate_std():
    corpus = make_corpus(
        [
            entry("e1", "а б в", author_id="a1"),
            entry("e2", "г д е", author_id="a1"),
            entry("e3", "ж з и", author_id="a2"),
        ]
    )
    stats = corpus_stats(corpus, whitespace_tokens)
    assert stats.gender_counts["male"] == 2
    assert stats.gender_counts["female"] == 1
    single = make_corpus([entry("e1", "с " * 99 + "с")])
    stats_single = corpus_stats(single, whitespace_tokens)
    assert stats_single.avg_tokens == 100.0
    assert stats_single.stddev_tokens == 0.0


def test_corpus_stats_linear_pricing():
    text = "т " * 999_999 + "т"
    corpus = make_corpus([entry("e1", text)])
    stats = corpus_stats(corpus, whitespace_tokens, {"m": Pricing(2.50)})
    assert stats.token_count == 1_000_000
    assert stats.estimated_cost["m"] == pytest.approx(2.50)


def test_corpus_stats_bucket_sums_match_attribute_counts():
    authors = {
        "a1": Author("a1", Gender.MALE, 1890),
        "a2": Author("a2", Gender.FEMALE, None),
        "a3": Author("a3", Gender.UNKNOWN, 1905),
    }
    corpus = make_corpus(
        [
            entry("e1", "раз два три", "a1", "1922-02-02"),
            entry("e2", "раз два три", "a2", "1925-02-02"),
            entry("e3", "раз два три", "a3", "1929-02-02"),
            entry("e4", "раз два три", "a1", "1927-02-02"),
        ],
        authors,
    )
    stats = corpus_stats(corpus, whitespace_tokens)
    assert sum(stats.gender_counts.values()) == 4
    assert stats.gender_counts["unknown"] == 1
    assert stats.age_counts["unknown"] == 1
    assert sum(stats.age_counts.values()) == 4
    assert sum(stats.period_counts.values()) == 4
