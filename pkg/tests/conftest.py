from __future__ import annotations

import datetime as dt
import json

import pytest

from diarist.corpus import Author, Corpus, DiaryEntry, Gender


def entry(entry_id: str, text: str, author_id: str = "a1", date: str = "1925-06-01") -> DiaryEntry:
    return DiaryEntry(entry_id, author_id, dt.date.fromisoformat(date), text)


def make_corpus(entries, authors=None) -> Corpus:
    if authors is None:
        authors = {
            "a1": Author("a1", Gender.MALE, 1890),
            "a2": Author("a2", Gender.FEMALE, 1900),
            "a3": Author("a3", Gender.UNKNOWN, None),
        }
    return Corpus(entries, authors)


def jsonl_lines(records) -> list[str]:
    return [json.dumps(rec, ensure_ascii=False) for rec in records]


@pytest.fixture
def tmp_jsonl(tmp_path):
    def write(name: str, records) -> str:
        path = tmp_path / name
        path.write_text("\n".join(jsonl_lines(records)) + "\n", encoding="utf-8")
        return str(path)

    return write
