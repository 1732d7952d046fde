"""Template-based extractor: a sentence is a purpose candidate when a noun
form and a verb form from the configured lexicon co-occur in it.

Morphology is encoded by exhaustively enumerating inflected surface forms in
the lexicon file; no analyzer is involved, which keeps matching reproducible
and language-agnostic.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import DiaryEntry
from .extraction import ExtractionRecord

BASELINE_ID = "baseline"

_TERMINALS = ".!?…"
# Letters only, internal hyphens kept ("кто-нибудь" is one token).
_TOKEN_RE = re.compile(r"[^\W\d_]+(?:-[^\W\d_]+)*", re.UNICODE)


@dataclass(frozen=True)
class LexemeGroup:
    lemma: str
    forms: tuple[str, ...]


@dataclass(frozen=True)
class Lexicon:
    noun_groups: tuple[LexemeGroup, ...]
    verb_groups: tuple[LexemeGroup, ...]

    def __post_init__(self) -> None:
        nouns = self.noun_forms()
        verbs = self.verb_forms()
        for form in nouns | verbs:
            if not form:
                raise ValueError("empty surface form in lexicon")
            if form != form.casefold():
                raise ValueError(f"surface form {form!r} is not casefolded")
        overlap = nouns & verbs
        if overlap:
            raise ValueError(f"forms present in both noun and verb groups: {sorted(overlap)}")

    def noun_forms(self) -> set[str]:
        return {form for group in self.noun_groups for form in group.forms}

    def verb_forms(self) -> set[str]:
        return {form for group in self.verb_groups for form in group.forms}


@dataclass(frozen=True)
class BaselineMatch:
    entry_id: str
    sentence_index: int
    sentence_text: str
    matched_noun: str
    matched_verb: str


def load_lexicon(path: str) -> Lexicon:
    """Read a lexicon file: [nouns] / [verbs] sections, lemma = comma-separated forms."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)

    def groups(section: str) -> tuple[LexemeGroup, ...]:
        if not parser.has_section(section):
            return ()
        out = []
        for lemma, raw in parser.items(section):
            forms = tuple(f.strip().casefold() for f in raw.split(",") if f.strip())
            out.append(LexemeGroup(lemma, forms))
        return tuple(out)

    return Lexicon(noun_groups=groups("nouns"), verb_groups=groups("verbs"))


def tokenize(text: str) -> list[str]:
    """Case-folded word tokens; everything that is not a letter splits."""
    return [m.group(0).casefold() for m in _TOKEN_RE.finditer(text)]


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Half-open spans of sentences within text.

    A boundary sits after a run of terminal punctuation that is followed by
    whitespace and then an uppercase letter or digit. Inter-sentence
    whitespace belongs to neither span, so joining spans and gaps restores
    the input verbatim.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        if text[i] in _TERMINALS:
            j = i + 1
            while j < n and text[j] in _TERMINALS:
                j += 1
            k = j
            while k < n and text[k].isspace():
                k += 1
            if k > j and k < n and (text[k].isupper() or text[k].isdigit()):
                spans.append((start, j))
                start = k
                i = k
                continue
            i = j
        else:
            i += 1
    if start < n:
        spans.append((start, n))
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[a:b] for a, b in sentence_spans(text)]


def match_entry(entry: DiaryEntry, lexicon: Lexicon) -> list[BaselineMatch]:
    """At most one match per sentence: the first noun form and first verb form
    in token order, both required within the same sentence."""
    noun_forms = lexicon.noun_forms()
    verb_forms = lexicon.verb_forms()
    matches: list[BaselineMatch] = []
    for index, sentence in enumerate(split_sentences(entry.text)):
        noun = verb = None
        for token in tokenize(sentence):
            if noun is None and token in noun_forms:
                noun = token
            if verb is None and token in verb_forms:
                verb = token
            if noun is not None and verb is not None:
                break
        if noun is not None and verb is not None:
            matches.append(BaselineMatch(entry.entry_id, index, sentence.strip(), noun, verb))
    return matches


def run_baseline(entries: Iterable[DiaryEntry], lexicon: Lexicon) -> list[ExtractionRecord]:
    """One record per matched entry; purposes are the matched sentences,
    deduplicated per entry in sentence order."""
    records: list[ExtractionRecord] = []
    for entry in entries:
        purposes: list[str] = []
        for match in match_entry(entry, lexicon):
            if match.sentence_text not in purposes:
                purposes.append(match.sentence_text)
        if purposes:
            records.append(ExtractionRecord(entry.entry_id, BASELINE_ID, tuple(purposes)))
    return records
