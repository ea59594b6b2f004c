"""Instructional-corpus model: articles with a goal, ordered steps, and related links.

The corpus arrives as a JSON-Lines dump, one article per line:

    {"id": str, "title": str, "step_headers": [str], "related_ids": [str]}

Unknown fields are ignored.  An article's goal is its title with one
leading language-specific prefix ("How to" and equivalents) removed.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping

from .text import Language

# Per-language title prefixes, longest tried first at match time.  The
# English list is canonical; the others are overridable configuration.
DEFAULT_PREFIXES: Mapping[Language, tuple[str, ...]] = {
    Language.en: ("How to",),
    Language.es: ("Cómo", "Como"),
    Language.th: ("วิธีการ", "วิธี"),
}


class CorpusFormatError(Exception):
    """Raised when the input stream is not a corpus dump at all."""


def extract_goal(
    title: str,
    language: Language,
    prefixes: Iterable[str] | None = None,
) -> str:
    """Strip one leading language prefix from a title and trim whitespace.

    Matching is case-insensitive for Latin scripts and requires a
    non-alphanumeric boundary after the prefix; Thai is matched exactly
    with no boundary (Thai writes no space between prefix and goal).
    Returns the trimmed title unchanged when no prefix matches; the
    result may be empty, in which case the article is invalid.
    """
    if prefixes is None:
        prefixes = DEFAULT_PREFIXES[language]
    title = title.strip()
    casefold = language is not Language.th
    probe = title.lower() if casefold else title
    for prefix in sorted(prefixes, key=len, reverse=True):
        p = prefix.lower() if casefold else prefix
        if not probe.startswith(p):
            continue
        rest = title[len(p) :]
        if casefold and rest and rest[0].isalnum():
            continue  # "How together" must not lose "gether"
        return rest.strip()
    return title


@dataclass(frozen=True)
class Article:
    id: str
    language: Language
    title: str
    goal: str
    steps: tuple[str, ...]
    related_ids: tuple[str, ...]


@dataclass
class ParseReport:
    """Bookkeeping for one parse pass; not part of corpus identity."""

    lines_total: int = 0
    malformed_lines: int = 0
    duplicate_ids: int = 0
    excluded_empty_goal: int = 0
    self_links_dropped: int = 0


@dataclass
class Corpus:
    language: Language
    articles: dict[str, Article]
    report: ParseReport = field(default_factory=ParseReport, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.articles)

    def sorted_ids(self) -> list[str]:
        cached = self.__dict__.get("_sorted_ids")
        if cached is None:
            cached = sorted(self.articles)
            self.__dict__["_sorted_ids"] = cached
        return cached

    def dangling_related_ids(self) -> frozenset[str]:
        """Related ids that reference no known article (kept, flagged)."""
        return frozenset(
            rid
            for art in self.articles.values()
            for rid in art.related_ids
            if rid not in self.articles
        )

    def distinct_goals(self) -> frozenset[str]:
        return frozenset(a.goal for a in self.articles.values())


def _iter_text_lines(source: Iterable[str] | Iterable[bytes] | IO) -> Iterator[str]:
    if isinstance(source, (str, bytes)):
        raise TypeError("pass an open stream or an iterable of lines, not a blob")
    if isinstance(source, io.IOBase) and not source.readable():
        raise OSError("corpus stream is not readable")
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line


def _article_from_record(
    rec: dict,
    language: Language,
    prefixes: Iterable[str] | None,
    report: ParseReport,
) -> Article | None:
    """Build an Article, or None when the record's goal is empty.

    Raises ValueError for structurally malformed records.
    """
    art_id = rec.get("id")
    title = rec.get("title")
    headers = rec.get("step_headers")
    related = rec.get("related_ids")
    if not isinstance(art_id, str) or not art_id:
        raise ValueError("missing or empty id")
    if not isinstance(title, str) or not title.strip():
        raise ValueError("missing or empty title")
    if not isinstance(headers, list) or not all(isinstance(s, str) for s in headers):
        raise ValueError("step_headers must be a list of strings")
    if not isinstance(related, list) or not all(isinstance(s, str) for s in related):
        raise ValueError("related_ids must be a list of strings")

    goal = extract_goal(title, language, prefixes)
    if not goal:
        return None
    # Step headers are preserved verbatim (including trailing punctuation);
    # only empty headers are dropped, per the non-empty-steps invariant.
    steps = tuple(s for s in headers if s.strip())
    kept_related = tuple(rid for rid in related if rid != art_id)
    report.self_links_dropped += len(related) - len(kept_related)
    return Article(
        id=art_id,
        language=language,
        title=title.strip(),
        goal=goal,
        steps=steps,
        related_ids=kept_related,
    )


def parse_corpus(
    source: Iterable[str] | Iterable[bytes] | IO,
    language: Language,
    prefixes: Iterable[str] | None = None,
) -> Corpus:
    """Parse a corpus JSON-Lines dump in a single order-preserving pass.

    Malformed lines (bad JSON, missing fields, duplicate ids) are counted
    in the corpus report rather than raising; a stream where more than
    half the lines are malformed raises CorpusFormatError since that
    signals the wrong input file.  Articles whose goal is empty after
    prefix stripping are excluded and counted.
    """
    report = ParseReport()
    articles: dict[str, Article] = {}
    for raw in _iter_text_lines(source):
        line = raw.strip()
        if not line:
            continue
        report.lines_total += 1
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            article = _article_from_record(rec, language, prefixes, report)
        except (ValueError, json.JSONDecodeError):
            report.malformed_lines += 1
            continue
        if article is None:
            report.excluded_empty_goal += 1
            continue
        if article.id in articles:
            report.malformed_lines += 1
            report.duplicate_ids += 1
            continue
        articles[article.id] = article
    if report.lines_total and report.malformed_lines * 2 > report.lines_total:
        raise CorpusFormatError(
            f"{report.malformed_lines} of {report.lines_total} lines are malformed; "
            "this does not look like a corpus dump"
        )
    return Corpus(language=language, articles=articles, report=report)


def parse_corpus_path(
    path, language: Language, prefixes: Iterable[str] | None = None
) -> Corpus:
    with open(path, "rb") as fh:
        return parse_corpus(fh, language, prefixes)


def write_corpus(corpus: Corpus, fp: IO[str]) -> None:
    """Serialize back to the corpus JSON-Lines format (round-trippable)."""
    for art in corpus.articles.values():
        rec = {
            "id": art.id,
            "title": art.title,
            "step_headers": list(art.steps),
            "related_ids": list(art.related_ids),
        }
        fp.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
