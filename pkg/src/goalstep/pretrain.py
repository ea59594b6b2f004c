"""Build the 4-choose-1 goal/step pretraining dataset.

Each article with at least one step contributes exactly one example: its
longest step as the prompt, its goal as the correct candidate, and three
hard negatives found by walking the related-article graph.  The walk is
greedy: starting from the source article, repeatedly pick the related
article whose title has the least lexical overlap with the current
pivot's goal, then pivot there, until three negatives are collected.
When the walk runs out of related articles it falls back to seeded
uniform sampling over the whole corpus, skipping goals that overlap the
positive goal too strongly (they might not be true negatives).

Everything is deterministic: per-example randomness is seeded from
(global seed, article id), so parallel builds match serial ones.
"""
from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .corpus import Article, Corpus
from .text import Language, token_set

NUM_NEGATIVES = 3
NUM_CANDIDATES = NUM_NEGATIVES + 1
# Fallback sampling rejects negatives whose goal overlaps the positive
# goal at or above this threshold.
FALLBACK_MAX_OVERLAP = 0.5


class BuildError(Exception):
    """Raised when the corpus cannot support dataset construction."""


def lexical_overlap(a: str, b: str, language: Language) -> float:
    """Jaccard similarity between the token sets of two strings.

    Symmetric; 1.0 iff the token sets are equal and non-empty, 0.0 when
    they are disjoint or either normalizes to nothing.
    """
    ta = token_set(a, language)
    tb = token_set(b, language)
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def select_positive_step(article: Article) -> str:
    """The step with the most characters; earliest position wins ties."""
    if not article.steps:
        raise ValueError(f"article {article.id} has no steps")
    return max(article.steps, key=len)


def derive_seed(global_seed: int, article_id: str, stream: str) -> int:
    """Stable per-article sub-seed so parallel builds are order-free."""
    digest = hashlib.sha256(f"{global_seed}:{stream}:{article_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class SamplingTrace:
    source_id: str
    visited_ids: list[str]
    chosen_negative_ids: list[str]
    exhausted: bool


def sample_negatives(
    source: Article, corpus: Corpus, rng_seed: int
) -> tuple[list[str], SamplingTrace]:
    """Pick three hard-negative goals for one article.

    Greedy chain walk over related articles minimizing lexical overlap of
    the candidate's title with the current pivot's goal; ties break on
    the smallest article id.  A candidate must exist in the corpus, not
    be the source, not repeat an already chosen article, and carry a goal
    distinct from the positive goal and all chosen goals.  On frontier
    exhaustion the remaining slots are filled by seeded uniform sampling
    over the corpus (overlap with the positive goal < 0.5).
    """
    language = corpus.language
    positive_goal = source.goal
    chosen: list[Article] = []
    chosen_ids = {source.id}
    chosen_goals = {positive_goal}
    visited = [source.id]
    current = source
    exhausted = False

    while len(chosen) < NUM_NEGATIVES:
        frontier: dict[str, Article] = {}
        for rid in current.related_ids:
            art = corpus.articles.get(rid)
            if art is None or art.id in chosen_ids or art.goal in chosen_goals:
                continue
            frontier[art.id] = art
        if not frontier:
            exhausted = True
            break
        best = min(
            frontier.values(),
            key=lambda a: (lexical_overlap(a.title, current.goal, language), a.id),
        )
        chosen.append(best)
        chosen_ids.add(best.id)
        chosen_goals.add(best.goal)
        visited.append(best.id)
        current = best

    if exhausted:
        _fallback_fill(source, corpus, rng_seed, chosen, chosen_ids, chosen_goals)

    trace = SamplingTrace(
        source_id=source.id,
        visited_ids=visited,
        chosen_negative_ids=[a.id for a in chosen],
        exhausted=exhausted,
    )
    return [a.goal for a in chosen], trace


def _fallback_fill(
    source: Article,
    corpus: Corpus,
    rng_seed: int,
    chosen: list[Article],
    chosen_ids: set[str],
    chosen_goals: set[str],
) -> None:
    language = corpus.language
    ids = corpus.sorted_ids()
    rng = random.Random(rng_seed)

    def eligible(art: Article) -> bool:
        return art.id not in chosen_ids and art.goal not in chosen_goals

    def take(art: Article) -> None:
        chosen.append(art)
        chosen_ids.add(art.id)
        chosen_goals.add(art.goal)

    attempts = 0
    cap = max(1000, 50 * NUM_NEGATIVES)
    while len(chosen) < NUM_NEGATIVES and attempts < cap:
        attempts += 1
        art = corpus.articles[ids[rng.randrange(len(ids))]]
        if eligible(art) and (
            lexical_overlap(art.goal, source.goal, language) < FALLBACK_MAX_OVERLAP
        ):
            take(art)
    if len(chosen) < NUM_NEGATIVES:
        # Rejection budget spent: scan deterministically, first honoring
        # the overlap threshold, then without it so tiny corpora still
        # yield a full candidate set.
        for relax in (False, True):
            for aid in ids:
                if len(chosen) == NUM_NEGATIVES:
                    return
                art = corpus.articles[aid]
                if not eligible(art):
                    continue
                if not relax and (
                    lexical_overlap(art.goal, source.goal, language)
                    >= FALLBACK_MAX_OVERLAP
                ):
                    continue
                take(art)
        if len(chosen) < NUM_NEGATIVES:
            raise BuildError(
                "corpus has fewer than 4 distinct goals; cannot sample negatives"
            )


@dataclass
class GoalStepExample:
    id: str
    language: Language
    step_text: str
    candidates: list[str]
    answer_index: int

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "language": self.language.value,
            "step": self.step_text,
            "candidates": self.candidates,
            "label": self.answer_index,
        }


@dataclass
class BuildSummary:
    language: Language
    seed: int
    total_articles: int = 0
    examples: int = 0
    skipped_no_steps: int = 0
    excluded_ids: int = 0
    fallback_used: int = 0

    @property
    def fallback_rate(self) -> float:
        return self.fallback_used / self.examples if self.examples else 0.0

    def to_dict(self) -> dict:
        return {
            "language": self.language.value,
            "seed": self.seed,
            "total_articles": self.total_articles,
            "examples": self.examples,
            "skipped_no_steps": self.skipped_no_steps,
            "excluded_ids": self.excluded_ids,
            "fallback_used": self.fallback_used,
            "fallback_rate": self.fallback_rate,
        }


def make_example(
    article: Article, corpus: Corpus, global_seed: int
) -> tuple[GoalStepExample, SamplingTrace]:
    """One shuffled 4-candidate example for one article."""
    step = select_positive_step(article)
    negatives, trace = sample_negatives(
        article, corpus, derive_seed(global_seed, article.id, "negatives")
    )
    candidates = [article.goal] + negatives
    rng = random.Random(derive_seed(global_seed, article.id, "shuffle"))
    rng.shuffle(candidates)
    example = GoalStepExample(
        id=article.id,
        language=corpus.language,
        step_text=step,
        candidates=candidates,
        answer_index=candidates.index(article.goal),
    )
    return example, trace


def build_dataset(
    corpus: Corpus,
    rng_seed: int,
    exclude_ids: Iterable[str] | None = None,
    workers: int = 1,
) -> tuple[list[GoalStepExample], BuildSummary]:
    """One example per article that has at least one step.

    Output is sorted by article id, so worker scheduling cannot leak into
    the result; the same corpus and seed always produce the same examples.
    Articles listed in exclude_ids (e.g. an open-domain holdout) do not
    contribute examples.
    """
    if len(corpus.distinct_goals()) < NUM_CANDIDATES:
        raise BuildError("corpus has fewer than 4 distinct goals")
    excluded = frozenset(exclude_ids or ())
    summary = BuildSummary(language=corpus.language, seed=rng_seed)
    summary.total_articles = len(corpus.articles)

    eligible: list[Article] = []
    for aid in corpus.sorted_ids():
        art = corpus.articles[aid]
        if aid in excluded:
            summary.excluded_ids += 1
        elif not art.steps:
            summary.skipped_no_steps += 1
        else:
            eligible.append(art)

    def job(article: Article) -> tuple[GoalStepExample, SamplingTrace]:
        return make_example(article, corpus, rng_seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, eligible))
    else:
        results = [job(a) for a in eligible]

    examples = [ex for ex, _ in results]
    summary.examples = len(examples)
    summary.fallback_used = sum(1 for _, tr in results if tr.exhausted)
    return examples, summary


def write_examples(examples: Sequence[GoalStepExample], fp: IO[str]) -> None:
    for ex in examples:
        fp.write(json.dumps(ex.to_record(), ensure_ascii=False, separators=(",", ":")))
        fp.write("\n")
