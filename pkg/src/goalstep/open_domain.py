"""Open-domain evaluation: rank held-out steps against similar goals.

A holdout of goal/step pairs is drawn from the corpus; for each held-out
step, the candidate set is its gold goal plus the goals most similar to
it under a pluggable embedder (most other goals are irrelevant, so only
the nearest k are ranked).  A scorer then ranks all candidates against
the step text and we report mean reciprocal rank and rank-1 accuracy.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy import sparse

from .corpus import Article, Corpus
from .pretrain import derive_seed, select_positive_step
from .scorers import (
    CandidateScores,
    Scorer,
    ScoreRequest,
    ScorerProtocolError,
    TfidfVectorizer,
    check_scores,
)
from .text import Language

DEFAULT_HOLDOUT = 5000
DEFAULT_CANDIDATES = 100


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> "sparse.spmatrix | np.ndarray": ...


class TfidfEmbedder:
    """Default dependency-light embedder: TF-IDF rows over a fixed vocab.

    Tokens unseen at fit time are dropped at embed time; fit on the full
    goal pool before querying.
    """

    def __init__(self, language: Language = Language.en):
        self.language = language
        self._vectorizer = TfidfVectorizer(language)
        self._vocab: dict[str, int] = {}

    def fit(self, texts: Sequence[str]) -> "TfidfEmbedder":
        self._vectorizer.fit(texts)
        self._vocab = {tok: i for i, tok in enumerate(sorted(self._vectorizer._df))}
        return self

    def embed(self, texts: Sequence[str]) -> sparse.csr_matrix:
        if not self._vocab:
            raise RuntimeError("TfidfEmbedder.embed called before fit")
        rows, cols, vals = [], [], []
        for r, text in enumerate(texts):
            for tok, w in self._vectorizer.vector(text).items():
                col = self._vocab.get(tok)
                if col is not None:
                    rows.append(r)
                    cols.append(col)
                    vals.append(w)
        return sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(texts), len(self._vocab))
        )


def _normalize_rows(matrix) -> np.ndarray | sparse.csr_matrix:
    if sparse.issparse(matrix):
        matrix = matrix.tocsr().astype(float)
        norms = np.sqrt(matrix.multiply(matrix).sum(axis=1)).A.ravel()
        scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        return sparse.diags(scale) @ matrix
    matrix = np.asarray(matrix, dtype=float)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


class GoalRetriever:
    """Exact brute-force cosine retrieval over a fixed goal pool."""

    def __init__(self, goals: Sequence[str], embedder: Embedder):
        self.goals = sorted(set(goals))
        self._goal_arr = np.array(self.goals)
        self._index = {g: i for i, g in enumerate(self.goals)}
        self._matrix = _normalize_rows(embedder.embed(self.goals))
        self._embedder = embedder

    def top_k(self, gold_goal: str, k: int) -> list[str]:
        """Gold first, then the k-1 nearest other goals by cosine.

        The gold goal is force-included (rank-0 self-similarity); ties
        among the rest break lexicographically.
        """
        pool_size = len(self.goals) + (0 if gold_goal in self._index else 1)
        if not 1 <= k <= pool_size:
            raise ValueError(f"k={k} outside [1, {pool_size}]")
        query = _normalize_rows(self._embedder.embed([gold_goal]))
        sims = np.asarray((self._matrix @ query.T)).ravel()
        order = np.lexsort((self._goal_arr, -sims))
        out = [gold_goal]
        for idx in order:
            if len(out) == k:
                break
            goal = self.goals[idx]
            if goal != gold_goal:
                out.append(goal)
        return out


def top_k_similar(
    gold_goal: str, all_goals: Sequence[str], k: int, embedder: Embedder
) -> list[str]:
    return GoalRetriever(all_goals, embedder).top_k(gold_goal, k)


def hold_out(
    corpus: Corpus, k: int, seed: int
) -> tuple[list[Article], list[Article]]:
    """Seeded uniform holdout of k articles that can contribute a pair.

    Returns (held, remainder), both sorted by id and disjoint; held
    articles must be excluded from any pretraining dataset built in the
    same run.
    """
    eligible = [aid for aid in corpus.sorted_ids() if corpus.articles[aid].steps]
    if k > len(eligible):
        raise ValueError(f"holdout k={k} exceeds {len(eligible)} eligible articles")
    rng = random.Random(seed)
    held_ids = set(rng.sample(eligible, k))
    held = [corpus.articles[aid] for aid in corpus.sorted_ids() if aid in held_ids]
    remainder = [
        corpus.articles[aid] for aid in corpus.sorted_ids() if aid not in held_ids
    ]
    return held, remainder


@dataclass
class OpenDomainInstance:
    step_text: str
    gold_goal: str
    candidate_goals: list[str]
    id: str = ""

    def validate(self) -> None:
        if self.candidate_goals.count(self.gold_goal) != 1:
            raise ValueError(f"instance {self.id}: gold must appear exactly once")
        if len(set(self.candidate_goals)) != len(self.candidate_goals):
            raise ValueError(f"instance {self.id}: duplicate candidates")


def build_instances(
    held: Sequence[Article],
    goal_pool: Sequence[str],
    k: int,
    embedder: Embedder,
    seed: int,
) -> list[OpenDomainInstance]:
    """One ranking instance per held-out article.

    Candidates are the gold goal plus its k-1 nearest pool goals, then
    shuffled per instance (seeded) so the gold does not sit at a fixed
    position.
    """
    retriever = GoalRetriever(goal_pool, embedder)
    instances = []
    for art in held:
        candidates = retriever.top_k(art.goal, k)
        rng = random.Random(derive_seed(seed, art.id, "open-domain"))
        rng.shuffle(candidates)
        inst = OpenDomainInstance(
            step_text=select_positive_step(art),
            gold_goal=art.goal,
            candidate_goals=candidates,
            id=art.id,
        )
        inst.validate()
        instances.append(inst)
    return instances


@dataclass
class RankingResult:
    id: str
    gold_rank: int
    failed: bool = False

    @property
    def reciprocal_rank(self) -> float:
        return 1.0 / self.gold_rank


@dataclass
class OpenDomainReport:
    mrr: float
    acc_at_1: float
    results: list[RankingResult] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.results if r.failed)

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "acc_at_1": self.acc_at_1,
            "n_instances": len(self.results),
            "failures": self.failures,
        }


def gold_rank(scores: Sequence[float], gold_index: int) -> int:
    """1-based rank of the gold candidate under a stable descending sort
    with index tie-break."""
    gold_score = scores[gold_index]
    ahead = sum(
        1
        for i, s in enumerate(scores)
        if s > gold_score or (s == gold_score and i < gold_index)
    )
    return 1 + ahead


def evaluate_open_domain(
    instances: Sequence[OpenDomainInstance], scorer: Scorer
) -> OpenDomainReport:
    """Rank every candidate set with the scorer; report MRR and acc@1.

    A protocol failure on an instance is scored at the worst possible
    rank (the candidate-set size) and flagged.
    """
    if not instances:
        raise ValueError("cannot evaluate an empty instance list")
    results = []
    for i, inst in enumerate(instances):
        inst.validate()
        rid = inst.id or f"od-{i}"
        req = ScoreRequest(rid, inst.step_text, tuple(inst.candidate_goals))
        gold_index = inst.candidate_goals.index(inst.gold_goal)
        try:
            result: CandidateScores = scorer.score(req)
            check_scores(req, result)
            rank = gold_rank(result.scores, gold_index)
            results.append(RankingResult(id=rid, gold_rank=rank))
        except ScorerProtocolError:
            results.append(
                RankingResult(id=rid, gold_rank=len(inst.candidate_goals), failed=True)
            )
    mrr = sum(r.reciprocal_rank for r in results) / len(results)
    acc = sum(1 for r in results if r.gold_rank == 1) / len(results)
    return OpenDomainReport(mrr=mrr, acc_at_1=acc, results=results)
