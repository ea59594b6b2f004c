"""Scorer contract: (context, candidates) -> one real-valued likelihood each.

Scores are raw reals, not probabilities; only the argmax and the ranking
matter.  Besides the in-process TF-IDF baseline and a seeded random
scorer, an external scorer can be attached over a line-delimited JSON
protocol on a child process's stdio or a TCP socket:

    scorer -> {"protocol": "mcq-scorer", "version": 1}
    client -> {"id": ..., "context": ..., "candidates": [...]}
    scorer -> {"id": ..., "scores": [...]}

One object per line, UTF-8, no pretty-printing.  Responses may arrive
out of order; the id is authoritative.
"""
from __future__ import annotations

import json
import math
import queue
import random
import shlex
import socket
import subprocess
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .text import Language, tokenize

PROTOCOL_NAME = "mcq-scorer"
PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 60.0


class ScorerProtocolError(Exception):
    """A scorer broke the contract; carries the offending payload."""


@dataclass(frozen=True)
class ScoreRequest:
    id: str
    context: str
    candidates: tuple[str, ...]

    def validate(self) -> None:
        if len(self.candidates) < 2:
            raise ValueError(f"request {self.id}: need at least 2 candidates")
        if any(not c for c in self.candidates):
            raise ValueError(f"request {self.id}: empty candidate")

    def to_line(self) -> str:
        return json.dumps(
            {"id": self.id, "context": self.context, "candidates": list(self.candidates)},
            ensure_ascii=False,
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class CandidateScores:
    id: str
    scores: tuple[float, ...]


class Scorer(Protocol):
    def score(self, req: ScoreRequest) -> CandidateScores: ...


def check_scores(req: ScoreRequest, result: CandidateScores) -> None:
    """Validate a score vector against its request; raises on violation."""
    if result.id != req.id:
        raise ScorerProtocolError(
            f"response id {result.id!r} does not match request {req.id!r}"
        )
    if len(result.scores) != len(req.candidates):
        raise ScorerProtocolError(
            f"request {req.id}: {len(req.candidates)} candidates but "
            f"{len(result.scores)} scores"
        )
    if any(not math.isfinite(s) for s in result.scores):
        raise ScorerProtocolError(f"request {req.id}: non-finite score")


def predict(req: ScoreRequest, scorer: Scorer) -> int:
    """Index of the maximum-likelihood candidate; ties go to the lowest index."""
    req.validate()
    result = scorer.score(req)
    check_scores(req, result)
    best = max(result.scores)
    return result.scores.index(best)


class TfidfVectorizer:
    """Sparse TF-IDF vectors over the per-language tokenizer.

    IDF uses the smoothed form ln((1 + N) / (1 + df)) + 1, which stays
    defined for unseen tokens; an unfitted vectorizer degenerates to
    plain term counts.
    """

    def __init__(self, language: Language = Language.en):
        self.language = language
        self._df: Counter[str] = Counter()
        self._n_docs = 0

    def fit(self, texts: Iterable[str]) -> "TfidfVectorizer":
        self._df = Counter()
        self._n_docs = 0
        for text in texts:
            self._n_docs += 1
            self._df.update(set(tokenize(text, self.language)))
        return self

    def idf(self, token: str) -> float:
        return math.log((1 + self._n_docs) / (1 + self._df[token])) + 1.0

    def vector(self, text: str) -> dict[str, float]:
        counts = Counter(tokenize(text, self.language))
        return {tok: tf * self.idf(tok) for tok, tf in counts.items()}

    @staticmethod
    def cosine(a: dict[str, float], b: dict[str, float]) -> float:
        if not a or not b:
            return 0.0
        if len(b) < len(a):
            a, b = b, a
        dot = sum(w * b[t] for t, w in a.items() if t in b)
        if dot == 0.0:
            return 0.0
        na = math.sqrt(sum(w * w for w in a.values()))
        nb = math.sqrt(sum(w * w for w in b.values()))
        return dot / (na * nb)


class TfidfBaseline:
    """Cosine similarity between TF-IDF vectors of context and candidate.

    The IDF table is fitted on the evaluation corpus's contexts at load
    time (or on a training subsample, for learning curves).
    """

    def __init__(self, language: Language = Language.en):
        self.vectorizer = TfidfVectorizer(language)

    def fit(self, texts: Iterable[str]) -> "TfidfBaseline":
        self.vectorizer.fit(texts)
        return self

    def score(self, req: ScoreRequest) -> CandidateScores:
        ctx = self.vectorizer.vector(req.context)
        scores = tuple(
            self.vectorizer.cosine(ctx, self.vectorizer.vector(c))
            for c in req.candidates
        )
        return CandidateScores(id=req.id, scores=scores)


class RandomScorer:
    """Uniform random scores from a fixed seed; realizes the chance rows."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def score(self, req: ScoreRequest) -> CandidateScores:
        return CandidateScores(
            id=req.id, scores=tuple(self._rng.random() for _ in req.candidates)
        )


class _LineChannel:
    """Reader thread over a line stream so reads can time out."""

    def __init__(self, readable, writable, on_close=None):
        self._readable = readable
        self._writable = writable
        self._on_close = on_close
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        try:
            for line in self._readable:
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        finally:
            self._lines.put(None)

    def write_line(self, line: str) -> None:
        self._writable.write(line + "\n")
        self._writable.flush()

    def read_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise ScorerProtocolError(f"scorer timed out after {timeout:.1f}s")
        if line is None:
            raise ScorerProtocolError("scorer closed the connection")
        return line

    def close(self) -> None:
        if self._on_close is not None:
            self._on_close()


def parse_response_line(line: str) -> CandidateScores:
    """Parse one response line; raises with the offending line on error."""
    try:
        rec = json.loads(line)
        if not isinstance(rec, dict):
            raise ValueError("not an object")
        rid = rec["id"]
        scores = rec["scores"]
        if not isinstance(rid, str) or not isinstance(scores, list):
            raise ValueError("bad field types")
        return CandidateScores(id=rid, scores=tuple(float(s) for s in scores))
    except (ValueError, KeyError, TypeError) as exc:
        raise ScorerProtocolError(
            f"malformed scorer response ({exc}): {line.strip()!r}"
        ) from exc


def parse_handshake_line(line: str) -> None:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ScorerProtocolError(f"malformed handshake: {line.strip()!r}") from exc
    if not isinstance(rec, dict) or rec.get("protocol") != PROTOCOL_NAME:
        raise ScorerProtocolError(f"unexpected handshake: {line.strip()!r}")
    if rec.get("version") != PROTOCOL_VERSION:
        raise ScorerProtocolError(f"unsupported protocol version: {rec.get('version')!r}")


class ExternalScorer:
    """Client for one serial scorer connection.

    Requests on a connection are written in order; responses are matched
    by id, so an out-of-order but id-matched response stream is accepted.
    Parallel scoring means multiple connections, never interleaved writes
    on one channel.
    """

    def __init__(self, channel: _LineChannel, timeout: float = DEFAULT_TIMEOUT):
        self._channel = channel
        self.timeout = timeout
        self._pending: dict[str, CandidateScores] = {}
        parse_handshake_line(channel.read_line(timeout))

    @classmethod
    def from_command(
        cls, cmd: str | Sequence[str], timeout: float = DEFAULT_TIMEOUT
    ) -> "ExternalScorer":
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )

        def shutdown() -> None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()

        return cls(_LineChannel(proc.stdout, proc.stdin, shutdown), timeout)

    @classmethod
    def from_tcp(
        cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT
    ) -> "ExternalScorer":
        sock = socket.create_connection((host, port), timeout=timeout)
        reader = sock.makefile("r", encoding="utf-8")
        writer = sock.makefile("w", encoding="utf-8")

        def shutdown() -> None:
            for f in (reader, writer):
                try:
                    f.close()
                except OSError:
                    pass
            sock.close()

        return cls(_LineChannel(reader, writer), timeout)

    def close(self) -> None:
        self._channel.close()

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _await(self, rid: str) -> CandidateScores:
        if rid in self._pending:
            return self._pending.pop(rid)
        while True:
            result = parse_response_line(self._channel.read_line(self.timeout))
            if result.id == rid:
                return result
            self._pending[result.id] = result

    def score(self, req: ScoreRequest) -> CandidateScores:
        self._channel.write_line(req.to_line())
        result = self._await(req.id)
        check_scores(req, result)
        return result

    def score_many(self, reqs: Sequence[ScoreRequest]) -> list[CandidateScores]:
        """Pipeline a batch on this connection and collect results by id."""
        for req in reqs:
            self._channel.write_line(req.to_line())
        results = []
        for req in reqs:
            result = self._await(req.id)
            check_scores(req, result)
            results.append(result)
        return results


def conformance_requests() -> list[ScoreRequest]:
    """Canned requests covering 2, 4 and 12 candidate shapes."""
    reqs = []
    shapes = [2, 4, 12]
    for n in shapes:
        candidates = tuple(f"candidate {chr(ord('a') + i)}" for i in range(n))
        reqs.append(
            ScoreRequest(id=f"conformance-{n}", context=f"probe with {n} options",
                         candidates=candidates)
        )
    return reqs


def run_conformance_check(
    scorer: ExternalScorer, requests: Sequence[ScoreRequest] | None = None
) -> list[CandidateScores]:
    """Drive canned requests through a live scorer, validating every reply.

    Raises ScorerProtocolError on the first violation; the handshake was
    already validated when the connection was opened.
    """
    reqs = list(requests) if requests is not None else conformance_requests()
    results = []
    for req in reqs:
        req.validate()
        results.append(scorer.score(req))
    return results
