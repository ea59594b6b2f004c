"""Accuracy, repeat statistics, significance testing, learning curves.

The significance test is the evaluation protocol's one-sample, one-tailed
Student t-test at alpha = 0.05: t = (mean - baseline) / (sd / sqrt(n))
with the n-1 sample standard deviation, p = upper-tail probability at
n-1 degrees of freedom.  The t tail is computed here from the regularized
incomplete beta function (continued fraction), so the test carries no
heavyweight dependency and can be validated against an independent
statistics oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .benchmarks import IntentInstance, McqItem, subsample_training
from .scorers import Scorer, ScoreRequest, ScorerProtocolError, predict

ALPHA = 0.05


class Setting(str, Enum):
    """Training regimes a report can be tagged with."""

    ID = "ID"
    WH_ID = "WH+ID"
    WH_0shot = "WH-0shot"
    enWH_ID = "enWH+ID"
    enWH_0shot = "enWH-0shot"


def accuracy(predictions: Sequence[tuple[int, int]]) -> float:
    """Fraction of (predicted, gold) pairs that agree."""
    if not predictions:
        raise ValueError("accuracy of an empty prediction list is undefined")
    correct = sum(1 for pred, gold in predictions if pred == gold)
    return correct / len(predictions)


def format_accuracy(value: float) -> str:
    """Three-decimal display form (.994 style)."""
    s = f"{value:.3f}"
    return s[1:] if s.startswith("0.") else s


# --- Student t upper tail via the regularized incomplete beta function ---

_CF_EPS = 3e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the convergent branch of the continued fraction.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T >= t) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    x = df / (df + t * t)
    half_tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)
    return half_tail if t >= 0 else 1.0 - half_tail


def student_t_critical(df: int, alpha: float = ALPHA) -> float:
    """Upper-tail critical value, by bisection on the survival function."""
    lo, hi = 0.0, 1.0
    while student_t_sf(hi, df) > alpha:
        hi *= 2.0
        if hi > 1e8:
            raise ArithmeticError("critical value out of range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_sf(mid, df) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class SignificanceResult:
    repeats: list[float]
    mean: float
    baseline: float
    t_statistic: float
    p_value: float
    significant: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        t = self.t_statistic
        return {
            "repeats": self.repeats,
            "mean": self.mean,
            "baseline": self.baseline,
            # inf is not valid JSON; keep degenerate t as a string
            "t_statistic": t if math.isfinite(t) else repr(t),
            "p_value": self.p_value,
            "significant": self.significant,
            "degenerate": self.degenerate,
            "alpha": ALPHA,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "SignificanceResult":
        return cls(
            repeats=[float(x) for x in rec["repeats"]],
            mean=float(rec["mean"]),
            baseline=float(rec["baseline"]),
            t_statistic=float(rec["t_statistic"]),
            p_value=float(rec["p_value"]),
            significant=bool(rec["significant"]),
            degenerate=bool(rec.get("degenerate", False)),
        )


def t_test_one_sample_one_tailed(
    samples: Sequence[float], baseline: float
) -> SignificanceResult:
    """One-tailed test of whether the sample mean exceeds a fixed baseline.

    Zero sample variance is degenerate: p is forced to 0 (mean above
    baseline), 1 (below) or 0.5 (equal, never significant).
    """
    n = len(samples)
    if n < 2:
        raise ValueError("need at least 2 samples for a t-test")
    mean = math.fsum(samples) / n
    var = math.fsum((x - mean) ** 2 for x in samples) / (n - 1)
    sd = math.sqrt(var)
    if sd == 0.0:
        if mean > baseline:
            t, p = math.inf, 0.0
        elif mean < baseline:
            t, p = -math.inf, 1.0
        else:
            t, p = 0.0, 0.5
        return SignificanceResult(
            repeats=list(samples),
            mean=mean,
            baseline=baseline,
            t_statistic=t,
            p_value=p,
            significant=p < ALPHA and mean > baseline,
            degenerate=True,
        )
    t = (mean - baseline) / (sd / math.sqrt(n))
    p = student_t_sf(t, n - 1)
    return SignificanceResult(
        repeats=list(samples),
        mean=mean,
        baseline=baseline,
        t_statistic=t,
        p_value=p,
        significant=p < ALPHA and mean > baseline,
    )


@dataclass
class EvalReport:
    dataset: str | None
    setting: str | None
    n_instances: int
    accuracy: float
    per_intent_accuracy: dict[str, float] = field(default_factory=dict)
    failures: int = 0
    single_candidate_fraction: float | None = None

    def to_dict(self) -> dict:
        rec = {
            "dataset": self.dataset,
            "setting": self.setting,
            "n_instances": self.n_instances,
            "accuracy": self.accuracy,
            "accuracy_display": format_accuracy(self.accuracy),
            "per_intent_accuracy": self.per_intent_accuracy,
            "failures": self.failures,
        }
        if self.single_candidate_fraction is not None:
            rec["single_candidate_fraction"] = self.single_candidate_fraction
        return rec

    @classmethod
    def from_dict(cls, rec: dict) -> "EvalReport":
        return cls(
            dataset=rec.get("dataset"),
            setting=rec.get("setting"),
            n_instances=int(rec["n_instances"]),
            accuracy=float(rec["accuracy"]),
            per_intent_accuracy={
                k: float(v) for k, v in rec.get("per_intent_accuracy", {}).items()
            },
            failures=int(rec.get("failures", 0)),
            single_candidate_fraction=rec.get("single_candidate_fraction"),
        )


def evaluate_items(
    items: Sequence[McqItem],
    scorer: Scorer,
    dataset: str | None = None,
    setting: str | None = None,
) -> EvalReport:
    """Score every item and aggregate accuracy.

    A scorer that breaks the protocol on an instance marks it failed;
    failed instances count as incorrect so accuracy stays comparable
    across scorers.
    """
    if not items:
        raise ValueError("cannot evaluate an empty item list")
    correct = 0
    failures = 0
    per_intent: dict[str, list[int]] = {}
    single_candidates = 0
    for item in items:
        gold_text = item.candidates[item.label]
        if len(item.candidates) == 1:
            single_candidates += 1
            hit = 1  # a lone candidate is trivially the argmax
        else:
            req = ScoreRequest(item.id, item.text, item.candidates)
            try:
                hit = int(predict(req, scorer) == item.label)
            except ScorerProtocolError:
                failures += 1
                hit = 0
        correct += hit
        per_intent.setdefault(gold_text, []).append(hit)
    return EvalReport(
        dataset=dataset,
        setting=setting,
        n_instances=len(items),
        accuracy=correct / len(items),
        per_intent_accuracy={
            k: sum(v) / len(v) for k, v in sorted(per_intent.items())
        },
        failures=failures,
        single_candidate_fraction=single_candidates / len(items),
    )


DEFAULT_CURVE_SIZES = (10, 50, 100, 500, 1000)


@dataclass
class CurvePoint:
    size: int
    repeats: list[float]

    @property
    def mean_accuracy(self) -> float:
        return math.fsum(self.repeats) / len(self.repeats)


@dataclass
class LearningCurve:
    sizes: list[int]
    points: list[CurvePoint]

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "points": [
                {"size": p.size, "mean_accuracy": p.mean_accuracy, "repeats": p.repeats}
                for p in self.points
            ],
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "LearningCurve":
        return cls(
            sizes=[int(s) for s in rec["sizes"]],
            points=[
                CurvePoint(size=int(p["size"]), repeats=[float(r) for r in p["repeats"]])
                for p in rec["points"]
            ],
        )


ScorerFactory = Callable[[Sequence[IntentInstance]], Scorer]


def build_learning_curve(
    train_instances: Sequence[IntentInstance],
    eval_items: Sequence[McqItem],
    sizes: Sequence[int],
    repeats: int,
    seed: int,
    scorer_factory: ScorerFactory,
) -> LearningCurve:
    """Accuracy as a function of training-subsample size.

    For each size and repeat, a fresh subsample is drawn and handed to
    the factory (which fits or retrains a scorer on it); the resulting
    scorer is evaluated on the fixed evaluation split.  Deterministic per
    seed: repeat r of size s draws with a derived sub-seed.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("empty size grid")
    if any(s < 1 for s in sizes):
        raise ValueError("sizes must be >= 1")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    if sizes[-1] > len(train_instances):
        raise ValueError(
            f"size {sizes[-1]} exceeds the train split ({len(train_instances)})"
        )
    if repeats < 1:
        raise ValueError("repeats must be >= 1")

    points = []
    for size in sizes:
        repeat_accs = []
        for r in range(repeats):
            subsample = subsample_training(train_instances, size, seed + 7919 * r)
            scorer = scorer_factory(subsample)
            report = evaluate_items(eval_items, scorer)
            repeat_accs.append(report.accuracy)
        points.append(CurvePoint(size=size, repeats=repeat_accs))
    return LearningCurve(sizes=sizes, points=points)
