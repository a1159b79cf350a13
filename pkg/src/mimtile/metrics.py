"""ANLS and exact-match accuracy for document VQA style answers."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .errors import EmptyEval, NoGold

DEFAULT_TAU = 0.5


def levenshtein(a: str, b: str) -> int:
    """Edit distance over code points (insert, delete, substitute)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalize_answer(s: str) -> str:
    return s.strip().lower()


def nls(prediction: str, gold: str) -> float:
    p, g = normalize_answer(prediction), normalize_answer(gold)
    longest = max(len(p), len(g))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(p, g) / longest


def anls(prediction: str, golds: Sequence[str], tau: float = DEFAULT_TAU) -> float:
    if not golds:
        raise NoGold("at least one gold answer is required")
    best = max(nls(prediction, g) for g in golds)
    return best if best >= tau else 0.0


def exact_match(prediction: str, golds: Sequence[str]) -> bool:
    if not golds:
        raise NoGold("at least one gold answer is required")
    p = normalize_answer(prediction)
    return any(p == normalize_answer(g) for g in golds)


@dataclass(frozen=True)
class EvalRecord:
    id: str | None
    prediction: str
    golds: tuple[str, ...]
    nls_best: float
    anls_score: float
    exact: bool


@dataclass(frozen=True)
class EvalReport:
    metric: str
    tau: float
    mean: float
    count: int
    per_record: tuple[EvalRecord, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_record"] = [
            {**asdict(r), "golds": list(r.golds), "score": r.anls_score if self.metric == "anls" else float(r.exact)}
            for r in self.per_record
        ]
        return d


def score_record(prediction: str, golds: Sequence[str], tau: float = DEFAULT_TAU, id=None) -> EvalRecord:
    if not golds:
        raise NoGold(f"record {id!r} has no gold answers")
    best = max(nls(prediction, g) for g in golds)
    return EvalRecord(
        id=id,
        prediction=prediction,
        golds=tuple(golds),
        nls_best=best,
        anls_score=best if best >= tau else 0.0,
        exact=exact_match(prediction, golds),
    )


def evaluate(records: Iterable, metric: str = "anls", tau: float = DEFAULT_TAU) -> EvalReport:
    """Mean ANLS or exact-match accuracy over ``{prediction, golds}`` records."""
    if metric not in ("anls", "exact"):
        raise ValueError(f"unknown metric {metric!r}")
    scored = []
    for rec in records:
        if not isinstance(rec, dict):
            rec = {"prediction": rec[0], "golds": rec[1]}
        scored.append(score_record(rec["prediction"], list(rec["golds"]), tau, rec.get("id")))
    if not scored:
        raise EmptyEval("no records to evaluate")
    values = [r.anls_score if metric == "anls" else float(r.exact) for r in scored]
    return EvalReport(metric, tau, sum(values) / len(values), len(values), tuple(scored))
