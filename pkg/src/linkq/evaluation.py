"""Metrics: entity-linking set scores and QA answer scores.

Entity linking is scored per query as set precision/recall plus an
exact-match accuracy indicator, then macro-averaged. QA uses the standard
reading-comprehension trio: Hit@1 for the retrieved document, exact match
and token F1 for the answer string, all computed over normalized text.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import EntityRef, canonical_set, entity_eq
from .errors import EmptyEvaluation


@dataclass(frozen=True)
class ElScores:
    precision: float
    recall: float
    accuracy: int


@dataclass(frozen=True)
class QaScores:
    hit_at_1: int
    em: int
    f1: float


@dataclass(frozen=True)
class ElSummary:
    """Macro averages as percentages rounded to two decimals."""

    precision: float
    recall: float
    accuracy: float
    query_count: int


@dataclass(frozen=True)
class QaSummary:
    hit_at_1: float
    em: float
    f1: float
    query_count: int


def el_metrics(
    predicted: Iterable[EntityRef], gold: Iterable[EntityRef]
) -> ElScores:
    """Set precision, recall and exact-match accuracy for one query.

    Conventions at the empty edges: an empty prediction against non-empty
    gold scores zero everywhere, spurious predictions against empty gold
    score zero, and two empty sets count as a perfect abstention.
    """
    p = canonical_set(predicted)
    g = canonical_set(gold)
    if not p and not g:
        return ElScores(precision=1.0, recall=1.0, accuracy=1)
    overlap = len(p & g)
    precision = overlap / len(p) if p else 0.0
    recall = overlap / len(g) if g else 0.0
    return ElScores(precision=precision, recall=recall, accuracy=int(p == g))


def aggregate_el(per_query: Sequence[ElScores]) -> ElSummary:
    """Macro-average per-query scores into percentage form."""
    if not per_query:
        raise EmptyEvaluation("no per-query scores to aggregate")
    n = len(per_query)
    return ElSummary(
        precision=round(100.0 * sum(s.precision for s in per_query) / n, 2),
        recall=round(100.0 * sum(s.recall for s in per_query) / n, 2),
        accuracy=round(100.0 * sum(s.accuracy for s in per_query) / n, 2),
        query_count=n,
    )


def aggregate_qa(per_query: Sequence[QaScores]) -> QaSummary:
    if not per_query:
        raise EmptyEvaluation("no per-query scores to aggregate")
    n = len(per_query)
    return QaSummary(
        hit_at_1=round(100.0 * sum(s.hit_at_1 for s in per_query) / n, 2),
        em=round(100.0 * sum(s.em for s in per_query) / n, 2),
        f1=round(100.0 * sum(s.f1 for s in per_query) / n, 2),
        query_count=n,
    )


_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop English articles, collapse spaces."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold answer."""
    if not golds:
        raise ValueError("golds must be non-empty")
    normalized = normalize_answer(prediction)
    return int(any(normalized == normalize_answer(gold) for gold in golds))


def _f1_single(prediction_tokens: list[str], gold_tokens: list[str]) -> float:
    if not prediction_tokens and not gold_tokens:
        return 1.0
    overlap = sum((Counter(prediction_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(prediction_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Sequence[str]) -> float:
    """Best multiset token F1 of the prediction over the gold answers."""
    if not golds:
        raise ValueError("golds must be non-empty")
    prediction_tokens = normalize_answer(prediction).split()
    return max(
        _f1_single(prediction_tokens, normalize_answer(gold).split())
        for gold in golds
    )


def hit_at_1(predicted_doc: Optional[EntityRef], gold_doc: EntityRef) -> int:
    """1 iff the single retrieved document is the gold document."""
    if predicted_doc is None:
        return 0
    return int(entity_eq(predicted_doc, gold_doc))


def qa_scores(
    extracted_answer: str,
    gold_answers: Sequence[str],
    predicted_doc: Optional[EntityRef],
    gold_doc: Optional[EntityRef],
) -> QaScores:
    """Bundle the three QA metrics for one query.

    Hit@1 scores 0 when the dataset carries no gold document.
    """
    hit = hit_at_1(predicted_doc, gold_doc) if gold_doc is not None else 0
    return QaScores(
        hit_at_1=hit,
        em=exact_match(extracted_answer, gold_answers),
        f1=token_f1(extracted_answer, gold_answers),
    )
