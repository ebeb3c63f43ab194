"""Structure-agreement metrics and ROUGE F1 scores.

Label sequences are compared with unit-cost Levenshtein distance; structure
similarity normalizes by the longer length and subtracts from 1. ROUGE uses
lowercased whitespace tokenization without stemming, so values are exactly
reproducible by hand.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .classify import Classifier
from .core import Label
from .errors import BothEmpty, EmptyList, EmptySummary


def edit_distance(c: Sequence[Hashable], r: Sequence[Hashable]) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if len(c) < len(r):
        c, r = r, c
    prev = list(range(len(r) + 1))
    for i, ci in enumerate(c, start=1):
        cur = [i]
        for j, rj in enumerate(r, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ci != rj)))
        prev = cur
    return prev[-1]


def structure_similarity(c: Sequence[Hashable], r: Sequence[Hashable]) -> float:
    """1 - edit_distance / max(len); 1.0 iff the sequences are identical."""
    longest = max(len(c), len(r))
    if longest == 0:
        raise BothEmpty("structure similarity needs at least one non-empty sequence")
    return 1.0 - edit_distance(c, r) / longest


def total_edits(pairs: Sequence[tuple[Sequence, Sequence]]) -> int:
    """Sum of label-sequence edit distances over an evaluation set."""
    if not pairs:
        raise EmptyList("total_edits needs at least one pair")
    return sum(edit_distance(c, r) for c, r in pairs)


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: str, reference: str, n: int) -> float:
    """N-gram overlap F1 with clipped counts; 0.0 when either side is too short."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = _ngrams(_tokens(candidate), n)
    ref = _ngrams(_tokens(reference), n)
    if not cand or not ref:
        return 0.0
    overlap = sum((cand & ref).values())
    return _f1(overlap / sum(cand.values()), overlap / sum(ref.values()))


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for ai in a:
        cur = [0]
        for j, bj in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if ai == bj else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """Longest-common-subsequence F1 over lowercased whitespace tokens."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_len(cand, ref)
    return _f1(lcs / len(cand), lcs / len(ref))


def predicted_structure(summary_sentences: Sequence[str], clf: Classifier) -> list[Label]:
    """Per-sentence argmax label; ties go to the lower label id."""
    if not summary_sentences:
        raise EmptySummary("cannot predict structure of an empty summary")
    labels = []
    for text in summary_sentences:
        dist = clf.classify(text)
        labels.append(clf.label_set[int(np.argmax(dist))])
    return labels


@dataclass(frozen=True)
class DocReport:
    """Per-document, per-run evaluation row."""

    id: str
    run: int
    structure_similarity: float
    edit_distance: int
    rouge1: float
    rouge2: float
    rougel: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "run": self.run,
            "structure_similarity": self.structure_similarity,
            "edit_distance": self.edit_distance,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougel": self.rougel,
        }


@dataclass(frozen=True)
class EvalReport:
    """Corpus aggregates over DocReport rows.

    total_edits averages the per-run edit totals (a single run gives the plain
    sum); the means are over all rows, which equals the mean of per-run means
    because every run covers the same documents.
    """

    docs: tuple[DocReport, ...]
    runs: int
    mean_structure_similarity: float
    total_edits: float
    mean_rouge1: float
    mean_rouge2: float
    mean_rougel: float

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "mean_structure_similarity": self.mean_structure_similarity,
            "total_edits": self.total_edits,
            "mean_rouge1": self.mean_rouge1,
            "mean_rouge2": self.mean_rouge2,
            "mean_rougel": self.mean_rougel,
            "documents": [d.to_dict() for d in self.docs],
        }

    def csv_rows(self) -> list[str]:
        header = "id,run,structure_similarity,edit_distance,rouge1,rouge2,rougel"
        rows = [header]
        for d in self.docs:
            rows.append(
                f"{d.id},{d.run},{d.structure_similarity!r},{d.edit_distance},"
                f"{d.rouge1!r},{d.rouge2!r},{d.rougel!r}"
            )
        return rows


def aggregate_report(docs: Sequence[DocReport]) -> EvalReport:
    """Fold per-document rows into the corpus report, averaging across runs."""
    if not docs:
        raise EmptyList("cannot aggregate an empty report")
    run_ids = sorted({d.run for d in docs})
    per_run_totals = [
        sum(d.edit_distance for d in docs if d.run == run) for run in run_ids
    ]
    return EvalReport(
        docs=tuple(docs),
        runs=len(run_ids),
        mean_structure_similarity=sum(d.structure_similarity for d in docs) / len(docs),
        total_edits=sum(per_run_totals) / len(run_ids),
        mean_rouge1=sum(d.rouge1 for d in docs) / len(docs),
        mean_rouge2=sum(d.rouge2 for d in docs) / len(docs),
        mean_rougel=sum(d.rougel for d in docs) / len(docs),
    )
