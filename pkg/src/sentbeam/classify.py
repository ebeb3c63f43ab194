"""Sentence-category classification.

The contract is a single method: text in, normalized label log-probabilities
out. The reference implementation is a deterministic keyword classifier:
per-label score = smoothing + sum of weights of lexicon keywords present in
the sentence (case-insensitive, word-delimited match), then softmax. It serves
both as the in-loop scorer and, built from the corpus spec's generative
lexicons, as the gold structure tagger at evaluation time.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Mapping, Protocol, runtime_checkable

import numpy as np

from .core import Label, LabelSet, Vocabulary
from .errors import DataError, EmptySentence, UnknownLabel
from .util import log_normalize

_WORD_RE = re.compile(r"[\w']+")


@runtime_checkable
class Classifier(Protocol):
    label_set: LabelSet

    def classify(self, sentence_text: str) -> np.ndarray:
        """Normalized log-probabilities, one per label in label-set order."""
        ...


def sentence_words(text: str) -> frozenset[str]:
    """Lowercased word set, delimited by whitespace/punctuation."""
    return frozenset(_WORD_RE.findall(text.lower()))


class KeywordClassifier:
    """Weighted keyword-lexicon classifier over a fixed label set."""

    def __init__(
        self,
        label_set: LabelSet,
        lexicons: Mapping[str, Mapping[str, float]],
        smoothing: float = 0.1,
    ):
        if smoothing <= 0:
            raise ValueError(f"smoothing must be > 0, got {smoothing}")
        self.label_set = label_set
        self.smoothing = float(smoothing)
        self.lexicons: dict[str, dict[str, float]] = {
            lab.name: {} for lab in label_set
        }
        for name, lex in lexicons.items():
            lab = label_set.get(name)  # raises UnknownLabel for strays
            self.lexicons[lab.name] = {k.lower(): float(v) for k, v in lex.items()}

    def scores(self, sentence_text: str) -> np.ndarray:
        """Raw pre-softmax scores (smoothing + summed weights of present keywords)."""
        if not sentence_text.strip():
            raise EmptySentence("cannot classify an empty sentence")
        words = sentence_words(sentence_text)
        out = np.full(len(self.label_set), self.smoothing, dtype=np.float64)
        for lab in self.label_set:
            lex = self.lexicons[lab.name]
            if lex:
                out[lab.id] += sum(w for kw, w in lex.items() if kw in words)
        return out

    def classify(self, sentence_text: str) -> np.ndarray:
        logprobs = log_normalize(self.scores(sentence_text))
        # softmax output is <= 0 by construction; clamp fp dust so the
        # class_logprob <= 0 invariant holds exactly
        return np.minimum(logprobs, 0.0)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "labels": list(self.label_set.names),
            "smoothing": self.smoothing,
            "lexicons": {
                name: dict(sorted(lex.items()))
                for name, lex in sorted(self.lexicons.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KeywordClassifier":
        return cls(
            LabelSet(data["labels"]),
            data["lexicons"],
            smoothing=data.get("smoothing", 0.1),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)
            + "\n",
            "utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "KeywordClassifier":
        try:
            return cls.from_dict(json.loads(Path(path).read_text("utf-8")))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"cannot read lexicon file {path}: {exc}") from exc


def classify(clf: Classifier, sentence_text: str) -> np.ndarray:
    """Normalized label log-distribution for one sentence."""
    return clf.classify(sentence_text)


def label_score(clf: Classifier, sentence_text: str, label: Label) -> float:
    """The classifier addend of the combined score: log P(label | sentence)."""
    if label not in clf.label_set:
        raise UnknownLabel(label.name)
    return float(clf.classify(sentence_text)[label.id])


def detok(tokens, vocab: Vocabulary, strip_eos: bool = False) -> str:
    """Space-joined surfaces of a token sequence or sentence option.

    strip_eos drops eos tokens, which is how generated sentences are rendered
    before classification and in output records.
    """
    ids: Iterable[int] = getattr(tokens, "tokens", tokens)
    if strip_eos:
        ids = [t for t in ids if t != vocab.eos_id]
    return vocab.detok(ids)
