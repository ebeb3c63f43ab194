"""Language-model backend contract and the self-contained toy n-gram model.

The rest of the system only ever talks to a backend through three things:
`vocabulary`, `next_token_logprobs`, and `score_sequence` (plus the
`concurrent_safe` flag). The toy model is an add-alpha smoothed n-gram LM over
target-side tokens; it ignores the source text entirely, which is enough to
exercise the sentence-level search, and smoothing keeps every conditional
log-prob finite so sampling never stalls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import TokenSeq, Vocabulary
from .errors import EmptyCorpus, EmptySequence, VocabMismatch

TOYLM_FORMAT = "toylm-v1"


@dataclass(frozen=True)
class SourceInput:
    """Input document: source text plus the rendered control string that the
    dataset convention prepends to it."""

    text: str
    control_text: str

    @property
    def full_text(self) -> str:
        return f"{self.control_text} {self.text}".strip()


@runtime_checkable
class LMBackend(Protocol):
    """What the decoders and engine require of a language model."""

    vocabulary: Vocabulary
    concurrent_safe: bool

    def next_token_logprobs(self, source: SourceInput, prefix: TokenSeq) -> np.ndarray:
        """Normalized log-distribution over the next token."""
        ...

    def score_sequence(
        self, source: SourceInput, tokens: TokenSeq
    ) -> tuple[tuple[float, ...], float]:
        """Per-token log-likelihoods under the chain rule and their mean."""
        ...


def score_by_steps(
    model: LMBackend, source: SourceInput, tokens: TokenSeq
) -> tuple[tuple[float, ...], float]:
    """Chain-rule scoring via repeated next_token_logprobs calls.

    Default implementation for local backends and the independent oracle for
    remote ones.
    """
    if not tokens:
        raise EmptySequence("cannot score an empty token sequence")
    logliks = []
    for i, tok in enumerate(tokens):
        row = model.next_token_logprobs(source, tuple(tokens[:i]))
        logliks.append(float(row[tok]))
    return tuple(logliks), sum(logliks) / len(logliks)


class ToyLM:
    """Add-alpha smoothed n-gram model with dense per-context count rows.

    Conditioning context is the last (order-1) tokens of the prefix, shorter
    near the sequence start; unseen contexts fall back to the uniform smoothed
    row. Conditions only on target-side tokens (the source is ignored).
    """

    concurrent_safe = True

    def __init__(
        self,
        order: int,
        alpha: float,
        vocabulary: Vocabulary,
        counts: dict[tuple[int, ...], np.ndarray] | None = None,
    ):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if alpha <= 0:
            raise ValueError(f"smoothing alpha must be > 0, got {alpha}")
        self.order = order
        self.alpha = float(alpha)
        self.vocabulary = vocabulary
        self.counts: dict[tuple[int, ...], np.ndarray] = counts if counts is not None else {}
        self._rows: dict[tuple[int, ...], np.ndarray] = {}
        v = vocabulary.size
        self._uniform_row = np.full(v, -np.log(v), dtype=np.float64)

    # -- contract -----------------------------------------------------------

    def next_token_logprobs(self, source: SourceInput, prefix: TokenSeq) -> np.ndarray:
        self._check_ids(prefix)
        return self._row(self._context(prefix))

    def score_sequence(
        self, source: SourceInput, tokens: TokenSeq
    ) -> tuple[tuple[float, ...], float]:
        if not tokens:
            raise EmptySequence("cannot score an empty token sequence")
        self._check_ids(tokens)
        logliks = []
        for i, tok in enumerate(tokens):
            row = self._row(self._context(tokens[:i]))
            logliks.append(float(row[tok]))
        return tuple(logliks), sum(logliks) / len(logliks)

    # -- internals ----------------------------------------------------------

    def _check_ids(self, tokens: Sequence[int]) -> None:
        v = self.vocabulary.size
        for t in tokens:
            if not 0 <= t < v:
                raise VocabMismatch(f"token id {t} outside vocabulary of size {v}")

    def _context(self, prefix: Sequence[int]) -> tuple[int, ...]:
        if self.order == 1:
            return ()
        return tuple(prefix[-(self.order - 1):])

    def _row(self, context: tuple[int, ...]) -> np.ndarray:
        row = self._rows.get(context)
        if row is not None:
            return row
        counts = self.counts.get(context)
        if counts is None:
            return self._uniform_row
        v = self.vocabulary.size
        smoothed = counts.astype(np.float64) + self.alpha
        row = np.log(smoothed) - np.log(counts.sum() + self.alpha * v)
        row.setflags(write=False)
        self._rows[context] = row
        return row

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        packed = {}
        for ctx, row in sorted(self.counts.items()):
            nz = np.nonzero(row)[0]
            packed[",".join(map(str, ctx))] = {str(int(t)): int(row[t]) for t in nz}
        return {
            "format": TOYLM_FORMAT,
            "order": self.order,
            "alpha": self.alpha,
            "vocabulary": {
                "surfaces": list(self.vocabulary.surfaces),
                "eos_id": self.vocabulary.eos_id,
                "terminal_ids": sorted(self.vocabulary.terminal_ids),
            },
            "counts": packed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ToyLM":
        if data.get("format") != TOYLM_FORMAT:
            raise ValueError(f"unsupported model format: {data.get('format')!r}")
        voc = data["vocabulary"]
        vocab = Vocabulary(voc["surfaces"], voc["eos_id"], voc["terminal_ids"])
        counts: dict[tuple[int, ...], np.ndarray] = {}
        for key, row in data["counts"].items():
            ctx = tuple(int(x) for x in key.split(",")) if key else ()
            dense = np.zeros(vocab.size, dtype=np.int64)
            for tok, c in row.items():
                dense[int(tok)] = int(c)
            counts[ctx] = dense
        return cls(data["order"], data["alpha"], vocab, counts)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False), "utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ToyLM":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


def fit_toy_lm(
    streams: Iterable[TokenSeq],
    order: int,
    alpha: float,
    vocabulary: Vocabulary,
) -> ToyLM:
    """Count n-grams over token streams exactly as given.

    Streams are consumed verbatim: callers decide whether an eos belongs at the
    end of each stream (`corpus_streams` in the corpus module appends it).
    Every position i contributes a count under the context of up to (order-1)
    preceding tokens, so positions near a stream start populate the shorter
    context tables used for short prefixes.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    v = vocabulary.size
    counts: dict[tuple[int, ...], np.ndarray] = {}
    n_streams = 0
    for stream in streams:
        n_streams += 1
        for t in stream:
            if not 0 <= t < v:
                raise VocabMismatch(f"token id {t} outside vocabulary of size {v}")
        for i, tok in enumerate(stream):
            ctx = tuple(stream[max(0, i - (order - 1)):i]) if order > 1 else ()
            row = counts.get(ctx)
            if row is None:
                row = np.zeros(v, dtype=np.int64)
                counts[ctx] = row
            row[tok] += 1
    if n_streams == 0:
        raise EmptyCorpus("no token streams to fit on")
    return ToyLM(order, alpha, vocabulary, counts)
