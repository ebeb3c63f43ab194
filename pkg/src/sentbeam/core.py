"""Domain types shared by every module: labels, control sequences, the token
vocabulary, generation parameters, and growing hypotheses.

All types here are immutable after construction and safe to share across
concurrent workers.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptyControl, UnknownLabel

TokenSeq = tuple[int, ...]

# Recomputing a mean from the stored per-token values must agree to this.
NORM_LOGLIK_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class Label:
    """One output category; `id` is its position within the LabelSet."""

    id: int
    name: str

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"label id must be >= 0, got {self.id}")
        if not self.name.strip():
            raise ValueError("label name must be non-empty")


class LabelSet:
    """Ordered, duplicate-free collection of labels with case-insensitive lookup."""

    def __init__(self, names: Iterable[str]):
        cleaned = [n.strip() for n in names]
        if not cleaned:
            raise ValueError("label set must be non-empty")
        lowered = [n.lower() for n in cleaned]
        if len(set(lowered)) != len(lowered):
            raise ValueError(f"duplicate label names: {cleaned}")
        self.labels: tuple[Label, ...] = tuple(
            Label(i, n) for i, n in enumerate(cleaned)
        )
        self._by_name = {lab.name.lower(): lab for lab in self.labels}

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, idx: int) -> Label:
        return self.labels[idx]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelSet) and self.names == other.names

    def __repr__(self) -> str:
        return f"LabelSet({list(self.names)!r})"

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    def get(self, name: str) -> Label:
        """Case-insensitive, whitespace-trimmed lookup; raises UnknownLabel."""
        lab = self._by_name.get(name.strip().lower())
        if lab is None:
            raise UnknownLabel(name.strip())
        return lab

    def __contains__(self, label: Label) -> bool:
        got = self._by_name.get(label.name.lower())
        return got is not None and got.id == label.id


class ControlMode(enum.Enum):
    """How control labels map onto output sentences."""

    SENTENCE = "sentence"  # one label per output sentence
    SEGMENT = "segment"    # one label per run of same-category sentences


@dataclass(frozen=True)
class ControlSequence:
    labels: tuple[Label, ...]
    mode: ControlMode = ControlMode.SENTENCE

    def __post_init__(self) -> None:
        if not self.labels:
            raise EmptyControl("control sequence must be non-empty")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, idx: int) -> Label:
        return self.labels[idx]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)


def parse_control(text: str, label_set: LabelSet, mode: ControlMode) -> ControlSequence:
    """Parse a pipe-separated control string, e.g. "abstract | strength | decision".

    Matching is case-insensitive with surrounding whitespace trimmed. Order is
    preserved. Raises UnknownLabel for an unmatched name, EmptyControl when
    nothing parses. Adjacent duplicate labels are legal but ambiguous under
    segment control, so they draw a warning there.
    """
    pieces = [p.strip() for p in text.split("|")]
    pieces = [p for p in pieces if p]
    if not pieces:
        raise EmptyControl(f"no labels in control string {text!r}")
    labels = tuple(label_set.get(p) for p in pieces)
    if mode is ControlMode.SEGMENT:
        for a, b in zip(labels, labels[1:]):
            if a == b:
                warnings.warn(
                    f"adjacent duplicate label {a.name!r} in segment control: "
                    "the label-advance decision becomes ambiguous",
                    stacklevel=2,
                )
                break
    return ControlSequence(labels, mode)


def render_control(cs: ControlSequence) -> str:
    """Inverse of parse_control: pipe-separated label names."""
    return " | ".join(cs.names)


def compress_labels(names: Sequence[str]) -> tuple[str, ...]:
    """Run-length compression of a label-name sequence (segments)."""
    out: list[str] = []
    for n in names:
        if not out or out[-1] != n:
            out.append(n)
    return tuple(out)


class Vocabulary:
    """Token table with reserved eos and per-token sentence-terminal flags.

    eos must itself be sentence-terminal. A vocabulary intended for multi-step
    generation should also carry a non-eos terminal token (see
    `has_non_eos_terminal`); without one, non-final sentences can only end at
    the forced token cap.
    """

    def __init__(self, surfaces: Sequence[str], eos_id: int, terminal_ids: Iterable[int]):
        self.surfaces: tuple[str, ...] = tuple(surfaces)
        if len(set(self.surfaces)) != len(self.surfaces):
            raise ValueError("duplicate surfaces in vocabulary")
        if not 0 <= eos_id < len(self.surfaces):
            raise ValueError(f"eos_id {eos_id} out of range")
        self.eos_id = eos_id
        self.terminal_ids = frozenset(int(t) for t in terminal_ids)
        for t in self.terminal_ids:
            if not 0 <= t < len(self.surfaces):
                raise ValueError(f"terminal id {t} out of range")
        if eos_id not in self.terminal_ids:
            raise ValueError("eos must be sentence-terminal")
        self._ids = {s: i for i, s in enumerate(self.surfaces)}

    def __len__(self) -> int:
        return len(self.surfaces)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.surfaces == other.surfaces
            and self.eos_id == other.eos_id
            and self.terminal_ids == other.terminal_ids
        )

    @property
    def size(self) -> int:
        return len(self.surfaces)

    @property
    def has_non_eos_terminal(self) -> bool:
        return any(t != self.eos_id for t in self.terminal_ids)

    def is_terminal(self, token_id: int) -> bool:
        return token_id in self.terminal_ids

    def id_of(self, surface: str) -> int:
        try:
            return self._ids[surface]
        except KeyError:
            from .errors import VocabMismatch

            raise VocabMismatch(f"surface {surface!r} not in vocabulary") from None

    def tok(self, text: str) -> TokenSeq:
        """Whitespace tokenization into ids; raises VocabMismatch on unknowns."""
        return tuple(self.id_of(w) for w in text.split())

    def detok(self, tokens: Iterable[int]) -> str:
        """Space-joined surfaces; raises VocabMismatch on out-of-range ids."""
        out = []
        for t in tokens:
            if not 0 <= t < len(self.surfaces):
                from .errors import VocabMismatch

                raise VocabMismatch(f"token id {t} out of range")
            out.append(self.surfaces[t])
        return " ".join(out)


class MixStrategy(enum.Enum):
    """Which sub-decoders supply the k sentence options at each step."""

    BEAM_ONLY = "beam"
    NUCLEUS_ONLY = "nucleus"
    BEAM_SAMPLING_ONLY = "beam_sampling"
    BEAM_PLUS_NUCLEUS = "beam+nucleus"
    BEAM_PLUS_BEAM_SAMPLING_PLUS_NUCLEUS = "beam+beam_sampling+nucleus"


class Accumulation(enum.Enum):
    """How classifier terms across sentences enter the combined score."""

    LATEST_SENTENCE = "latest"
    SUM_OVER_SENTENCES = "sum"


@dataclass(frozen=True)
class GenParams:
    """Knobs of the sentence-level search.

    k: sentence options generated per prompt per step.
    n: surviving prompts kept per step.
    beam_width: internal width of the beam-search sub-decoder.
    max_sentences: cap on emitted sentences; None picks the mode default
      (|control| for sentence control, 2x|control| for segment control).
    """

    k: int = 8
    n: int = 4
    top_p: float = 0.9
    mix: MixStrategy = MixStrategy.BEAM_PLUS_NUCLEUS
    seed: int = 0
    max_sentence_tokens: int = 64
    max_sentences: int | None = None
    accumulation: Accumulation = Accumulation.SUM_OVER_SENTENCES
    beam_width: int = 4
    use_raw_prob: bool = False  # classifier addend as raw probability instead of log

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_sentence_tokens < 1:
            raise ValueError("max_sentence_tokens must be >= 1")
        if self.max_sentences is not None and self.max_sentences < 1:
            raise ValueError("max_sentences must be >= 1")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")


@dataclass(frozen=True, slots=True)
class SentenceSpan:
    """Token span [start, end) of one sentence inside a hypothesis."""

    start: int
    end: int
    label: Label
    class_logprob: float
    forced_boundary: bool = False

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError(f"empty span [{self.start}, {self.end})")
        if self.class_logprob > 0.0:
            raise ValueError(f"class_logprob must be <= 0, got {self.class_logprob}")


@dataclass(frozen=True)
class Hypothesis:
    """A candidate generation: tokens, sentence spans, and cached scores.

    norm_loglik is the arithmetic mean of per_token_loglik; combined_score is
    cached but always recomputable from the parts (recomputation is the source
    of truth in tests).
    """

    tokens: TokenSeq = ()
    sentences: tuple[SentenceSpan, ...] = ()
    per_token_loglik: tuple[float, ...] = ()
    norm_loglik: float = 0.0
    combined_score: float = 0.0
    finished: bool = False

    def __post_init__(self) -> None:
        if len(self.per_token_loglik) != len(self.tokens):
            raise ValueError("per_token_loglik must align with tokens")
        mean = (
            sum(self.per_token_loglik) / len(self.per_token_loglik)
            if self.per_token_loglik
            else 0.0
        )
        if abs(mean - self.norm_loglik) > NORM_LOGLIK_TOL:
            raise ValueError(
                f"norm_loglik {self.norm_loglik!r} != token mean {mean!r}"
            )
        pos = 0
        for span in self.sentences:
            if span.start != pos:
                raise ValueError("sentence spans must tile the token range")
            pos = span.end
        if pos != len(self.tokens):
            raise ValueError("sentence spans must cover all tokens")

    @property
    def label_names(self) -> tuple[str, ...]:
        return tuple(span.label.name for span in self.sentences)

    def sentence_tokens(self, idx: int) -> TokenSeq:
        span = self.sentences[idx]
        return self.tokens[span.start : span.end]

    def sentence_class_logprobs(self) -> tuple[float, ...]:
        return tuple(span.class_logprob for span in self.sentences)


EMPTY_HYPOTHESIS = Hypothesis()
