"""Synthetic labeled-corpus generation and corpus file IO.

A corpus spec pairs each label with keyword lexicons and sentence templates,
plus a distribution over whole label sequences. Documents instantiate a drawn
label sequence template-by-template, so every gold sentence contains at least
one keyword of its label and the gold structure is known exactly.

Corpus files are JSONL, one document per line:
  {"id", "source", "control", "target_sentences": [...], "target_labels": [...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    ControlMode,
    ControlSequence,
    LabelSet,
    TokenSeq,
    Vocabulary,
    render_control,
)
from .errors import DataError, InvalidSpec
from .util import rng_from_seed

EOS_SURFACE = "</s>"
PERIOD = "."
KW_SLOT = "{kw}"


@dataclass(frozen=True)
class LabelProfile:
    """Generation assets of one label: weighted keywords and templates.

    Every template must contain the literal "{kw}" slot, which instantiation
    fills with one of the label's keywords.
    """

    keywords: tuple[str, ...]
    templates: tuple[str, ...]


@dataclass(frozen=True)
class SynthCorpusSpec:
    label_set: LabelSet
    profiles: Mapping[str, LabelProfile]
    structures: tuple[tuple[str, ...], ...]
    structure_probs: tuple[float, ...]
    documents: int
    seed: int

    def validate(self) -> None:
        if self.documents < 1:
            raise InvalidSpec("documents must be >= 1")
        for lab in self.label_set:
            profile = self.profiles.get(lab.name)
            if profile is None:
                raise InvalidSpec(f"label {lab.name!r} has no profile")
            if not profile.keywords:
                raise InvalidSpec(f"label {lab.name!r} has no keywords")
            if not profile.templates:
                raise InvalidSpec(f"label {lab.name!r} has no templates")
            for tpl in profile.templates:
                if KW_SLOT not in tpl:
                    raise InvalidSpec(
                        f"template {tpl!r} of label {lab.name!r} lacks the "
                        f"{KW_SLOT} slot"
                    )
        if len(self.structures) != len(self.structure_probs):
            raise InvalidSpec("structures and structure_probs must align")
        if not self.structures:
            raise InvalidSpec("at least one structure is required")
        for struct in self.structures:
            if not struct:
                raise InvalidSpec("empty label sequence in structures")
            for name in struct:
                self.label_set.get(name)  # raises UnknownLabel (a ConfigError)
        total = float(sum(self.structure_probs))
        if abs(total - 1.0) > 1e-9:
            raise InvalidSpec(f"structure distribution sums to {total}, not 1")
        if any(p < 0 for p in self.structure_probs):
            raise InvalidSpec("structure probabilities must be non-negative")


@dataclass(frozen=True)
class Document:
    id: str
    source: str
    control: str
    target_sentences: tuple[str, ...]
    target_labels: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "control": self.control,
            "target_sentences": list(self.target_sentences),
            "target_labels": list(self.target_labels),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Document":
        return cls(
            id=data["id"],
            source=data["source"],
            control=data["control"],
            target_sentences=tuple(data["target_sentences"]),
            target_labels=tuple(data["target_labels"]),
        )


def vocab_from_spec(spec: SynthCorpusSpec) -> Vocabulary:
    """Deterministic vocabulary covering every instantiable surface form.

    Reserved ids: 0 = eos, 1 = ".". Both are sentence-terminal.
    """
    words: set[str] = set()
    for lab in spec.label_set:
        profile = spec.profiles[lab.name]
        words.update(profile.keywords)
        for tpl in profile.templates:
            for kw in profile.keywords:
                words.update(tpl.replace(KW_SLOT, kw).split())
    words.discard(EOS_SURFACE)
    words.discard(PERIOD)
    surfaces = [EOS_SURFACE, PERIOD] + sorted(words)
    return Vocabulary(surfaces, eos_id=0, terminal_ids=(0, 1))


def vocab_from_docs(docs: Sequence["Document"]) -> Vocabulary:
    """Vocabulary built from a corpus file alone (for fitting without the spec).

    Same reserved ids as vocab_from_spec; covers every word of the target
    sentences, so the two construct identical vocabularies whenever the corpus
    exercises all keywords and templates.
    """
    if not docs:
        raise DataError("cannot build a vocabulary from an empty corpus")
    words: set[str] = set()
    for doc in docs:
        for sent in doc.target_sentences:
            words.update(sent.split())
    words.discard(EOS_SURFACE)
    words.discard(PERIOD)
    surfaces = [EOS_SURFACE, PERIOD] + sorted(words)
    return Vocabulary(surfaces, eos_id=0, terminal_ids=(0, 1))


def _instantiate(profile: LabelProfile, rng: np.random.Generator) -> str:
    tpl = profile.templates[int(rng.integers(len(profile.templates)))]
    kw = profile.keywords[int(rng.integers(len(profile.keywords)))]
    return tpl.replace(KW_SLOT, kw)


def synth_corpus(spec: SynthCorpusSpec) -> list[Document]:
    """Generate the labeled dataset described by the spec; deterministic in seed."""
    spec.validate()
    rng = rng_from_seed(spec.seed)
    probs = np.asarray(spec.structure_probs, dtype=np.float64)
    probs = probs / probs.sum()
    docs: list[Document] = []
    for i in range(spec.documents):
        struct = spec.structures[int(rng.choice(len(spec.structures), p=probs))]
        sentences = []
        for name in struct:
            sentences.append(_instantiate(spec.profiles[name], rng))
        # Source text: paraphrase-ish review lines over the same labels, so the
        # document looks like input reviews without leaking the exact target.
        source_parts = []
        for name in dict.fromkeys(struct):
            source_parts.append(_instantiate(spec.profiles[name], rng))
        control = parse_free_control(struct, spec.label_set)
        docs.append(
            Document(
                id=f"doc-{i:05d}",
                source=" ".join(source_parts),
                control=control,
                target_sentences=tuple(sentences),
                target_labels=tuple(struct),
            )
        )
    return docs


def parse_free_control(names: Sequence[str], label_set: LabelSet) -> str:
    """Render a label-name sequence as a canonical control string."""
    labels = tuple(label_set.get(n) for n in names)
    return render_control(ControlSequence(labels, ControlMode.SENTENCE))


def corpus_streams(docs: Iterable[Document], vocab: Vocabulary) -> list[TokenSeq]:
    """Target token streams for LM fitting: sentences joined, eos appended."""
    streams = []
    for doc in docs:
        tokens: list[int] = []
        for sent in doc.target_sentences:
            tokens.extend(vocab.tok(sent))
        tokens.append(vocab.eos_id)
        streams.append(tuple(tokens))
    return streams


def save_corpus(docs: Sequence[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(doc.to_dict(), sort_keys=True, ensure_ascii=False))
            f.write("\n")


def load_corpus(path: str | Path) -> list[Document]:
    docs = []
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    docs.append(Document.from_dict(json.loads(line)))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    return docs


# -- spec files -------------------------------------------------------------

def spec_to_dict(spec: SynthCorpusSpec) -> dict:
    return {
        "labels": list(spec.label_set.names),
        "profiles": {
            name: {
                "keywords": list(p.keywords),
                "templates": list(p.templates),
            }
            for name, p in spec.profiles.items()
        },
        "structures": [
            {"labels": list(s), "prob": p}
            for s, p in zip(spec.structures, spec.structure_probs)
        ],
        "documents": spec.documents,
        "seed": spec.seed,
    }


def spec_from_dict(data: dict) -> SynthCorpusSpec:
    try:
        label_set = LabelSet(data["labels"])
        profiles = {
            name: LabelProfile(tuple(p["keywords"]), tuple(p["templates"]))
            for name, p in data["profiles"].items()
        }
        structures = tuple(tuple(s["labels"]) for s in data["structures"])
        probs = tuple(float(s["prob"]) for s in data["structures"])
        spec = SynthCorpusSpec(
            label_set=label_set,
            profiles=profiles,
            structures=structures,
            structure_probs=probs,
            documents=int(data["documents"]),
            seed=int(data["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"malformed corpus spec: {exc}") from exc
    spec.validate()
    return spec


def load_spec(path: str | Path) -> SynthCorpusSpec:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidSpec(f"cannot read corpus spec {path}: {exc}") from exc
    return spec_from_dict(data)


def save_spec(spec: SynthCorpusSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(spec_to_dict(spec), indent=2, sort_keys=True, ensure_ascii=False)
        + "\n",
        "utf-8",
    )


def gold_lexicons(spec: SynthCorpusSpec) -> dict[str, dict[str, float]]:
    """The generative keyword lexicons, weight 1.0 each — the gold tagger."""
    return {
        lab.name: {kw: 1.0 for kw in spec.profiles[lab.name].keywords}
        for lab in spec.label_set
    }


def learned_lexicons(
    docs: Sequence[Document],
    label_set: LabelSet,
    min_count: int = 2,
    dominance: float = 0.8,
) -> dict[str, dict[str, float]]:
    """Per-label keyword lexicons learned from word/label co-occurrence.

    A word joins a label's lexicon when it appears at least min_count times
    and at least `dominance` of its occurrences are in that label's sentences.
    """
    word_label: dict[str, dict[str, int]] = {}
    for doc in docs:
        for sent, name in zip(doc.target_sentences, doc.target_labels):
            for word in set(sent.lower().split()):
                if word in (PERIOD, EOS_SURFACE):
                    continue
                word_label.setdefault(word, {}).setdefault(name, 0)
                word_label[word][name] += 1
    lexicons: dict[str, dict[str, float]] = {lab.name: {} for lab in label_set}
    for word, per_label in sorted(word_label.items()):
        total = sum(per_label.values())
        if total < min_count:
            continue
        best = max(sorted(per_label), key=lambda n: per_label[n])
        if per_label[best] / total >= dominance:
            lexicons[best][word] = 1.0
    return lexicons
