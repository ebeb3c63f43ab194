"""The reference synthetic testbed: fixed spec, seeds, and model settings.

Nine review-summary labels, each with six exclusive keywords and three
templates sharing a label-specific first word. Documents follow one of seven
label-sequence structures. The structure distribution is chosen so that a
pure-likelihood decoder tends toward the modal transition at each sentence
boundary (and so mislabels documents drawn from the minority structures),
while every gold transition stays inside the default top-p nucleus and
remains reachable for classifier-guided search.

Everything here is constant: the same spec, seeds, and smoothing reproduce
the same corpora and models everywhere.
"""

from __future__ import annotations

from .corpus import LabelProfile, SynthCorpusSpec, corpus_streams, vocab_from_spec
from .core import LabelSet, Vocabulary
from .lm import ToyLM, fit_toy_lm

EVAL_SEED = 1121
TRAIN_SEED = 7302
EVAL_DOCUMENTS = 200
TRAIN_DOCUMENTS = 2000
TOY_ORDER = 3
TOY_ALPHA = 0.01

LABELS = (
    "abstract",
    "strength",
    "weakness",
    "rating_summary",
    "ac_disagreement",
    "rebuttal_process",
    "suggestion",
    "decision",
    "misc",
)

# keywords are unique to their label and never appear in any template
_PROFILES = {
    "abstract": LabelProfile(
        keywords=("scalability", "robustness", "generalization", "pretraining",
                  "distillation", "calibration"),
        templates=("overall the submission studies {kw} .",
                   "overall this paper proposes {kw} methods .",
                   "overall the work explores {kw} in depth ."),
    ),
    "strength": LabelProfile(
        keywords=("clarity", "novelty", "rigor", "soundness",
                  "reproducibility", "thoroughness"),
        templates=("notably the reviewers praised its {kw} .",
                   "notably the paper shows strong {kw} .",
                   "notably its {kw} impressed everyone ."),
    ),
    "weakness": LabelProfile(
        keywords=("overfitting", "ambiguity", "inconsistency", "sparsity",
                  "instability", "redundancy"),
        templates=("however the method suffers from {kw} .",
                   "however reviewers noted some {kw} .",
                   "however {kw} remains a concern ."),
    ),
    "rating_summary": LabelProfile(
        keywords=("borderline", "split", "mixed", "divergent",
                  "upgraded", "downgraded"),
        templates=("scores were mostly {kw} this round .",
                   "scores remained {kw} after rebuttal .",
                   "scores look {kw} to the chair ."),
    ),
    "ac_disagreement": LabelProfile(
        keywords=("disputes", "overrides", "disagrees", "contests",
                  "diverges", "challenges"),
        templates=("chair opinion {kw} with reviewers here .",
                   "chair view {kw} from the panel .",
                   "chair stance {kw} sharply today ."),
    ),
    "rebuttal_process": LabelProfile(
        keywords=("responses", "revisions", "replies", "exchanges",
                  "discussions", "rebuttals"),
        templates=("during the period authors posted {kw} .",
                   "during the debate phase {kw} appeared .",
                   "during the cycle {kw} continued ."),
    ),
    "suggestion": LabelProfile(
        keywords=("ablations", "baselines", "visualizations", "benchmarks",
                  "citations", "clarifications"),
        templates=("ideally the authors should add {kw} .",
                   "ideally more {kw} would help .",
                   "ideally future drafts include {kw} ."),
    ),
    "decision": LabelProfile(
        keywords=("acceptance", "rejection", "approval", "dismissal",
                  "endorsement", "refusal"),
        templates=("therefore the committee recommends {kw} .",
                   "therefore we conclude with {kw} .",
                   "therefore the final call is {kw} ."),
    ),
    "misc": LabelProfile(
        keywords=("gratitude", "apologies", "greetings", "regards",
                  "congratulations", "farewell"),
        templates=("thanks and {kw} to all reviewers .",
                   "thanks for the {kw} everyone .",
                   "thanks again {kw} were expressed ."),
    ),
}

# (structure, probability); minority structures are what the baseline misses
_STRUCTURES = (
    (("abstract", "strength", "weakness", "decision"), 0.30),
    (("abstract", "weakness", "strength", "decision"), 0.18),
    (("abstract", "strength", "decision"), 0.15),
    (("abstract", "weakness", "suggestion", "decision"), 0.13),
    (("abstract", "rebuttal_process", "rating_summary", "decision"), 0.12),
    (("abstract", "weakness", "weakness", "suggestion", "decision"), 0.10),
    (("misc", "rating_summary", "ac_disagreement", "decision"), 0.02),
)


def reference_label_set() -> LabelSet:
    return LabelSet(LABELS)


def reference_spec(documents: int = EVAL_DOCUMENTS, seed: int = EVAL_SEED) -> SynthCorpusSpec:
    """The evaluation-corpus spec; override documents/seed for other corpora."""
    spec = SynthCorpusSpec(
        label_set=reference_label_set(),
        profiles=dict(_PROFILES),
        structures=tuple(s for s, _ in _STRUCTURES),
        structure_probs=tuple(p for _, p in _STRUCTURES),
        documents=documents,
        seed=seed,
    )
    spec.validate()
    return spec


def train_spec() -> SynthCorpusSpec:
    """The larger corpus the toy model is fitted on (same labels, held-out seed)."""
    return reference_spec(documents=TRAIN_DOCUMENTS, seed=TRAIN_SEED)


def build_toy_model(train_docs, vocabulary: Vocabulary | None = None) -> ToyLM:
    """Fit the reference trigram model (alpha kept small so the learned
    transition structure is not washed out by smoothing)."""
    vocab = vocabulary if vocabulary is not None else vocab_from_spec(reference_spec())
    return fit_toy_lm(
        corpus_streams(train_docs, vocab), order=TOY_ORDER, alpha=TOY_ALPHA, vocabulary=vocab
    )
