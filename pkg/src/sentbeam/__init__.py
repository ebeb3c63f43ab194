"""Sentence-level guided search for structure-controlled text generation.

Generation proceeds one sentence at a time: each step proposes k candidate
sentences per live prompt through a mix of beam search, beam sampling, and
nucleus sampling, re-scores every extended sequence by its length-normalized
log-likelihood plus a sentence-classifier term for the required category, and
keeps the best n prompts. The result is output whose sentence-category
structure tracks a requested control sequence far more closely than plain
beam search, at equal fluency.
"""

from .classify import Classifier, KeywordClassifier, classify, detok, label_score
from .core import (
    Accumulation,
    ControlMode,
    ControlSequence,
    GenParams,
    Hypothesis,
    Label,
    LabelSet,
    MixStrategy,
    SentenceSpan,
    Vocabulary,
    compress_labels,
    parse_control,
    render_control,
)
from .corpus import (
    Document,
    LabelProfile,
    SynthCorpusSpec,
    gold_lexicons,
    learned_lexicons,
    load_corpus,
    load_spec,
    save_corpus,
    save_spec,
    synth_corpus,
    vocab_from_docs,
    vocab_from_spec,
)
from .decoders import (
    MixAllocation,
    SentenceLimits,
    SentenceOption,
    beam_sample_sentence,
    beam_sentence,
    nucleus_sentence,
    plan_mix,
)
from .engine import (
    GenerationResult,
    baseline_generate,
    combined_score,
    expand_prompt,
    generate,
)
from .errors import SentBeamError
from .lm import LMBackend, SourceInput, ToyLM, fit_toy_lm, score_by_steps
from .metrics import (
    DocReport,
    EvalReport,
    aggregate_report,
    edit_distance,
    predicted_structure,
    rouge_l,
    rouge_n,
    structure_similarity,
    total_edits,
)
from .protocol import (
    BackendClient,
    RemoteClassifier,
    RemoteLM,
    connect_tcp,
    serve_stdio,
    spawn_stdio,
)

__version__ = "0.1.0"

__all__ = [
    "Accumulation",
    "BackendClient",
    "Classifier",
    "ControlMode",
    "ControlSequence",
    "DocReport",
    "Document",
    "EvalReport",
    "GenParams",
    "GenerationResult",
    "Hypothesis",
    "KeywordClassifier",
    "Label",
    "LabelProfile",
    "LabelSet",
    "LMBackend",
    "MixAllocation",
    "MixStrategy",
    "RemoteClassifier",
    "RemoteLM",
    "SentBeamError",
    "SentenceLimits",
    "SentenceOption",
    "SentenceSpan",
    "SourceInput",
    "SynthCorpusSpec",
    "ToyLM",
    "Vocabulary",
    "aggregate_report",
    "baseline_generate",
    "beam_sample_sentence",
    "beam_sentence",
    "classify",
    "combined_score",
    "compress_labels",
    "connect_tcp",
    "detok",
    "edit_distance",
    "expand_prompt",
    "fit_toy_lm",
    "generate",
    "gold_lexicons",
    "label_score",
    "learned_lexicons",
    "load_corpus",
    "load_spec",
    "nucleus_sentence",
    "parse_control",
    "plan_mix",
    "predicted_structure",
    "render_control",
    "rouge_l",
    "rouge_n",
    "save_corpus",
    "save_spec",
    "score_by_steps",
    "serve_stdio",
    "spawn_stdio",
    "structure_similarity",
    "synth_corpus",
    "total_edits",
    "vocab_from_docs",
    "vocab_from_spec",
]
