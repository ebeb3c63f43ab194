"""Sentence-level beam search with classifier guidance, plus the plain baseline.

Each step expands every live prompt into k sentence options via the configured
decoder mix, re-scores the full sequence under the raw model, adds the
classifier term for the required (or inferred) label, and keeps the top n
candidates. Sentence control emits exactly one sentence per control label with
eos masked until the final step. Segment control lets labels repeat: each new
sentence is assigned the current or the next control label by classifier
argmax, and generation stops at an eos-bearing option once the last label has
been reached.

All randomness flows through per-invocation seeds derived from
(params.seed, step, prompt_idx, retry, invocation), so outputs are identical
regardless of evaluation order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .classify import Classifier, detok, label_score
from .core import (
    Accumulation,
    ControlMode,
    ControlSequence,
    EMPTY_HYPOTHESIS,
    GenParams,
    Hypothesis,
    Label,
    SentenceSpan,
)
from .decoders import (
    SentenceLimits,
    SentenceOption,
    beam_sentence,
    beam_sample_sentence,
    nucleus_sentence,
    plan_mix,
)
from .errors import ConfigError, EmptySentenceList, NoValidOptions
from .lm import LMBackend, SourceInput
from .util import derive_seed

MAX_RETRIES = 3


@dataclass(frozen=True)
class PromptState:
    """One live prompt: its hypothesis and, for segment control, the index of
    the control label its latest sentence belongs to."""

    hypothesis: Hypothesis
    seg_pointer: int = 0


@dataclass(frozen=True)
class Candidate:
    """A scored (prompt, option) expansion considered at one step."""

    prompt_idx: int
    option_idx: int
    option: SentenceOption
    hypothesis: Hypothesis
    seg_pointer: int
    finishes: bool
    label: Label | None
    class_logprob: float | None

    @property
    def sort_key(self):
        # Higher combined score first; ties by prompt, option, then token ids.
        return (
            -self.hypothesis.combined_score,
            self.prompt_idx,
            self.option_idx,
            self.hypothesis.tokens,
        )


@dataclass(frozen=True)
class StepTrace:
    """Everything the selector saw at one step, for inspection and tests."""

    step: int
    candidates: tuple[Candidate, ...]
    survivors: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "candidates": [
                {
                    "prompt": c.prompt_idx,
                    "option": c.option_idx,
                    "tokens": list(c.option.tokens),
                    "method": c.option.method.value,
                    "label": c.label.name if c.label else None,
                    "class_logprob": c.class_logprob,
                    "norm_loglik": c.hypothesis.norm_loglik,
                    "combined": c.hypothesis.combined_score,
                    "ends_with_eos": c.option.ends_with_eos,
                    "forced_boundary": c.option.forced_boundary,
                    "finishes": c.finishes,
                }
                for c in self.candidates
            ],
            "survivors": list(self.survivors),
        }


@dataclass(frozen=True)
class GenerationResult:
    hypothesis: Hypothesis
    traces: tuple[StepTrace, ...]


def combined_score(
    norm_loglik: float,
    sentence_class_logprobs,
    accumulation: Accumulation,
    use_raw_prob: bool = False,
) -> float:
    """Normalized sequence log-likelihood plus the classifier term(s).

    LATEST_SENTENCE adds only the newest sentence's label log-prob;
    SUM_OVER_SENTENCES adds all of them. use_raw_prob swaps each log-prob
    addend for its raw probability.
    """
    terms = list(sentence_class_logprobs)
    if not terms:
        raise EmptySentenceList("combined_score needs at least one sentence term")
    if use_raw_prob:
        terms = [math.exp(t) for t in terms]
    if accumulation is Accumulation.LATEST_SENTENCE:
        return norm_loglik + terms[-1]
    return norm_loglik + sum(terms)


def _rescored(
    model: LMBackend,
    source: SourceInput,
    prompt: PromptState,
    option: SentenceOption,
    span: SentenceSpan,
    params: GenParams,
    finishes: bool,
) -> Hypothesis:
    """Extend the prompt with one sentence and recompute scores from scratch."""
    full = prompt.hypothesis.tokens + option.tokens
    per_token, norm = model.score_sequence(source, full)
    per_token = tuple(float(x) for x in per_token)
    spans = prompt.hypothesis.sentences + (span,)
    comb = combined_score(
        norm,
        [s.class_logprob for s in spans],
        params.accumulation,
        params.use_raw_prob,
    )
    return Hypothesis(full, spans, per_token, norm, comb, finished=finishes)


def _generate_options(
    model: LMBackend,
    source: SourceInput,
    prompt: PromptState,
    params: GenParams,
    limits: SentenceLimits,
    step: int,
    prompt_idx: int,
    retry: int,
    nucleus_only: bool,
) -> list[SentenceOption]:
    if nucleus_only:
        counts = (0, 0, params.k)
    else:
        alloc = plan_mix(params.mix, params.k)
        counts = (alloc.beam_count, alloc.beam_sampling_count, alloc.nucleus_count)
    prefix = prompt.hypothesis.tokens
    options: list[SentenceOption] = []
    inv = 0

    def next_seed() -> int:
        nonlocal inv
        seed = derive_seed(params.seed, "step", step, "prompt", prompt_idx, "retry", retry, "inv", inv)
        inv += 1
        return seed

    if counts[0]:
        options.append(
            beam_sentence(model, source, prefix, params.beam_width, limits, sub_seed=next_seed())
        )
    if counts[1]:
        options.extend(
            beam_sample_sentence(model, source, prefix, counts[1], next_seed(), limits)
        )
    for _ in range(counts[2]):
        options.append(
            nucleus_sentence(model, source, prefix, params.top_p, next_seed(), limits)
        )
    return options


def expand_prompt(
    model: LMBackend,
    clf: Classifier,
    source: SourceInput,
    prompt: PromptState,
    control: ControlSequence,
    params: GenParams,
    step: int,
    prompt_idx: int,
    *,
    ban_eos: bool = False,
    retry: int = 0,
    nucleus_only: bool = False,
) -> list[Candidate]:
    """Generate, deduplicate, label, and score the k options for one prompt.

    Options invalid under the control mode (a bare eos with nothing to attach
    to, or an eos-bearing sentence before the structure is complete) are
    dropped, so the result can be empty; the caller retries in that case.
    """
    vocab = model.vocabulary
    limits = SentenceLimits(params.max_sentence_tokens, ban_eos)
    options = _generate_options(
        model, source, prompt, params, limits, step, prompt_idx, retry, nucleus_only
    )
    if not options:
        raise NoValidOptions(f"no decoder produced an option at step {step}")

    seen: set = set()
    candidates: list[Candidate] = []
    option_idx = -1
    for option in options:
        if option.tokens in seen:
            continue
        seen.add(option.tokens)
        option_idx += 1
        bare_eos = option.tokens == (vocab.eos_id,)

        if control.mode is ControlMode.SENTENCE:
            if bare_eos:
                continue  # a sentence must carry content; caller re-runs with eos banned
            required = control[step]
            text = detok(option, vocab, strip_eos=True)
            clp = label_score(clf, text, required)
            span = SentenceSpan(
                len(prompt.hypothesis.tokens),
                len(prompt.hypothesis.tokens) + len(option.tokens),
                required,
                clp,
                option.forced_boundary,
            )
            finishes = step == len(control) - 1
            hyp = _rescored(model, source, prompt, option, span, params, finishes)
            candidates.append(
                Candidate(prompt_idx, option_idx, option, hyp, step + 1, finishes, required, clp)
            )
            continue

        # Segment control.
        p = prompt.seg_pointer
        at_last = p == len(control) - 1
        if bare_eos:
            # No new sentence: the stop token joins the latest span.
            if not prompt.hypothesis.sentences or not at_last:
                continue
            full = prompt.hypothesis.tokens + option.tokens
            per_token, norm = model.score_sequence(source, full)
            per_token = tuple(float(x) for x in per_token)
            last = prompt.hypothesis.sentences[-1]
            spans = prompt.hypothesis.sentences[:-1] + (
                SentenceSpan(last.start, last.end + 1, last.label, last.class_logprob, last.forced_boundary),
            )
            comb = combined_score(
                norm,
                [s.class_logprob for s in spans],
                params.accumulation,
                params.use_raw_prob,
            )
            hyp = Hypothesis(full, spans, per_token, norm, comb, finished=True)
            candidates.append(
                Candidate(prompt_idx, option_idx, option, hyp, p, True, None, None)
            )
            continue

        text = detok(option, vocab, strip_eos=True)
        dist = clf.classify(text)
        current = control[p]
        if at_last:
            assigned, p_after = current, p
        else:
            nxt = control[p + 1]
            if float(dist[nxt.id]) > float(dist[current.id]):
                assigned, p_after = nxt, p + 1
            else:
                assigned, p_after = current, p  # ties stay on the current label
        if option.ends_with_eos and p_after != len(control) - 1:
            continue  # stopping now would leave the structure incomplete
        clp = float(dist[assigned.id])
        span = SentenceSpan(
            len(prompt.hypothesis.tokens),
            len(prompt.hypothesis.tokens) + len(option.tokens),
            assigned,
            clp,
            option.forced_boundary,
        )
        finishes = option.ends_with_eos
        hyp = _rescored(model, source, prompt, option, span, params, finishes)
        candidates.append(
            Candidate(prompt_idx, option_idx, option, hyp, p_after, finishes, assigned, clp)
        )
    return candidates


def _expand_with_policy(
    model: LMBackend,
    clf: Classifier,
    source: SourceInput,
    prompt: PromptState,
    control: ControlSequence,
    params: GenParams,
    step: int,
    prompt_idx: int,
    ban_eos: bool,
) -> list[Candidate]:
    """expand_prompt plus the empty-result recovery ladder.

    Sentence mode can only lose every option to a bare eos on the final step;
    the fix is to re-expand with eos banned (the baseline does the same, which
    keeps the k=1 equivalence exact). Segment mode first retries with fresh
    nucleus draws, then falls back to an eos-banned expansion, which always
    yields a usable sentence.
    """
    candidates = expand_prompt(
        model, clf, source, prompt, control, params, step, prompt_idx, ban_eos=ban_eos
    )
    if not candidates and control.mode is ControlMode.SEGMENT:
        retry = 1
        while not candidates and retry <= MAX_RETRIES:
            candidates = expand_prompt(
                model, clf, source, prompt, control, params, step, prompt_idx,
                ban_eos=ban_eos, retry=retry, nucleus_only=True,
            )
            retry += 1
    if not candidates:
        candidates = expand_prompt(
            model, clf, source, prompt, control, params, step, prompt_idx, ban_eos=True
        )
    if not candidates:
        raise NoValidOptions(f"prompt {prompt_idx} produced no valid candidate at step {step}")
    return candidates


def generate(
    model: LMBackend,
    clf: Classifier,
    source: SourceInput,
    control: ControlSequence,
    params: GenParams,
) -> GenerationResult:
    """Run the sentence-level search until the control structure is satisfied.

    Sentence mode emits exactly one sentence per control label. Segment mode
    runs until a candidate legitimately stops (eos with the final label
    reached) or max_sentences is hit; in the latter case the best surviving
    hypothesis is returned with finished=False.
    """
    if control.mode is ControlMode.SENTENCE:
        steps = len(control)
        if params.max_sentences is not None and params.max_sentences < steps:
            raise ConfigError(
                f"max_sentences={params.max_sentences} cannot cover {steps} control labels"
            )
    else:
        steps = params.max_sentences if params.max_sentences is not None else 2 * len(control)

    live = [PromptState(EMPTY_HYPOTHESIS, 0)]
    traces: list[StepTrace] = []
    last_survivors: list[Candidate] = []

    for step in range(steps):
        ban_eos = control.mode is ControlMode.SENTENCE and step < len(control) - 1
        all_cands: list[Candidate] = []
        for prompt_idx, prompt in enumerate(live):
            all_cands.extend(
                _expand_with_policy(
                    model, clf, source, prompt, control, params, step, prompt_idx, ban_eos
                )
            )
        order = sorted(range(len(all_cands)), key=lambda i: all_cands[i].sort_key)
        survivors = tuple(order[: params.n])
        traces.append(StepTrace(step, tuple(all_cands), survivors))

        finished = [all_cands[i] for i in order if all_cands[i].finishes]
        if finished:
            return GenerationResult(finished[0].hypothesis, tuple(traces))
        last_survivors = [all_cands[i] for i in survivors]
        live = [PromptState(c.hypothesis, c.seg_pointer) for c in last_survivors]

    # Segment mode ran out of budget: best survivor, honestly unfinished.
    return GenerationResult(last_survivors[0].hypothesis, tuple(traces))


def baseline_generate(
    model: LMBackend,
    source: SourceInput,
    control: ControlSequence,
    beam_width: int = 4,
    max_sentence_tokens: int = 64,
) -> Hypothesis:
    """Plain sentence-by-sentence beam search: one sentence per control label,
    no classifier, selection purely by mean log-likelihood."""
    if beam_width < 1:
        raise ConfigError(f"beam_width must be >= 1, got {beam_width}")
    vocab = model.vocabulary
    tokens: tuple[int, ...] = ()
    spans: tuple[SentenceSpan, ...] = ()
    for step, label in enumerate(control.labels):
        ban_eos = step < len(control) - 1
        option = beam_sentence(
            model, source, tokens, beam_width, SentenceLimits(max_sentence_tokens, ban_eos)
        )
        if option.tokens == (vocab.eos_id,):
            # A bare stop token is not a sentence; take the best real one.
            option = beam_sentence(
                model, source, tokens, beam_width, SentenceLimits(max_sentence_tokens, True)
            )
        spans = spans + (
            SentenceSpan(
                len(tokens), len(tokens) + len(option.tokens), label, 0.0, option.forced_boundary
            ),
        )
        tokens = tokens + option.tokens
    per_token, norm = model.score_sequence(source, tokens)
    per_token = tuple(float(x) for x in per_token)
    return Hypothesis(tokens, spans, per_token, norm, norm, finished=True)
