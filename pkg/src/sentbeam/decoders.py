"""Sentence-terminated decoding sub-methods and the option-budget planner.

Each decoder extends a prompt by exactly one sentence: generation runs until a
sentence-terminal token or, failing that, the per-sentence token cap (the
option is then a forced boundary). Completed candidates are ranked by
length-normalized (mean) log-likelihood, which keeps short sentences from
being favored merely for having fewer factors.

When the engine bans eos (so a required structure cannot be cut short), the
decoders mask it to -inf and renormalize; all option log-likelihoods are then
relative to that masked distribution. The engine re-scores full sequences
under the raw model afterwards.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import MixStrategy, TokenSeq, Vocabulary
from .errors import InvalidK
from .lm import LMBackend, SourceInput
from .util import log_normalize, rng_from_seed


class Method(enum.Enum):
    BEAM = "beam"
    BEAM_SAMPLING = "beam_sampling"
    NUCLEUS = "nucleus"


@dataclass(frozen=True)
class SentenceOption:
    """One candidate next sentence (new tokens only) with provenance."""

    tokens: TokenSeq
    per_token_loglik: tuple[float, ...]
    method: Method
    sub_seed: int
    ends_with_eos: bool
    forced_boundary: bool

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("a sentence option must contain at least one token")
        if len(self.per_token_loglik) != len(self.tokens):
            raise ValueError("per_token_loglik must align with tokens")
        if self.forced_boundary and self.ends_with_eos:
            raise ValueError("a forced boundary cannot also end with eos")

    @property
    def mean_loglik(self) -> float:
        return sum(self.per_token_loglik) / len(self.per_token_loglik)


@dataclass(frozen=True)
class MixAllocation:
    """How many of the k options each sub-decoder contributes."""

    beam_count: int
    beam_sampling_count: int
    nucleus_count: int

    @property
    def k(self) -> int:
        return self.beam_count + self.beam_sampling_count + self.nucleus_count


@dataclass(frozen=True)
class SentenceLimits:
    max_tokens: int
    ban_eos: bool = False


def plan_mix(strategy: MixStrategy, k: int) -> MixAllocation:
    """Allocate the k-option budget across sub-decoders.

    Combined strategies reserve 1 option for beam search; the triple mix gives
    floor(k/2) to beam sampling and the remainder to nucleus sampling.
    """
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    if strategy is MixStrategy.BEAM_ONLY:
        if k != 1:
            raise InvalidK(f"beam-only produces exactly one option; got k={k}")
        return MixAllocation(1, 0, 0)
    if strategy is MixStrategy.NUCLEUS_ONLY:
        return MixAllocation(0, 0, k)
    if strategy is MixStrategy.BEAM_SAMPLING_ONLY:
        return MixAllocation(0, k, 0)
    if strategy is MixStrategy.BEAM_PLUS_NUCLEUS:
        if k < 2:
            raise InvalidK(f"beam+nucleus needs k >= 2, got k={k}")
        return MixAllocation(1, 0, k - 1)
    if strategy is MixStrategy.BEAM_PLUS_BEAM_SAMPLING_PLUS_NUCLEUS:
        if k < 3:
            raise InvalidK(f"the triple mix needs k >= 3, got k={k}")
        bs = k // 2
        return MixAllocation(1, bs, k - 1 - bs)
    raise InvalidK(f"unknown mix strategy: {strategy}")


def step_logprobs(
    model: LMBackend, source: SourceInput, prefix: TokenSeq, ban_eos: bool
) -> np.ndarray:
    """Next-token log-distribution, with eos masked out when banned."""
    row = model.next_token_logprobs(source, prefix)
    if ban_eos:
        row = row.copy()
        row[model.vocabulary.eos_id] = -np.inf
        row = log_normalize(row)
    return row


def _allowed_terminals(vocab: Vocabulary, ban_eos: bool) -> tuple[int, ...]:
    ids = sorted(vocab.terminal_ids)
    if ban_eos:
        ids = [t for t in ids if t != vocab.eos_id]
    return tuple(ids)


@dataclass
class _Partial:
    tokens: list[int] = field(default_factory=list)
    logliks: list[float] = field(default_factory=list)
    cum: float = 0.0

    def extended(self, tok: int, ll: float) -> "_Partial":
        return _Partial(self.tokens + [tok], self.logliks + [ll], self.cum + ll)

    @property
    def mean(self) -> float:
        return self.cum / len(self.tokens)


def _make_option(
    partial: _Partial, method: Method, sub_seed: int, vocab: Vocabulary, forced: bool
) -> SentenceOption:
    return SentenceOption(
        tokens=tuple(partial.tokens),
        per_token_loglik=tuple(partial.logliks),
        method=method,
        sub_seed=sub_seed,
        ends_with_eos=(not forced and partial.tokens[-1] == vocab.eos_id),
        forced_boundary=forced,
    )


def beam_sentence(
    model: LMBackend,
    source: SourceInput,
    prefix: TokenSeq,
    beam_width: int,
    limits: SentenceLimits,
    sub_seed: int = 0,
) -> SentenceOption:
    """Best sentence continuation under beam search.

    Beams are pruned by cumulative log-likelihood; every terminal extension of
    a live beam is recorded as a completed candidate; completed candidates are
    ranked by mean log-likelihood. If nothing completes within the token cap,
    the best partial is returned with forced_boundary set.
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    vocab = model.vocabulary
    terminals = _allowed_terminals(vocab, limits.ban_eos)
    live = [_Partial()]
    completed: list[_Partial] = []

    for _ in range(limits.max_tokens):
        rows = [
            step_logprobs(model, source, prefix + tuple(b.tokens), limits.ban_eos)
            for b in live
        ]
        scores = np.asarray([b.cum for b in live])[:, None] + np.stack(rows)
        for bi, beam in enumerate(live):
            for t in terminals:
                ll = float(rows[bi][t])
                if np.isfinite(ll):
                    completed.append(beam.extended(t, ll))
        for t in terminals:
            scores[:, t] = -np.inf
        flat = scores.ravel()
        order = np.argsort(-flat, kind="stable")  # ties: lower beam, lower token id
        next_live = []
        for idx in order[:beam_width]:
            if not np.isfinite(flat[idx]):
                break
            bi, tok = divmod(int(idx), vocab.size)
            next_live.append(live[bi].extended(tok, float(rows[bi][tok])))
        live = next_live
        if not live:
            break

    if completed:
        best = max(completed, key=lambda p: p.mean)  # first max wins on ties
        return _make_option(best, Method.BEAM, sub_seed, vocab, forced=False)
    best = max(live, key=lambda p: p.mean)
    return _make_option(best, Method.BEAM, sub_seed, vocab, forced=True)


def nucleus_sentence(
    model: LMBackend,
    source: SourceInput,
    prefix: TokenSeq,
    top_p: float,
    sub_seed: int,
    limits: SentenceLimits,
) -> SentenceOption:
    """Sample one sentence with top-p (nucleus) sampling.

    Per step: sort tokens by descending probability, keep the smallest prefix
    set whose cumulative probability reaches top_p, renormalize, sample.
    """
    if not 0.0 < top_p <= 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    vocab = model.vocabulary
    rng = rng_from_seed(sub_seed)
    partial = _Partial()
    for _ in range(limits.max_tokens):
        row = step_logprobs(model, source, prefix + tuple(partial.tokens), limits.ban_eos)
        probs = np.exp(row)
        order = np.argsort(-probs, kind="stable")
        sorted_probs = probs[order]
        cum = np.cumsum(sorted_probs)
        cut = min(int(np.searchsorted(cum, top_p, side="left")) + 1, vocab.size)
        nucleus_probs = sorted_probs[:cut] / cum[cut - 1]
        u = rng.random()
        j = min(int(np.searchsorted(np.cumsum(nucleus_probs), u, side="right")), cut - 1)
        tok = int(order[j])
        partial = partial.extended(tok, float(row[tok]))
        if vocab.is_terminal(tok):
            return _make_option(partial, Method.NUCLEUS, sub_seed, vocab, forced=False)
    return _make_option(partial, Method.NUCLEUS, sub_seed, vocab, forced=True)


def top_p_nucleus(row: np.ndarray, top_p: float) -> np.ndarray:
    """Token ids inside the top-p nucleus of a log-distribution (test oracle)."""
    probs = np.exp(row)
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    cut = min(int(np.searchsorted(cum, top_p, side="left")) + 1, len(row))
    return np.sort(order[:cut])


def beam_sample_sentence(
    model: LMBackend,
    source: SourceInput,
    prefix: TokenSeq,
    beam_size: int,
    sub_seed: int,
    limits: SentenceLimits,
) -> list[SentenceOption]:
    """Stochastic beam search producing up to beam_size sentence options.

    Each live beam samples 2 x beam_size candidate tokens without replacement
    (Gumbel perturbation); pooled partials are pruned to the top beam_size by
    cumulative log-likelihood; completions are set aside as they appear.
    Returns completions ranked by mean log-likelihood, padded with the best
    forced-boundary partials when fewer than beam_size complete. Duplicate
    token sequences are possible; the engine deduplicates.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    vocab = model.vocabulary
    rng = rng_from_seed(sub_seed)
    live = [_Partial()]
    completed: list[_Partial] = []
    leftovers: list[_Partial] = []

    for _ in range(limits.max_tokens):
        pool: list[_Partial] = []
        for beam in live:
            row = step_logprobs(model, source, prefix + tuple(beam.tokens), limits.ban_eos)
            finite = np.isfinite(row)
            m = min(2 * beam_size, int(finite.sum()))
            perturbed = np.where(finite, row + rng.gumbel(size=vocab.size), -np.inf)
            picks = np.argsort(-perturbed, kind="stable")[:m]
            for tok in (int(t) for t in picks):
                cand = beam.extended(tok, float(row[tok]))
                if vocab.is_terminal(tok):
                    completed.append(cand)
                else:
                    pool.append(cand)
        pool.sort(key=lambda p: -p.cum)  # stable: insertion order breaks ties
        live = pool[:beam_size]
        if not live:
            break
    leftovers = live

    completed.sort(key=lambda p: -p.mean)
    options = [
        _make_option(p, Method.BEAM_SAMPLING, sub_seed, vocab, forced=False)
        for p in completed[:beam_size]
    ]
    if len(options) < beam_size and leftovers:
        leftovers.sort(key=lambda p: -p.mean)
        for p in leftovers[: beam_size - len(options)]:
            options.append(
                _make_option(p, Method.BEAM_SAMPLING, sub_seed, vocab, forced=True)
            )
    return options
