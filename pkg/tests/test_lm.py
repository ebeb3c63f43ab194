"""Toy n-gram model: hand-computed smoothing oracle, chain rule, persistence."""

from __future__ import annotations

import math

import numpy as np
import pytest

from sentbeam.core import Vocabulary
from sentbeam.errors import EmptyCorpus, EmptySequence, VocabMismatch
from sentbeam.lm import SourceInput, ToyLM, fit_toy_lm, score_by_steps
from sentbeam.util import check_log_dist


@pytest.fixture(scope="module")
def bigram_lm():
    """Order-2 add-1 model on the stream "a b . a c ." over {., a, b, c}.

    "." doubles as the eos here so the 4-token hand oracle stays 4 tokens.
    """
    vocab = Vocabulary([".", "a", "b", "c"], eos_id=0, terminal_ids=(0,))
    stream = vocab.tok("a b . a c .")
    assert stream == (1, 2, 0, 1, 3, 0)
    return fit_toy_lm([stream], order=2, alpha=1.0, vocabulary=vocab)


def test_add_one_bigram_oracle(bigram_lm, source):
    # After "a": counts {b: 1, c: 1}, total 2, V = 4.
    row = bigram_lm.next_token_logprobs(source, (1,))
    assert math.exp(row[2]) == pytest.approx(1 / 3, abs=1e-12)   # P(b|a)
    assert math.exp(row[3]) == pytest.approx(1 / 3, abs=1e-12)   # P(c|a)
    assert math.exp(row[0]) == pytest.approx(1 / 6, abs=1e-12)   # P(.|a)
    assert math.exp(row[1]) == pytest.approx(1 / 6, abs=1e-12)   # P(a|a)


def test_rows_are_normalized_and_finite(bigram_lm, tiny_lm, source):
    for lm, prefixes in (
        (bigram_lm, [(), (1,), (2,), (3, 3)]),
        (tiny_lm, [(), (2,), (2, 3), (5, 5)]),
    ):
        for prefix in prefixes:
            row = lm.next_token_logprobs(source, prefix)
            check_log_dist(row)
            assert np.all(np.isfinite(row))


def test_unseen_context_falls_back_to_uniform(tiny_lm, source):
    # eos ends every training stream, so no context conditions on it.
    row = tiny_lm.next_token_logprobs(source, (2, 0))
    assert np.allclose(row, -math.log(tiny_lm.vocabulary.size))


def test_order_one_ignores_prefix(tiny_vocab, source):
    lm = fit_toy_lm([(2, 3, 1, 0)], order=1, alpha=0.5, vocabulary=tiny_vocab)
    base = lm.next_token_logprobs(source, ())
    for prefix in [(2,), (3, 1), (5, 5, 5)]:
        assert np.array_equal(lm.next_token_logprobs(source, prefix), base)


def test_score_sequence_matches_step_accumulation(tiny_lm, source, rng):
    # 50 random sequences: chain-rule consistency within 1e-9 (exact here).
    v = tiny_lm.vocabulary.size
    for _ in range(50):
        n = int(rng.integers(1, 12))
        tokens = tuple(int(t) for t in rng.integers(0, v, n))
        per_tok, norm = tiny_lm.score_sequence(source, tokens)
        oracle_tok, oracle_norm = score_by_steps(tiny_lm, source, tokens)
        assert per_tok == oracle_tok
        assert abs(norm - oracle_norm) <= 1e-9
        assert norm == pytest.approx(sum(per_tok) / len(per_tok), abs=1e-12)


def test_score_sequence_rejects_bad_input(tiny_lm, source):
    with pytest.raises(EmptySequence):
        tiny_lm.score_sequence(source, ())
    with pytest.raises(VocabMismatch):
        tiny_lm.score_sequence(source, (99,))
    with pytest.raises(VocabMismatch):
        tiny_lm.next_token_logprobs(source, (99,))


def test_source_text_is_ignored(tiny_lm):
    a = tiny_lm.next_token_logprobs(SourceInput("one", "a"), (2,))
    b = tiny_lm.next_token_logprobs(SourceInput("two", "b"), (2,))
    assert np.array_equal(a, b)


def test_fit_rejects_empty_and_bad_streams(tiny_vocab):
    with pytest.raises(EmptyCorpus):
        fit_toy_lm([], order=2, alpha=1.0, vocabulary=tiny_vocab)
    with pytest.raises(VocabMismatch):
        fit_toy_lm([(99,)], order=2, alpha=1.0, vocabulary=tiny_vocab)
    with pytest.raises(ValueError):
        fit_toy_lm([(1,)], order=0, alpha=1.0, vocabulary=tiny_vocab)
    with pytest.raises(ValueError):
        ToyLM(2, 0.0, tiny_vocab)


def test_refit_is_deterministic(tiny_vocab):
    streams = [(2, 3, 1, 0), (2, 4, 1, 0)]
    a = fit_toy_lm(streams, 3, 0.1, tiny_vocab)
    b = fit_toy_lm(streams, 3, 0.1, tiny_vocab)
    assert a.to_dict() == b.to_dict()


def test_save_load_roundtrip(tiny_lm, source, tmp_path):
    path = tmp_path / "model.json"
    tiny_lm.save(path)
    loaded = ToyLM.load(path)
    assert loaded.to_dict() == tiny_lm.to_dict()
    for prefix in [(), (2,), (2, 3), (4, 1)]:
        assert np.array_equal(
            loaded.next_token_logprobs(source, prefix),
            tiny_lm.next_token_logprobs(source, prefix),
        )


def test_load_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other-v9"}', "utf-8")
    with pytest.raises(ValueError):
        ToyLM.load(path)
