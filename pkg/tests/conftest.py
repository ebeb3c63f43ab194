"""Shared fixtures: tiny hand-built models plus a small fitted testbed."""

from __future__ import annotations

import numpy as np
import pytest

from sentbeam.classify import KeywordClassifier
from sentbeam.core import ControlMode, LabelSet, Vocabulary, parse_control
from sentbeam.corpus import (
    corpus_streams,
    gold_lexicons,
    synth_corpus,
    vocab_from_spec,
)
from sentbeam.lm import SourceInput, ToyLM, fit_toy_lm
from sentbeam.testbed import reference_spec, train_spec

# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --- tiny hand-built models -------------------------------------------------

@pytest.fixture(scope="session")
def tiny_vocab() -> Vocabulary:
    """6 tokens: 0=eos, 1=".", 2..5 = a b c d; terminals are eos and "."."""
    return Vocabulary(["</s>", ".", "a", "b", "c", "d"], eos_id=0, terminal_ids=(0, 1))


@pytest.fixture(scope="session")
def tiny_lm(tiny_vocab) -> ToyLM:
    """Order-2 model over the tiny vocabulary with mildly skewed counts."""
    streams = [
        (2, 3, 1, 2, 4, 1, 0),   # a b . a c . </s>
        (2, 3, 1, 3, 5, 1, 0),   # a b . b d . </s>
        (2, 4, 1, 2, 3, 1, 0),   # a c . a b . </s>
        (3, 5, 2, 1, 0),         # b d a . </s>
    ]
    return fit_toy_lm(streams, order=2, alpha=0.5, vocabulary=tiny_vocab)


@pytest.fixture(scope="session")
def source() -> SourceInput:
    return SourceInput("some source text", "abstract | decision")


# --- small fitted testbed ---------------------------------------------------

@pytest.fixture(scope="session")
def small_spec():
    """Reference-spec shape at 12 evaluation documents for fast tests."""
    from dataclasses import replace

    return replace(reference_spec(), documents=12)


@pytest.fixture(scope="session")
def small_docs(small_spec):
    return synth_corpus(small_spec)


@pytest.fixture(scope="session")
def testbed_vocab(small_spec) -> Vocabulary:
    return vocab_from_spec(small_spec)


@pytest.fixture(scope="session")
def testbed_lm(testbed_vocab) -> ToyLM:
    from dataclasses import replace

    spec = replace(train_spec(), documents=400)
    docs = synth_corpus(spec)
    return fit_toy_lm(corpus_streams(docs, testbed_vocab), 3, 0.01, testbed_vocab)


@pytest.fixture(scope="session")
def testbed_clf(small_spec) -> KeywordClassifier:
    return KeywordClassifier(small_spec.label_set, gold_lexicons(small_spec))


@pytest.fixture(scope="session")
def testbed_labels(small_spec) -> LabelSet:
    return small_spec.label_set


def control_for(doc, label_set: LabelSet, mode: ControlMode):
    return parse_control(doc.control, label_set, mode)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)
