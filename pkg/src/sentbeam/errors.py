"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`SentBeamError` so the CLI
can map failures onto its exit codes (config=2, backend=3, data=4).
"""

from __future__ import annotations


class SentBeamError(Exception):
    """Base class for all package errors."""


# -- configuration / contract violations -----------------------------------

class ConfigError(SentBeamError):
    """Inconsistent configuration (mode/params mismatch, bad run config)."""


class InvalidK(ConfigError):
    """The option budget k is incompatible with the requested mix."""


class UnknownLabel(ConfigError):
    def __init__(self, name: str):
        super().__init__(f"unknown label: {name!r}")
        self.name = name


class EmptyControl(ConfigError):
    """A control string parsed to zero labels."""


# -- backend failures -------------------------------------------------------

class BackendFailure(SentBeamError):
    """The language-model or classifier backend could not answer."""


class VocabMismatch(BackendFailure):
    """Token ids or surfaces that do not fit the active vocabulary."""


class NoValidOptions(BackendFailure):
    """Every sub-decoder failed for a prompt; generation cannot proceed."""


class ProtocolError(BackendFailure):
    """Malformed traffic on the backend wire protocol."""


class ProtocolVersionMismatch(ProtocolError):
    pass


class ProtocolTimeout(ProtocolError):
    pass


class RemoteError(ProtocolError):
    """The remote backend answered with an error payload."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message


class NormalizationViolation(ProtocolError):
    """A remote distribution failed the log-normalization check."""


# -- data errors ------------------------------------------------------------

class DataError(SentBeamError):
    """Bad or missing input data."""


class InvalidSpec(DataError):
    """A synthetic-corpus spec violates its invariants."""


class EmptyCorpus(DataError):
    pass


class EmptySequence(DataError):
    pass


class EmptySentence(DataError):
    pass


class EmptySentenceList(DataError):
    pass


class EmptySummary(DataError):
    pass


class EmptyList(DataError):
    pass


class BothEmpty(DataError):
    """Structure similarity is undefined when both label sequences are empty."""


class IdMismatch(DataError):
    """Generation records reference documents missing from the corpus."""


class CorpusMismatch(DataError):
    """Two run configs under comparison do not share a corpus."""
