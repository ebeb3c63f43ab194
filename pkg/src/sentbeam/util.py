"""Small numeric and hashing helpers used throughout the package."""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np


def logsumexp(logs: np.ndarray) -> float:
    """Numerically stable log(sum(exp(logs))); tolerates -inf entries."""
    m = float(np.max(logs))
    if m == -np.inf:
        return -np.inf
    return m + float(np.log(np.sum(np.exp(logs - m))))


def log_normalize(logs: np.ndarray) -> np.ndarray:
    """Shift a log-weight vector so it is a proper log-distribution."""
    return logs - logsumexp(logs)


def check_log_dist(logs: np.ndarray, tol: float = 1e-6) -> None:
    """Raise ValueError unless logsumexp(logs) == 0 within tol."""
    z = logsumexp(logs)
    if not abs(z) <= tol:
        raise ValueError(f"log-distribution not normalized: logsumexp={z!r}")


def derive_seed(*parts: int | str) -> int:
    """Stable 64-bit seed derived from a mixed tuple of ints and strings.

    blake2b keeps this identical across platforms and Python versions, which
    the determinism guarantees lean on.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def canonical_json(obj: Any) -> str:
    """Deterministic single-line JSON (sorted keys, exact float repr)."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
