"""Newline-delimited JSON protocol for out-of-process LM and classifier backends.

One JSON object per line over a bidirectional byte stream (a child process's
standard streams or a TCP socket). Requests carry strictly increasing integer
ids; the five request types are hello, logprobs, score, classify, shutdown.
Token ids cross the wire for LM calls (the server owns tokenization and
reports its vocabulary at handshake); classification crosses as text.

The client re-checks every distribution it receives: a response that fails
log-space normalization raises NormalizationViolation instead of letting bad
math reach the engine.
"""

from __future__ import annotations

import itertools
import json
import os
import selectors
import socket
import subprocess
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .classify import Classifier
from .core import LabelSet, Vocabulary
from .errors import (
    EmptySequence,
    NormalizationViolation,
    ProtocolError,
    ProtocolTimeout,
    ProtocolVersionMismatch,
    RemoteError,
)
from .lm import SourceInput
from .util import canonical_json, check_log_dist

PROTOCOL_VERSION = "v1"
DEFAULT_TIMEOUT = 60.0
_READ_CHUNK = 65536


@dataclass(frozen=True)
class Capabilities:
    """What a backend server declares at handshake."""

    version: str
    vocab_size: int
    eos_id: int
    terminal_ids: tuple[int, ...]
    concurrent_safe: bool
    labels: tuple[str, ...]
    surfaces: tuple[str, ...]
    batching: bool = False

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "vocab_size": self.vocab_size,
            "eos_id": self.eos_id,
            "terminal_ids": list(self.terminal_ids),
            "concurrent_safe": self.concurrent_safe,
            "labels": list(self.labels),
            "surfaces": list(self.surfaces),
            "batching": self.batching,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Capabilities":
        try:
            caps = cls(
                version=str(data["version"]),
                vocab_size=int(data["vocab_size"]),
                eos_id=int(data["eos_id"]),
                terminal_ids=tuple(int(t) for t in data["terminal_ids"]),
                concurrent_safe=bool(data["concurrent_safe"]),
                labels=tuple(str(x) for x in data["labels"]),
                surfaces=tuple(str(x) for x in data["surfaces"]),
                batching=bool(data.get("batching", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed capabilities: {exc}") from exc
        if caps.vocab_size < 1 or len(caps.surfaces) != caps.vocab_size:
            raise ProtocolError("capabilities surfaces must cover the vocabulary")
        return caps


class LineChannel:
    """One-line-per-message JSON framing over a pair of file descriptors.

    Reads go through a selector so both sockets and pipes honor deadlines.
    """

    def __init__(self, read_fd: int, write_fd: int, closer=None):
        self._read_fd = read_fd
        self._write_fd = write_fd
        self._closer = closer
        self._buffer = b""
        self._selector = selectors.DefaultSelector()
        self._selector.register(read_fd, selectors.EVENT_READ)

    @classmethod
    def from_socket(cls, sock: socket.socket) -> "LineChannel":
        sock.setblocking(False)
        fd = sock.fileno()
        return cls(fd, fd, closer=sock.close)

    @classmethod
    def from_pipes(cls, read_pipe, write_pipe, closer=None) -> "LineChannel":
        return cls(read_pipe.fileno(), write_pipe.fileno(), closer=closer)

    def send(self, obj: dict) -> None:
        data = canonical_json(obj).encode("utf-8") + b"\n"
        while data:
            try:
                written = os.write(self._write_fd, data)
            except BlockingIOError:
                continue
            except OSError as exc:
                raise ProtocolError(f"write failed: {exc}") from exc
            data = data[written:]

    def recv(self, timeout: float | None) -> dict:
        deadline = None if timeout is None else time.monotonic() + timeout
        while b"\n" not in self._buffer:
            remaining = None
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ProtocolTimeout(f"no response within {timeout}s")
            if not self._selector.select(remaining):
                raise ProtocolTimeout(f"no response within {timeout}s")
            try:
                chunk = os.read(self._read_fd, _READ_CHUNK)
            except BlockingIOError:
                continue
            except OSError as exc:
                raise ProtocolError(f"read failed: {exc}") from exc
            if not chunk:
                raise ProtocolError("connection closed by peer")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"malformed message: {exc}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError("message must be a JSON object")
        return msg

    def close(self) -> None:
        self._selector.close()
        if self._closer is not None:
            self._closer()


def _source_payload(source: SourceInput) -> dict:
    return {"text": source.text, "control_text": source.control_text}


class BackendClient:
    """Client half of the protocol; owns the connection and the id counter."""

    def __init__(self, channel: LineChannel, timeout: float = DEFAULT_TIMEOUT):
        self._channel = channel
        self._timeout = timeout
        self._ids = itertools.count(1)
        self.capabilities: Capabilities | None = None
        self.vocabulary: Vocabulary | None = None
        self.label_set: LabelSet | None = None

    def _roundtrip(self, payload: dict) -> dict:
        rid = next(self._ids)
        self._channel.send({"id": rid, **payload})
        resp = self._channel.recv(self._timeout)
        if resp.get("id") != rid:
            raise ProtocolError(f"response id {resp.get('id')!r} does not match request {rid}")
        if not resp.get("ok"):
            err = resp.get("error") or {}
            raise RemoteError(str(err.get("code", "unknown")), str(err.get("message", "")))
        return resp

    def handshake(self) -> Capabilities:
        try:
            resp = self._roundtrip({"type": "hello", "version": PROTOCOL_VERSION})
        except RemoteError as exc:
            if exc.code == "bad_version":
                raise ProtocolVersionMismatch(exc.message) from exc
            raise
        caps = Capabilities.from_dict(resp.get("capabilities", {}))
        if caps.version != PROTOCOL_VERSION:
            raise ProtocolVersionMismatch(
                f"server speaks {caps.version!r}, client speaks {PROTOCOL_VERSION!r}"
            )
        self.capabilities = caps
        self.vocabulary = Vocabulary(caps.surfaces, caps.eos_id, caps.terminal_ids)
        self.label_set = LabelSet(caps.labels)
        return caps

    def logprobs(self, source: SourceInput, prefix) -> np.ndarray:
        resp = self._roundtrip(
            {"type": "logprobs", "source": _source_payload(source), "prefix": list(prefix)}
        )
        row = np.asarray(resp.get("logprobs"), dtype=float)
        if row.ndim != 1 or row.size != self.capabilities.vocab_size:
            raise ProtocolError(f"logprobs payload has shape {row.shape}")
        try:
            check_log_dist(row)
        except ValueError as exc:
            raise NormalizationViolation(str(exc)) from exc
        return row

    def score(self, source: SourceInput, tokens) -> np.ndarray:
        resp = self._roundtrip(
            {"type": "score", "source": _source_payload(source), "tokens": list(tokens)}
        )
        scores = np.asarray(resp.get("logliks"), dtype=float)
        if scores.ndim != 1 or scores.size != len(tuple(tokens)):
            raise ProtocolError(
                f"score payload has {scores.size} entries for {len(tuple(tokens))} tokens"
            )
        return scores

    def classify_text(self, text: str) -> np.ndarray:
        resp = self._roundtrip({"type": "classify", "text": text})
        mapping = resp.get("label_logprobs")
        if not isinstance(mapping, dict):
            raise ProtocolError("classify payload must map label names to log-probs")
        try:
            row = np.asarray([float(mapping[name]) for name in self.label_set.names])
        except KeyError as exc:
            raise ProtocolError(f"classify payload missing label {exc}") from exc
        try:
            check_log_dist(row)
        except ValueError as exc:
            raise NormalizationViolation(str(exc)) from exc
        return row

    def shutdown(self) -> None:
        try:
            self._roundtrip({"type": "shutdown"})
        except (ProtocolError, RemoteError, OSError):
            pass  # already gone; closing is what matters

    def close(self) -> None:
        self._channel.close()

    def __enter__(self) -> "BackendClient":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()
        self.close()


class RemoteLM:
    """LMBackend adapter over a handshaken BackendClient."""

    def __init__(self, client: BackendClient):
        if client.capabilities is None:
            raise ProtocolError("handshake must complete before use")
        self._client = client

    @property
    def vocabulary(self) -> Vocabulary:
        return self._client.vocabulary

    @property
    def concurrent_safe(self) -> bool:
        return self._client.capabilities.concurrent_safe

    def next_token_logprobs(self, source: SourceInput, prefix) -> np.ndarray:
        return self._client.logprobs(source, prefix)

    def score_sequence(self, source: SourceInput, tokens) -> tuple[tuple[float, ...], float]:
        per_token = tuple(float(x) for x in self._client.score(source, tokens))
        if not per_token:
            raise EmptySequence("cannot score an empty token sequence")
        return per_token, sum(per_token) / len(per_token)


class RemoteClassifier:
    """Classifier adapter over a handshaken BackendClient."""

    def __init__(self, client: BackendClient):
        if client.capabilities is None:
            raise ProtocolError("handshake must complete before use")
        self._client = client

    @property
    def label_set(self) -> LabelSet:
        return self._client.label_set

    def classify(self, sentence_text: str) -> np.ndarray:
        return self._client.classify_text(sentence_text)


def connect_tcp(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> BackendClient:
    """Open a TCP connection and complete the handshake."""
    sock = socket.create_connection((host, port), timeout=timeout)
    client = BackendClient(LineChannel.from_socket(sock), timeout=timeout)
    client.handshake()
    return client


@dataclass
class StdioBackend:
    """A child-process backend: client plus process lifecycle."""

    client: BackendClient
    process: subprocess.Popen = field(repr=False)

    def close(self) -> None:
        self.client.shutdown()
        self.client.close()
        try:
            self.process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.process.kill()
            self.process.wait()

    def __enter__(self) -> "StdioBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def spawn_stdio(cmd: list[str], timeout: float = DEFAULT_TIMEOUT) -> StdioBackend:
    """Launch a server subprocess speaking the protocol on its stdio."""
    proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
    channel = LineChannel.from_pipes(proc.stdout, proc.stdin)
    client = BackendClient(channel, timeout=timeout)
    client.handshake()
    return StdioBackend(client=client, process=proc)


# --- Reference server -------------------------------------------------------


def server_capabilities(model, clf: Classifier) -> Capabilities:
    vocab = model.vocabulary
    return Capabilities(
        version=PROTOCOL_VERSION,
        vocab_size=vocab.size,
        eos_id=vocab.eos_id,
        terminal_ids=tuple(sorted(vocab.terminal_ids)),
        concurrent_safe=False,
        labels=clf.label_set.names,
        surfaces=vocab.surfaces,
        batching=False,
    )


def _handle(model, clf: Classifier, req: dict, last_id: int) -> tuple[dict, int, bool]:
    """Dispatch one request; returns (response, new last_id, stop flag)."""
    rid = req.get("id")
    if not isinstance(rid, int) or rid <= last_id:
        return (
            {"id": rid, "ok": False,
             "error": {"code": "bad_id", "message": f"ids must increase past {last_id}"}},
            last_id,
            False,
        )
    kind = req.get("type")
    try:
        if kind == "hello":
            if req.get("version") != PROTOCOL_VERSION:
                return (
                    {"id": rid, "ok": False,
                     "error": {"code": "bad_version",
                               "message": f"server speaks {PROTOCOL_VERSION}"}},
                    rid,
                    True,
                )
            return (
                {"id": rid, "ok": True,
                 "capabilities": server_capabilities(model, clf).to_dict()},
                rid,
                False,
            )
        if kind == "logprobs":
            src = req.get("source") or {}
            source = SourceInput(src.get("text", ""), src.get("control_text", ""))
            row = model.next_token_logprobs(source, tuple(int(t) for t in req["prefix"]))
            return ({"id": rid, "ok": True, "logprobs": [float(x) for x in row]}, rid, False)
        if kind == "score":
            src = req.get("source") or {}
            source = SourceInput(src.get("text", ""), src.get("control_text", ""))
            logliks, _ = model.score_sequence(source, tuple(int(t) for t in req["tokens"]))
            return ({"id": rid, "ok": True, "logliks": [float(x) for x in logliks]}, rid, False)
        if kind == "classify":
            dist = clf.classify(str(req["text"]))
            payload = {name: float(dist[i]) for i, name in enumerate(clf.label_set.names)}
            return ({"id": rid, "ok": True, "label_logprobs": payload}, rid, False)
        if kind == "shutdown":
            return ({"id": rid, "ok": True}, rid, True)
        return (
            {"id": rid, "ok": False,
             "error": {"code": "bad_request", "message": f"unknown type {kind!r}"}},
            rid,
            False,
        )
    except Exception as exc:  # noqa: BLE001 - surface as a protocol error payload
        return (
            {"id": rid, "ok": False,
             "error": {"code": "internal", "message": f"{type(exc).__name__}: {exc}"}},
            rid,
            False,
        )


def serve_channel(model, clf: Classifier, channel: LineChannel) -> bool:
    """Serve one connection until shutdown (True) or disconnect (False)."""
    last_id = 0
    while True:
        try:
            req = channel.recv(None)
        except ProtocolError:
            return False
        resp, last_id, stop = _handle(model, clf, req, last_id)
        channel.send(resp)
        if stop:
            return True


def serve_stdio(model, clf: Classifier) -> None:
    """Serve on this process's standard streams until shutdown or EOF."""
    channel = LineChannel(sys.stdin.fileno(), sys.stdout.fileno())
    serve_channel(model, clf, channel)


def make_server_socket(host: str = "127.0.0.1", port: int = 0) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(1)
    return sock


def serve_on(model, clf: Classifier, server_sock: socket.socket) -> None:
    """Accept connections one at a time until a client sends shutdown."""
    with server_sock:
        while True:
            conn, _ = server_sock.accept()
            channel = LineChannel.from_socket(conn)
            try:
                if serve_channel(model, clf, channel):
                    return
            finally:
                channel.close()
