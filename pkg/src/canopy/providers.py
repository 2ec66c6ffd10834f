"""Encoding/parsing providers behind one RPC-shaped contract.

Every provider answers five methods: ``embed_text``, ``encode_segment``,
``caption``, ``parse_query``, ``synthesize``, plus a ``hello`` handshake
reporting the embedding dimension and whether it requires serial calls.

The wire format (subprocess stdio and HTTP modes) is line-delimited JSON:
request ``{"id", "method", "params"}``, response ``{"id", "result"}`` or
``{"id", "error": {"code", "message"}}``.

The built-in mock provider is fully deterministic and offline: vectors are
hash-expanded unit vectors, captions are templated strings, and query
parsing handles a small fixed grammar. It doubles as the independently
recomputable oracle for encoding tests.
"""

from __future__ import annotations

import hashlib
import json
import re
import shlex
import struct
import subprocess
import threading
import urllib.request
from typing import Any, Callable

import numpy as np

from canopy.errors import ProviderError

PROVIDER_METHODS = ("embed_text", "encode_segment", "caption", "parse_query", "synthesize")


def hash_unit_vector(data: bytes, dim: int) -> np.ndarray:
    """Deterministic unit vector in R^dim derived from *data*.

    Expands sha256(data) counter-mode into dim floats in [-1, 1), then
    normalizes. Stable across platforms and library versions.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    seed = hashlib.sha256(data).digest()
    out = np.empty(dim, dtype=np.float64)
    produced = 0
    counter = 0
    while produced < dim:
        block = hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        for off in range(0, 32, 8):
            if produced >= dim:
                break
            (word,) = struct.unpack_from(">Q", block, off)
            out[produced] = (word / 2**64) * 2.0 - 1.0
            produced += 1
        counter += 1
    norm = float(np.linalg.norm(out))
    if norm == 0.0:  # astronomically unlikely; keep the contract total
        out[0] = 1.0
        norm = 1.0
    return out / norm


def caption_template(identities: list[str], start_index: int, end_index: int) -> str:
    ids = ",".join(sorted(set(identities))) or "none"
    return f"persons {ids} present, frames {start_index}-{end_index}"


def segment_content_bytes(keyframe_embedding: np.ndarray, identities: list[str]) -> bytes:
    """Canonical byte input of the mock segment encoding: keyframe embedding
    bytes followed by the sorted unique identity tokens."""
    emb = np.asarray(keyframe_embedding, dtype=np.float64).tobytes()
    ids = "\x00".join(sorted(set(identities))).encode("utf-8")
    return emb + b"\x01" + ids


# ---------------------------------------------------------------------------
# Mock query grammar
# ---------------------------------------------------------------------------

_DATE = r"(?P<date>\d{4}-\d{2}-\d{2})"
_GRAMMAR: list[tuple[re.Pattern[str], str]] = [
    (re.compile(rf"^who appeared in (?P<locs>.+) on {_DATE}\??$", re.I), "common_identity"),
    (re.compile(rf"^was (?P<ident>\S+) at (?P<loc>.+) on {_DATE}\??$", re.I), "presence"),
    (re.compile(rf"^where was (?P<ident>\S+) on {_DATE}\??$", re.I), "locate"),
    (re.compile(rf"^how many people were at (?P<loc>.+) on {_DATE}\??$", re.I), "count"),
    (re.compile(rf"^summarize (?P<loc>.+) on {_DATE}\??$", re.I), "summarize"),
]


def parse_query_text(text: str) -> dict[str, Any]:
    """Parse the constrained demo grammar into a structured-query dict."""
    text = text.strip()
    for pattern, task in _GRAMMAR:
        m = pattern.match(text)
        if m is None:
            continue
        date = m.group("date")
        query: dict[str, Any] = {
            "task": task,
            "description": text,
            "date_range": [date, date],
        }
        groups = m.groupdict()
        if "locs" in groups and groups["locs"]:
            locs = [p.strip() for p in re.split(r"\band\b|,", groups["locs"]) if p.strip()]
            query["locations"] = locs
        if "loc" in groups and groups["loc"]:
            query["locations"] = [groups["loc"].strip()]
        if "ident" in groups and groups["ident"]:
            query["identities"] = [groups["ident"]]
        return query
    raise ProviderError(f"cannot parse query text: {text!r}", code=-32001)


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

class MockProvider:
    """Deterministic offline provider; serial contract not required."""

    def __init__(self, dim: int):
        self._dim = dim

    def hello(self) -> dict[str, Any]:
        return {"dim": self._dim, "serial": False}

    @property
    def dim(self) -> int:
        return self._dim

    def embed_text(self, text: str) -> np.ndarray:
        return hash_unit_vector(b"text\x00" + text.encode("utf-8"), self._dim)

    def encode_segment(
        self, keyframe_embedding: np.ndarray, detections: list[dict[str, Any]]
    ) -> tuple[np.ndarray, str]:
        identities = [d["id"] for d in detections]
        vec = hash_unit_vector(segment_content_bytes(keyframe_embedding, identities), self._dim)
        frames = [d["frame_index"] for d in detections]
        a = min(frames) if frames else 0
        b = max(frames) if frames else 0
        return vec, caption_template(identities, a, b)

    def caption(self, keyframe_embedding: np.ndarray, detections: list[dict[str, Any]]) -> str:
        identities = [d["id"] for d in detections]
        frames = [d["frame_index"] for d in detections]
        a = min(frames) if frames else 0
        b = max(frames) if frames else 0
        return caption_template(identities, a, b)

    def parse_query(self, text: str) -> dict[str, Any]:
        return parse_query_text(text)

    def synthesize(self, task: str, texts: list[str], query: dict[str, Any]) -> str:
        # deterministic concatenation template; no language model involved
        body = " | ".join(texts) if texts else "no supporting content"
        return f"[{task}] {body}"


class RpcProvider:
    """Client for a wire-format provider (subprocess stdio or HTTP).

    Performs the hello handshake lazily on first use; serializes calls when
    the provider declares ``serial`` or speaks over stdio.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._next_id = 0
        self._hello: dict[str, Any] | None = None

    # subclasses implement _roundtrip(payload dict) -> response dict

    def _call(self, method: str, params: dict[str, Any]) -> Any:
        with self._lock:
            self._next_id += 1
            req_id = self._next_id
            response = self._roundtrip({"id": req_id, "method": method, "params": params})
        if not isinstance(response, dict) or response.get("id") != req_id:
            raise ProviderError(f"malformed response to {method}: {response!r}")
        if "error" in response:
            err = response["error"] or {}
            raise ProviderError(
                f"{method} failed: {err.get('message', 'unknown error')}",
                code=err.get("code"),
            )
        return response.get("result")

    def hello(self) -> dict[str, Any]:
        if self._hello is None:
            result = self._call("hello", {})
            if not isinstance(result, dict) or "dim" not in result:
                raise ProviderError(f"bad hello result: {result!r}")
            self._hello = result
        return self._hello

    @property
    def dim(self) -> int:
        return int(self.hello()["dim"])

    def embed_text(self, text: str) -> np.ndarray:
        result = self._call("embed_text", {"text": text})
        return np.asarray(result["vector"], dtype=np.float64)

    def encode_segment(
        self, keyframe_embedding: np.ndarray, detections: list[dict[str, Any]]
    ) -> tuple[np.ndarray, str]:
        result = self._call(
            "encode_segment",
            {
                "keyframe_embedding": np.asarray(keyframe_embedding, dtype=np.float64).tolist(),
                "detections": detections,
            },
        )
        return np.asarray(result["vector"], dtype=np.float64), result.get("caption", "")

    def caption(self, keyframe_embedding: np.ndarray, detections: list[dict[str, Any]]) -> str:
        result = self._call(
            "caption",
            {
                "keyframe_embedding": np.asarray(keyframe_embedding, dtype=np.float64).tolist(),
                "detections": detections,
            },
        )
        return result["text"]

    def parse_query(self, text: str) -> dict[str, Any]:
        result = self._call("parse_query", {"text": text})
        return result["query"]

    def synthesize(self, task: str, texts: list[str], query: dict[str, Any]) -> str:
        result = self._call("synthesize", {"task": task, "texts": texts, "query": query})
        return result["text"]


class SubprocessProvider(RpcProvider):
    """Line-delimited JSON over a child process's standard streams."""

    def __init__(self, command: str):
        super().__init__()
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def _roundtrip(self, payload: dict[str, Any]) -> dict[str, Any]:
        proc = self._proc
        if proc.poll() is not None:
            raise ProviderError("provider process exited")
        assert proc.stdin is not None and proc.stdout is not None
        proc.stdin.write(json.dumps(payload) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise ProviderError("provider closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"invalid JSON from provider: {line!r}") from exc

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()


class HttpProvider(RpcProvider):
    """One HTTP POST per request to a configured base URL."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        super().__init__()
        self._url = base_url
        self._timeout = timeout

    def _roundtrip(self, payload: dict[str, Any]) -> dict[str, Any]:
        data = json.dumps(payload).encode("utf-8")
        req = urllib.request.Request(
            self._url, data=data, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self._timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except OSError as exc:
            raise ProviderError(f"provider HTTP request failed: {exc}") from exc


class CountingProvider:
    """Wrapper that counts calls per method and memoizes text embeddings.

    The memo prevents redundant embedding computations across queries; cache
    hits are not counted as provider calls.
    """

    def __init__(self, inner):
        self._inner = inner
        self.calls: dict[str, int] = {m: 0 for m in PROVIDER_METHODS}
        self._embed_cache: dict[str, np.ndarray] = {}

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    def reset_counts(self) -> None:
        for key in self.calls:
            self.calls[key] = 0

    def hello(self) -> dict[str, Any]:
        return self._inner.hello()

    @property
    def dim(self) -> int:
        return self._inner.dim

    def embed_text(self, text: str) -> np.ndarray:
        if text in self._embed_cache:
            return self._embed_cache[text]
        self.calls["embed_text"] += 1
        vec = self._inner.embed_text(text)
        self._embed_cache[text] = vec
        return vec

    def encode_segment(self, keyframe_embedding, detections):
        self.calls["encode_segment"] += 1
        return self._inner.encode_segment(keyframe_embedding, detections)

    def caption(self, keyframe_embedding, detections):
        self.calls["caption"] += 1
        return self._inner.caption(keyframe_embedding, detections)

    def parse_query(self, text: str) -> dict[str, Any]:
        self.calls["parse_query"] += 1
        return self._inner.parse_query(text)

    def synthesize(self, task, texts, query) -> str:
        self.calls["synthesize"] += 1
        return self._inner.synthesize(task, texts, query)


def make_provider(mode: str, address: str | None = None, dim: int = 32):
    """Build a provider from config: mock | subprocess | http."""
    if mode == "mock":
        return MockProvider(dim)
    if mode == "subprocess":
        if not address:
            raise ProviderError("subprocess provider requires a command address")
        return SubprocessProvider(address)
    if mode == "http":
        if not address:
            raise ProviderError("http provider requires a base URL")
        return HttpProvider(address)
    raise ProviderError(f"unknown provider mode {mode!r}")
