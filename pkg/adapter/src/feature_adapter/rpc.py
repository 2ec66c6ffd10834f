"""Provider RPC endpoint: line-delimited JSON over stdio, or HTTP POST.

Request:  {"id": int, "method": str, "params": {...}}
Response: {"id": int, "result": {...}} or {"id": int, "error": {"code", "message"}}

The handshake method ``hello`` reports {"dim": d, "serial": bool}. Bad
requests produce per-request error responses; the process never exits on
malformed input.
"""

from __future__ import annotations

import json
import re
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np

from feature_adapter import AdapterError
from feature_adapter.models import (
    AdapterConfig,
    HashTextEmbedder,
    caption_detections,
)

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

_DATE = r"(?P<date>\d{4}-\d{2}-\d{2})"
_QUERY_GRAMMAR = [
    (re.compile(rf"^who appeared in (?P<locs>.+) on {_DATE}\??$", re.I), "common_identity"),
    (re.compile(rf"^was (?P<ident>\S+) at (?P<loc>.+) on {_DATE}\??$", re.I), "presence"),
    (re.compile(rf"^where was (?P<ident>\S+) on {_DATE}\??$", re.I), "locate"),
    (re.compile(rf"^how many people were at (?P<loc>.+) on {_DATE}\??$", re.I), "count"),
    (re.compile(rf"^summarize (?P<loc>.+) on {_DATE}\??$", re.I), "summarize"),
]


class ProviderService:
    """Implements the five provider methods over the built-in models."""

    def __init__(self, config: AdapterConfig | None = None, serial: bool = True):
        self.config = config or AdapterConfig()
        self.serial = serial
        self._text = HashTextEmbedder(self.config.dim)

    # -- method implementations ------------------------------------------

    def hello(self, params: dict) -> dict:
        return {"dim": self.config.dim, "serial": self.serial}

    def embed_text(self, params: dict) -> dict:
        text = params.get("text")
        if not isinstance(text, str):
            raise AdapterError("embed_text requires a string 'text'")
        return {"vector": self._text.embed(text).tolist()}

    def _keyframe_and_dets(self, params: dict):
        emb = params.get("keyframe_embedding")
        if not isinstance(emb, list) or len(emb) != self.config.dim:
            raise AdapterError(
                f"keyframe_embedding must be a list of {self.config.dim} floats"
            )
        dets = params.get("detections", [])
        if not isinstance(dets, list):
            raise AdapterError("detections must be a list")
        idents = []
        frames = []
        for d in dets:
            if not isinstance(d, dict) or "id" not in d:
                raise AdapterError("each detection needs an 'id'")
            idents.append(str(d["id"]))
            frames.append(int(d.get("frame_index", 0)))
        return np.asarray(emb, dtype=np.float64), idents, frames

    def encode_segment(self, params: dict) -> dict:
        keyframe, idents, frames = self._keyframe_and_dets(params)
        # fuse visual content with a person-presence channel
        presence = self._text.embed("persons " + " ".join(sorted(set(idents))))
        vec = 0.8 * keyframe + 0.2 * presence
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec = vec / norm
        a = min(frames) if frames else 0
        b = max(frames) if frames else 0
        return {
            "vector": vec.tolist(),
            "caption": caption_detections(idents, a, b),
        }

    def caption(self, params: dict) -> dict:
        _, idents, frames = self._keyframe_and_dets(params)
        a = min(frames) if frames else 0
        b = max(frames) if frames else 0
        return {"text": caption_detections(idents, a, b)}

    def parse_query(self, params: dict) -> dict:
        text = params.get("text")
        if not isinstance(text, str):
            raise AdapterError("parse_query requires a string 'text'")
        text = text.strip()
        for pattern, task in _QUERY_GRAMMAR:
            m = pattern.match(text)
            if m is None:
                continue
            groups = m.groupdict()
            query = {
                "task": task,
                "description": text,
                "date_range": [groups["date"], groups["date"]],
            }
            if groups.get("locs"):
                query["locations"] = [
                    p.strip() for p in re.split(r"\band\b|,", groups["locs"]) if p.strip()
                ]
            if groups.get("loc"):
                query["locations"] = [groups["loc"].strip()]
            if groups.get("ident"):
                query["identities"] = [groups["ident"]]
            return {"query": query}
        raise AdapterError(f"cannot parse query text: {text!r}")

    def synthesize(self, params: dict) -> dict:
        task = params.get("task", "summarize")
        texts = params.get("texts", [])
        if not isinstance(texts, list):
            raise AdapterError("synthesize requires a list of 'texts'")
        body = " | ".join(str(t) for t in texts) if texts else "no supporting content"
        return {"text": f"[{task}] {body}"}

    # -- request dispatch --------------------------------------------------

    METHODS = ("hello", "embed_text", "encode_segment", "caption", "parse_query", "synthesize")

    def handle(self, request) -> dict:
        """One request in, one response out. Never raises."""
        req_id = request.get("id") if isinstance(request, dict) else None
        if not isinstance(request, dict) or "method" not in request:
            return _error(req_id, INVALID_REQUEST, "request must carry a method")
        method = request["method"]
        if method not in self.METHODS:
            return _error(req_id, METHOD_NOT_FOUND, f"unknown method {method!r}")
        params = request.get("params") or {}
        if not isinstance(params, dict):
            return _error(req_id, INVALID_PARAMS, "params must be an object")
        try:
            result = getattr(self, method)(params)
        except AdapterError as exc:
            return _error(req_id, INVALID_PARAMS, str(exc))
        except Exception as exc:  # never let one request kill the server
            return _error(req_id, INTERNAL_ERROR, f"{type(exc).__name__}: {exc}")
        return {"id": req_id, "result": result}

    def handle_line(self, line: str) -> dict:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return _error(None, PARSE_ERROR, f"invalid JSON: {exc.msg}")
        return self.handle(request)


def _error(req_id, code: int, message: str) -> dict:
    return {"id": req_id, "error": {"code": code, "message": message}}


def serve_stdio(service: ProviderService) -> None:
    """Blocking line loop over the process's standard streams."""
    for line in sys.stdin:
        if not line.strip():
            continue
        response = service.handle_line(line)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


def serve_http(service: ProviderService, port: int) -> HTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length).decode("utf-8")
            response = service.handle_line(body)
            payload = json.dumps(response).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt, *args):
            print(f"[adapter] {fmt % args}", file=sys.stderr)

    return HTTPServer(("127.0.0.1", port), Handler)
