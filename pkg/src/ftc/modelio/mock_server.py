"""Mock HTTP server speaking the classify/generate protocol.

Classify requests are answered by the oracle world or a canned response file;
generate requests by the echo backend (answers the way a perfectly primed
model would) or canned prompt-suffix continuations. Deterministic by
construction so warm-cache replays and repeated runs stay byte-identical.
"""
from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Mapping

from .oracle import OracleWorld, classify_conditioned
from .protocol import (
    CLASSIFY_PATH,
    GENERATE_PATH,
    ClassifyRequest,
    GenerateRequest,
    canonical_json,
    error_body,
    request_key,
)

log = logging.getLogger(__name__)


@dataclass
class MockServerConfig:
    classify_backend: str = "oracle"  # "oracle" | "canned"
    generate_backend: str = "echo"  # "echo" | "canned"
    world: OracleWorld | None = None
    canned_classify: dict[str, Any] = field(default_factory=dict)
    canned_generate: tuple[dict[str, str], ...] = ()
    max_tokens_cap: int = 512

    def __post_init__(self) -> None:
        if self.classify_backend not in ("oracle", "canned"):
            raise ValueError(f"unknown classify backend {self.classify_backend!r}")
        if self.generate_backend not in ("echo", "canned"):
            raise ValueError(f"unknown generate backend {self.generate_backend!r}")
        if self.classify_backend == "oracle" and self.world is None:
            raise ValueError("oracle classify backend requires a world")
        for entry in self.canned_generate:
            if "suffix" not in entry or "text" not in entry:
                raise ValueError("canned generate entries need suffix and text")

    @classmethod
    def from_json(cls, doc: Mapping) -> "MockServerConfig":
        world = None
        if doc.get("world") is not None:
            world = OracleWorld.from_json(doc["world"])
        canned_classify: dict[str, Any] = {}
        for entry in doc.get("canned_classify", ()):
            key = request_key("classify", entry["request"])
            canned_classify[key] = entry["response"]
        return cls(
            classify_backend=doc.get("classify", "oracle"),
            generate_backend=doc.get("generate", "echo"),
            world=world,
            canned_classify=canned_classify,
            canned_generate=tuple(doc.get("canned_generate", ())),
            max_tokens_cap=int(doc.get("max_tokens_cap", 512)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "MockServerConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


class _Handler(BaseHTTPRequestHandler):
    config: MockServerConfig  # set by server factory
    echo_generator = None

    def log_message(self, fmt: str, *args) -> None:  # route to logging, not stderr
        log.debug("mock server: " + fmt, *args)

    def _send(self, status: int, body: Mapping[str, Any]) -> None:
        data = canonical_json(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            self._send(400, error_body("bad-json", "request body is not valid JSON"))
            return
        if self.path == CLASSIFY_PATH:
            self._classify(payload)
        elif self.path == GENERATE_PATH:
            self._generate(payload)
        else:
            self._send(404, error_body("not-found", f"unknown path {self.path}"))

    def _classify(self, payload: Mapping[str, Any]) -> None:
        try:
            request = ClassifyRequest.from_wire(payload)
        except (ValueError, TypeError) as exc:
            self._send(400, error_body("bad-request", str(exc)))
            return
        if self.config.classify_backend == "canned":
            key = request_key("classify", request.to_wire())
            hit = self.config.canned_classify.get(key)
            if hit is None:
                self._send(
                    404, error_body("no-canned-response", "request not in canned set")
                )
                return
            self._send(200, hit)
            return
        dist = classify_conditioned(self.config.world, request)
        self._send(200, {"probs": dist.as_dict()})

    def _generate(self, payload: Mapping[str, Any]) -> None:
        try:
            request = GenerateRequest.from_wire(payload)
        except (ValueError, TypeError) as exc:
            self._send(400, error_body("bad-request", str(exc)))
            return
        if request.max_tokens > self.config.max_tokens_cap:
            self._send(
                400,
                error_body(
                    "max-tokens",
                    f"max_tokens {request.max_tokens} exceeds cap "
                    f"{self.config.max_tokens_cap}",
                ),
            )
            return
        if self.config.generate_backend == "canned":
            for entry in self.config.canned_generate:
                if request.prompt.endswith(entry["suffix"]):
                    self._send(200, {"text": entry["text"]})
                    return
            self._send(
                404, error_body("no-canned-response", "no canned response")
            )
            return
        self._send(200, {"text": self.echo_generator.generate(request)})


class MockServer:
    """Threaded server handle: start(), url, stop()."""

    def __init__(self, config: MockServerConfig, host: str = "127.0.0.1",
                 port: int = 0):
        from ..rewrite import EchoGenerator  # deferred: rewrite imports protocol

        handler = type(
            "BoundHandler",
            (_Handler,),
            {"config": config, "echo_generator": EchoGenerator()},
        )
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        host = self._httpd.server_address[0]
        return f"http://{host}:{self.port}"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="ftc-mock-server", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve_mock(
    config: MockServerConfig, host: str = "127.0.0.1", port: int = 0
) -> MockServer:
    """Bind a mock server (port 0 picks a free port). Caller starts/stops it."""
    return MockServer(config, host, port)
