"""HTTP front end: the wire protocol over a real-model inference service.

Routes mirror the mock server the evaluation pipeline ships with: POST
/v1/classify and /v1/generate, JSON bodies, errors as
{"error": {"code", "message"}}. Out-of-memory failures map to 503 so
clients can back off and retry; other unexpected failures are 500.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Mapping

from .config import SidecarConfig, SidecarError
from .service import InferenceService, RequestError, _is_oom

log = logging.getLogger(__name__)

CLASSIFY_PATH = "/v1/classify"
GENERATE_PATH = "/v1/generate"


def error_body(code: str, message: str) -> dict[str, Any]:
    return {"error": {"code": code, "message": message}}


class _Handler(BaseHTTPRequestHandler):
    service: InferenceService  # set by server factory

    def log_message(self, fmt: str, *args) -> None:  # route to logging, not stderr
        log.debug("sidecar: " + fmt, *args)

    def _send(self, status: int, body: Mapping[str, Any]) -> None:
        data = json.dumps(body, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
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
            self._send(400, error_body("bad-json",
                                       "request body is not valid JSON"))
            return
        if self.path == CLASSIFY_PATH:
            handler = self.service.classify
        elif self.path == GENERATE_PATH:
            handler = self.service.generate
        else:
            self._send(404, error_body("not-found",
                                       f"unknown path {self.path}"))
            return
        try:
            self._send(200, handler(payload))
        except RequestError as exc:
            self._send(exc.status, error_body(exc.code, str(exc)))
        except RuntimeError as exc:
            if _is_oom(exc):
                self._send(503, error_body("overloaded", str(exc)))
            else:
                log.exception("inference failed")
                self._send(500, error_body("internal", str(exc)))


class SidecarServer:
    """Threaded server handle: start(), url, stop()."""

    def __init__(self, service: InferenceService, host: str = "127.0.0.1",
                 port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"service": service})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        host = self._httpd.server_address[0]
        return f"http://{host}:{self.port}"

    def start(self) -> "SidecarServer":
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="ftc-sidecar", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "SidecarServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve_real_models(config: SidecarConfig, host: str = "127.0.0.1",
                      port: int = 0) -> SidecarServer:
    """Load both models and bind the server (port 0 picks a free port)."""
    return SidecarServer(InferenceService(config), host, port)


# --- command line ---------------------------------------------------------------


def _cmd_serve(args: argparse.Namespace) -> int:
    if args.config:
        config = SidecarConfig.load(args.config)
    elif args.classifier and args.generator:
        config = SidecarConfig(classifier_model=args.classifier,
                               generator_model=args.generator,
                               device=args.device)
    else:
        raise SidecarError("serve needs --config or both --classifier "
                           "and --generator")
    server = serve_real_models(config, host=args.host, port=args.port)
    server.start()
    print(server.url, flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def _cmd_make_demo(args: argparse.Namespace) -> int:
    from .tiny import build_tiny_checkpoints

    classifier_dir, generator_dir = build_tiny_checkpoints(args.out,
                                                           seed=args.seed)
    config = SidecarConfig(classifier_model=str(classifier_dir),
                           generator_model=str(generator_dir))
    config_path = f"{args.out}/config.json"
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(config_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftc-sidecar",
        description="Serve real models behind the classify/generate protocol.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO instead of WARNING")
    commands = parser.add_subparsers(dest="command", required=True)

    serve = commands.add_parser("serve", help="load models and serve")
    serve.add_argument("--config", help="SidecarConfig JSON file")
    serve.add_argument("--classifier", help="classifier checkpoint path or id")
    serve.add_argument("--generator", help="generator checkpoint path or id")
    serve.add_argument("--device", default="cpu")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=0,
                       help="0 picks a free port")
    serve.set_defaults(fn=_cmd_serve)

    demo = commands.add_parser(
        "make-demo", help="write tiny random-weight checkpoints for wiring tests")
    demo.add_argument("--out", required=True)
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(fn=_cmd_make_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (SidecarError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
