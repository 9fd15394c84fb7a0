"""Append-only JSONL response cache keyed by canonical request hashes.

Entries are one JSON object per line; the last entry for a key wins, so a
rewritten response only requires appending. Corrupt lines are skipped with a
warning instead of poisoning the whole file.
"""
from __future__ import annotations

import datetime as _dt
import json
import logging
import threading
from pathlib import Path
from typing import Any, Callable, Mapping

from .protocol import request_key

log = logging.getLogger(__name__)

CACHE_FILENAME = "cache.jsonl"


class ResponseCache:
    """Process-local view over a cache directory.

    Thread-safe: lookups and appends share one lock, and each entry is
    written with a single write call so concurrent appenders cannot
    interleave partial lines.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / CACHE_FILENAME
        self._lock = threading.Lock()
        self._entries: dict[str, Any] = {}
        self._loaded = False
        self.hits = 0
        self.misses = 0

    def _load(self) -> None:
        if self._loaded:
            return
        self._loaded = True
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    key = entry["key"]
                    response = entry["response"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    log.warning(
                        "skipping corrupt cache line %d in %s", line_no, self.path
                    )
                    continue
                self._entries[key] = response

    def get(self, key: str) -> Any | None:
        with self._lock:
            self._load()
            if key in self._entries:
                self.hits += 1
                return self._entries[key]
            self.misses += 1
            return None

    def put(self, key: str, request: Mapping[str, Any], response: Any) -> None:
        entry = {
            "key": key,
            "request": dict(request),
            "response": response,
            "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        line = json.dumps(entry, ensure_ascii=False) + "\n"
        with self._lock:
            self._load()
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)  # single call: atomic enough for line framing
            self._entries[key] = response

    def stats(self) -> dict[str, int]:
        return {"hits": self.hits, "misses": self.misses, "size": len(self._entries)}


def cached_call(
    cache: ResponseCache | None,
    kind: str,
    payload: Mapping[str, Any],
    fetch: Callable[[], Any],
) -> Any:
    """Serve payload's response from cache, fetching and appending on miss."""
    if cache is None:
        return fetch()
    key = request_key(kind, payload)
    hit = cache.get(key)
    if hit is not None:
        return hit
    response = fetch()
    cache.put(key, payload, response)
    return response
