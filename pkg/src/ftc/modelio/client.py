"""HTTP clients for the classify/generate endpoints, with retry and caching."""
from __future__ import annotations

import logging
import os
import threading
import time
from typing import Any, Callable, Mapping

import requests

from ..core import LabelDistribution
from .cache import ResponseCache, cached_call
from .protocol import (
    CLASSIFY_PATH,
    GENERATE_PATH,
    ClassifyRequest,
    GenerateRequest,
    ProtocolError,
    TransportError,
    parse_generate_text,
    parse_label_distribution,
)

log = logging.getLogger(__name__)

ENV_CLASSIFIER_URL = "FTC_CLASSIFIER_URL"
ENV_GENERATOR_URL = "FTC_GENERATOR_URL"
ENV_CACHE_DIR = "FTC_CACHE_DIR"

DEFAULT_BACKOFF = (0.5, 1.0, 2.0)
DEFAULT_MAX_TOKENS_CAP = 512


class ModelClient:
    """Talks to remote classifier/generator services.

    Retries transient transport failures (3 attempts with 0.5/1/2s backoff by
    default), bounds concurrent in-flight requests, and optionally consults a
    response cache before going to the network.
    """

    def __init__(
        self,
        classifier_url: str | None = None,
        generator_url: str | None = None,
        bearer_token: str | None = None,
        cache: ResponseCache | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 4,
        backoff: tuple[float, ...] = DEFAULT_BACKOFF,
        max_tokens_cap: int = DEFAULT_MAX_TOKENS_CAP,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.classifier_url = classifier_url or os.environ.get(ENV_CLASSIFIER_URL)
        self.generator_url = generator_url or os.environ.get(ENV_GENERATOR_URL)
        self.bearer_token = bearer_token
        self.cache = cache
        self.timeout = timeout
        self.backoff = backoff
        self.max_tokens_cap = max_tokens_cap
        self._session = session or requests.Session()
        self._semaphore = threading.Semaphore(max(1, max_in_flight))
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        return headers

    def _post(self, base_url: str, path: str, payload: Mapping[str, Any]) -> Any:
        url = base_url.rstrip("/") + path
        last_error: Exception | None = None
        for attempt in range(len(self.backoff) + 1):
            if attempt:
                self._sleep(self.backoff[attempt - 1])
            try:
                with self._semaphore:
                    response = self._session.post(
                        url, json=payload, headers=self._headers(),
                        timeout=self.timeout,
                    )
            except requests.RequestException as exc:
                last_error = exc
                log.warning("attempt %d against %s failed: %s", attempt + 1, url, exc)
                continue
            if response.status_code >= 500:
                last_error = TransportError(
                    f"{url} returned {response.status_code}"
                )
                continue
            raw = response.text
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned non-JSON body", raw) from exc
            if response.status_code >= 400:
                raise ProtocolError(
                    f"{url} returned {response.status_code}: "
                    f"{body.get('error', body)}",
                    raw,
                )
            return body
        raise TransportError(f"giving up on {url}: {last_error}")

    def classify(self, request: ClassifyRequest) -> LabelDistribution:
        if not self.classifier_url:
            raise TransportError(
                f"no classifier URL configured (set {ENV_CLASSIFIER_URL})"
            )
        payload = request.to_wire()
        body = cached_call(
            self.cache,
            "classify",
            payload,
            lambda: self._post(self.classifier_url, CLASSIFY_PATH, payload),
        )
        return parse_label_distribution(body)

    def generate(self, request: GenerateRequest) -> str:
        if not self.generator_url:
            raise TransportError(
                f"no generator URL configured (set {ENV_GENERATOR_URL})"
            )
        if request.max_tokens > self.max_tokens_cap:
            raise ValueError(
                f"max_tokens {request.max_tokens} exceeds cap {self.max_tokens_cap}"
            )
        payload = request.to_wire()
        body = cached_call(
            self.cache,
            "generate",
            payload,
            lambda: self._post(self.generator_url, GENERATE_PATH, payload),
        )
        return parse_generate_text(body)


class CachedModel:
    """Adds response caching around any classify/generate backend pair."""

    def __init__(self, cache: ResponseCache, classifier=None, generator=None):
        self.cache = cache
        self._classifier = classifier
        self._generator = generator

    def classify(self, request: ClassifyRequest) -> LabelDistribution:
        if self._classifier is None:
            raise TransportError("no classifier backend")
        payload = request.to_wire()
        body = cached_call(
            self.cache,
            "classify",
            payload,
            lambda: {"probs": self._classifier.classify(request).as_dict()},
        )
        return parse_label_distribution(body)

    def generate(self, request: GenerateRequest) -> str:
        if self._generator is None:
            raise TransportError("no generator backend")
        payload = request.to_wire()
        body = cached_call(
            self.cache,
            "generate",
            payload,
            lambda: {"text": self._generator.generate(request)},
        )
        return parse_generate_text(body)
