"""Wire protocol for the classifier and generator endpoints.

Both endpoints speak JSON over POST. Servers (mock or real) must honor the
shapes below exactly; response schemas double as the conformance contract for
sidecar implementations.

  POST /v1/classify
    {"premise_ref", "hypothesis", "condition": "x"|"x_and_e"|"e_only",
     "explanation", "noise_sigma"}
    -> {"probs": {"E": float, "C": float, "N": float}}

  POST /v1/generate
    {"prompt", "max_tokens", "stop", "temperature"}
    -> {"text": str}

Errors use {"error": {"code", "message"}} with an HTTP 4xx/5xx status.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..core import LabelDistribution

CLASSIFY_PATH = "/v1/classify"
GENERATE_PATH = "/v1/generate"

CONDITIONS = ("x", "x_and_e", "e_only")


class ProtocolError(ValueError):
    """Response violated the protocol; carries the raw body for diagnosis."""

    def __init__(self, message: str, raw_body: str = ""):
        self.raw_body = raw_body
        super().__init__(message)


class TransportError(ConnectionError):
    """Request could not be completed after retries."""


@dataclass(frozen=True)
class ClassifyRequest:
    premise_ref: str
    hypothesis: str
    condition: str = "x"
    explanation: str | None = None
    noise_sigma: float | None = None

    def __post_init__(self) -> None:
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        if self.condition in ("x_and_e", "e_only") and not self.explanation:
            raise ValueError(
                f"condition {self.condition} requires an explanation"
            )
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def to_wire(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "premise_ref": self.premise_ref,
            "hypothesis": self.hypothesis,
            "condition": self.condition,
        }
        if self.explanation is not None:
            doc["explanation"] = self.explanation
        if self.noise_sigma is not None:
            doc["noise_sigma"] = self.noise_sigma
        return doc

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "ClassifyRequest":
        return cls(
            premise_ref=str(doc.get("premise_ref", "")),
            hypothesis=str(doc.get("hypothesis", "")),
            condition=str(doc.get("condition", "x")),
            explanation=doc.get("explanation"),
            noise_sigma=doc.get("noise_sigma"),
        )


@dataclass(frozen=True)
class GenerateRequest:
    prompt: str
    max_tokens: int
    stop: tuple[str, ...] = field(default_factory=tuple)
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("empty prompt")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        object.__setattr__(self, "stop", tuple(self.stop))

    def to_wire(self) -> dict[str, Any]:
        return {
            "prompt": self.prompt,
            "max_tokens": self.max_tokens,
            "stop": list(self.stop),
            "temperature": self.temperature,
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "GenerateRequest":
        return cls(
            prompt=str(doc.get("prompt", "")),
            max_tokens=int(doc.get("max_tokens", 0)),
            stop=tuple(doc.get("stop", ())),
            temperature=float(doc.get("temperature", 0.0)),
        )


def canonical_json(payload: Any) -> str:
    """Stable rendering: sorted keys, no insignificant whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def request_key(kind: str, payload: Mapping[str, Any]) -> str:
    """Cache key: hash of the endpoint kind plus the canonical request body."""
    digest = hashlib.sha256()
    digest.update(kind.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(canonical_json(payload).encode("utf-8"))
    return digest.hexdigest()


def parse_label_distribution(body: Any, raw: str = "") -> LabelDistribution:
    """Validate a classify response body into a LabelDistribution."""
    if not isinstance(body, Mapping) or "probs" not in body:
        raise ProtocolError("classify response missing 'probs'", raw)
    probs = body["probs"]
    if not isinstance(probs, Mapping):
        raise ProtocolError("'probs' is not an object", raw)
    try:
        return LabelDistribution.from_dict(probs)
    except (ValueError, TypeError) as exc:
        raise ProtocolError(f"bad probability triple: {exc}", raw) from exc


def parse_generate_text(body: Any, raw: str = "") -> str:
    if not isinstance(body, Mapping) or not isinstance(body.get("text"), str):
        raise ProtocolError("generate response missing string 'text'", raw)
    return body["text"]


def error_body(code: str, message: str) -> dict[str, Any]:
    return {"error": {"code": code, "message": message}}


# JSON Schemas shared with sidecar conformance tests.

CLASSIFY_REQUEST_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["premise_ref", "hypothesis", "condition"],
    "properties": {
        "premise_ref": {"type": "string"},
        "hypothesis": {"type": "string"},
        "condition": {"enum": list(CONDITIONS)},
        "explanation": {"type": ["string", "null"]},
        "noise_sigma": {"type": ["number", "null"], "minimum": 0},
    },
    "additionalProperties": False,
}

CLASSIFY_RESPONSE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["probs"],
    "properties": {
        "probs": {
            "type": "object",
            "required": ["E", "C", "N"],
            "properties": {
                "E": {"type": "number", "minimum": 0, "maximum": 1},
                "C": {"type": "number", "minimum": 0, "maximum": 1},
                "N": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        }
    },
    "additionalProperties": False,
}

GENERATE_REQUEST_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["prompt", "max_tokens"],
    "properties": {
        "prompt": {"type": "string", "minLength": 1},
        "max_tokens": {"type": "integer", "minimum": 1},
        "stop": {"type": "array", "items": {"type": "string"}},
        "temperature": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

GENERATE_RESPONSE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["text"],
    "properties": {"text": {"type": "string"}},
    "additionalProperties": False,
}

ERROR_RESPONSE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["error"],
    "properties": {
        "error": {
            "type": "object",
            "required": ["code", "message"],
            "properties": {
                "code": {"type": "string"},
                "message": {"type": "string"},
            },
        }
    },
}


def build_golden_corpus() -> dict[str, Any]:
    """Requests plus response schemas that any conforming server must satisfy.

    The "expect" field marks whether a request must succeed ("ok") or be
    rejected with the error envelope ("error").
    """
    classify_cases: list[dict[str, Any]] = [
        {
            "name": "classify-plain",
            "expect": "ok",
            "body": {
                "premise_ref": "a dog is barking at a girl in a park",
                "hypothesis": "The dog is an animal.",
                "condition": "x",
            },
        },
        {
            "name": "classify-with-explanation",
            "expect": "ok",
            "body": {
                "premise_ref": "a dog is barking at a girl in a park",
                "hypothesis": "The dog is an animal.",
                "condition": "x_and_e",
                "explanation": "A dog is an animal.",
            },
        },
        {
            "name": "classify-explanation-only",
            "expect": "ok",
            "body": {
                "premise_ref": "a dog is barking at a girl in a park",
                "hypothesis": "The dog is an animal.",
                "condition": "e_only",
                "explanation": "A dog is an animal.",
            },
        },
        {
            "name": "classify-noise",
            "expect": "ok",
            "body": {
                "premise_ref": "two men are playing chess",
                "hypothesis": "The men are playing a game.",
                "condition": "x",
                "noise_sigma": 0.25,
            },
        },
        {
            "name": "classify-zero-noise",
            "expect": "ok",
            "body": {
                "premise_ref": "two men are playing chess",
                "hypothesis": "The men are playing a game.",
                "condition": "x",
                "noise_sigma": 0.0,
            },
        },
        {
            "name": "classify-bad-condition",
            "expect": "error",
            "body": {
                "premise_ref": "two men are playing chess",
                "hypothesis": "The men are playing a game.",
                "condition": "everything",
            },
        },
        {
            "name": "classify-e-only-without-explanation",
            "expect": "error",
            "body": {
                "premise_ref": "two men are playing chess",
                "hypothesis": "The men are playing a game.",
                "condition": "e_only",
            },
        },
    ]
    generate_cases: list[dict[str, Any]] = [
        {
            "name": "generate-greedy",
            "expect": "ok",
            "body": {
                "prompt": "Hypothesis: The dog is barking.\nCounterfactual:",
                "max_tokens": 32,
                "stop": ["\n"],
                "temperature": 0.0,
            },
        },
        {
            "name": "generate-no-stop",
            "expect": "ok",
            "body": {
                "prompt": "Say something about dogs.",
                "max_tokens": 8,
            },
        },
        {
            "name": "generate-zero-max-tokens",
            "expect": "error",
            "body": {"prompt": "Hello", "max_tokens": 0},
        },
        {
            "name": "generate-empty-prompt",
            "expect": "error",
            "body": {"prompt": "", "max_tokens": 16},
        },
    ]
    return {
        "version": 1,
        "classify_path": CLASSIFY_PATH,
        "generate_path": GENERATE_PATH,
        "classify": classify_cases,
        "generate": generate_cases,
        "schemas": {
            "classify_request": CLASSIFY_REQUEST_SCHEMA,
            "classify_response": CLASSIFY_RESPONSE_SCHEMA,
            "generate_request": GENERATE_REQUEST_SCHEMA,
            "generate_response": GENERATE_RESPONSE_SCHEMA,
            "error_response": ERROR_RESPONSE_SCHEMA,
        },
    }
