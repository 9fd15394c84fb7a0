"""Real-model inference behind the classify/generate wire protocol.

Model input per condition:

    x        premise text and hypothesis
    x_and_e  premise text, hypothesis, and explanation
    e_only   explanation alone; hypothesis and premise never reach the encoder

Every response is reproducible: stochastic paths (embedding noise, sampled
decoding) draw from a generator seeded by a hash of the request body, so
identical requests give identical answers.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
from typing import Any, Mapping

import torch

from .config import SidecarConfig, SidecarError

log = logging.getLogger(__name__)

CONDITIONS = ("x", "x_and_e", "e_only")
LABELS = ("E", "C", "N")
MAX_TOKENS_CAP = 512

_CLASSIFY_FIELDS = {"premise_ref", "hypothesis", "condition", "explanation",
                    "noise_sigma"}
_GENERATE_FIELDS = {"prompt", "max_tokens", "stop", "temperature"}


class RequestError(Exception):
    """Client error carrying the wire envelope code and HTTP status."""

    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.status = status


def _seed_from(body: Mapping[str, Any]) -> int:
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return int.from_bytes(hashlib.sha256(canonical.encode()).digest()[:8], "big")


def _string_field(body: Mapping[str, Any], name: str) -> str:
    value = body.get(name)
    if not isinstance(value, str):
        raise RequestError("bad-request", f"{name} must be a string")
    return value


def _reject_unknown(body: Mapping[str, Any], known: set[str]) -> None:
    unknown = set(body) - known
    if unknown:
        raise RequestError("bad-request", f"unknown fields: {sorted(unknown)}")


def _is_oom(exc: BaseException) -> bool:
    oom_type = getattr(torch, "OutOfMemoryError", None)
    if oom_type is not None and isinstance(exc, oom_type):
        return True
    return "out of memory" in str(exc).lower()


class InferenceService:
    """Loads both models once and serves requests one at a time.

    `_lock` is the inference queue: request threads line up on it, so the
    device sees a single forward pass at a time while clients keep ordinary
    request/response semantics. `last_classify_encoding` exposes the exact
    token ids of the most recent classify call for instrumentation.
    """

    def __init__(self, config: SidecarConfig):
        import transformers

        transformers.utils.logging.disable_progress_bar()
        self.config = config
        self._classifier, self._clf_tokenizer = self._load(
            transformers.AutoModelForSequenceClassification,
            config.classifier_model, "classifier")
        self._generator, self._gen_tokenizer = self._load(
            transformers.AutoModelForCausalLM, config.generator_model,
            "generator")
        id2label = self._classifier.config.id2label
        if sorted(id2label.values()) != sorted(LABELS):
            raise SidecarError(
                f"classifier must label {'/'.join(LABELS)}, "
                f"got {sorted(id2label.values())}")
        self._lock = threading.Lock()
        self.last_classify_encoding: dict[str, Any] | None = None

    def _load(self, auto_class, model_id: str, role: str):
        import transformers

        try:
            model = auto_class.from_pretrained(model_id, local_files_only=True)
            tokenizer = transformers.AutoTokenizer.from_pretrained(
                model_id, local_files_only=True)
        except Exception as exc:
            raise SidecarError(f"cannot load {role} '{model_id}': {exc}") from exc
        model.to(self.config.device)
        model.eval()
        log.info("loaded %s from %s", role, model_id)
        return model, tokenizer

    # --- classify ---------------------------------------------------------------

    def classify(self, body: Mapping[str, Any]) -> dict[str, Any]:
        _reject_unknown(body, _CLASSIFY_FIELDS)
        premise = _string_field(body, "premise_ref")
        hypothesis = _string_field(body, "hypothesis")
        condition = body.get("condition")
        if condition not in CONDITIONS:
            raise RequestError(
                "bad-request", f"condition must be one of {CONDITIONS}")
        explanation = body.get("explanation")
        if explanation is not None and not isinstance(explanation, str):
            raise RequestError("bad-request", "explanation must be a string")
        if condition != "x" and not explanation:
            raise RequestError(
                "bad-request", f"condition {condition} needs an explanation")
        noise_sigma = body.get("noise_sigma")
        if noise_sigma is not None:
            if isinstance(noise_sigma, bool) or not isinstance(
                    noise_sigma, (int, float)) or noise_sigma < 0:
                raise RequestError(
                    "bad-request", "noise_sigma must be a number >= 0")

        if condition == "x":
            segments = (premise, hypothesis)
        elif condition == "x_and_e":
            segments = (premise, f"{hypothesis} {explanation}")
        else:
            segments = (explanation, None)
        batch = self._clf_tokenizer(
            segments[0], segments[1], return_tensors="pt", truncation=True)
        input_ids = batch["input_ids"][0]
        self.last_classify_encoding = {
            "condition": condition,
            "input_ids": input_ids.tolist(),
            "tokens": self._clf_tokenizer.convert_ids_to_tokens(input_ids),
        }
        batch = {key: value.to(self.config.device)
                 for key, value in batch.items()}
        with self._lock, torch.no_grad():
            if noise_sigma:
                embeds = self._classifier.get_input_embeddings()(
                    batch.pop("input_ids"))
                generator = torch.Generator().manual_seed(_seed_from(body))
                noise = torch.empty(
                    embeds.shape).normal_(0.0, float(noise_sigma),
                                          generator=generator)
                logits = self._classifier(
                    inputs_embeds=embeds + noise.to(embeds.device),
                    **batch).logits
            else:
                logits = self._classifier(**batch).logits
        probs = logits.softmax(dim=-1)[0]
        id2label = self._classifier.config.id2label
        return {"probs": {id2label[i]: float(p) for i, p in enumerate(probs)}}

    # --- generate ---------------------------------------------------------------

    def generate(self, body: Mapping[str, Any]) -> dict[str, Any]:
        _reject_unknown(body, _GENERATE_FIELDS)
        prompt = _string_field(body, "prompt")
        if not prompt:
            raise RequestError("bad-request", "prompt must be non-empty")
        max_tokens = body.get("max_tokens")
        if isinstance(max_tokens, bool) or not isinstance(max_tokens, int) \
                or max_tokens < 1:
            raise RequestError("bad-request", "max_tokens must be an int >= 1")
        if max_tokens > MAX_TOKENS_CAP:
            raise RequestError(
                "max-tokens",
                f"max_tokens {max_tokens} exceeds cap {MAX_TOKENS_CAP}")
        stop = body.get("stop", [])
        if not isinstance(stop, list) or any(
                not isinstance(item, str) for item in stop):
            raise RequestError("bad-request", "stop must be a list of strings")
        temperature = body.get("temperature", 0.0)
        if isinstance(temperature, bool) or not isinstance(
                temperature, (int, float)) or temperature < 0:
            raise RequestError("bad-request", "temperature must be >= 0")

        encoded = self._gen_tokenizer(
            prompt, return_tensors="pt", add_special_tokens=False)
        input_ids = encoded["input_ids"].to(self.config.device)
        max_positions = getattr(
            self._generator.config, "max_position_embeddings", 1024)
        eos_id = self._generator.config.eos_token_id
        generator = (torch.Generator().manual_seed(_seed_from(body))
                     if temperature > 0 else None)
        generated: list[int] = []
        with self._lock, torch.no_grad():
            for _ in range(max_tokens):
                window = input_ids[:, -max_positions:]
                logits = self._generator(input_ids=window).logits[0, -1]
                if temperature > 0:
                    weights = (logits / temperature).softmax(dim=-1)
                    next_id = int(torch.multinomial(
                        weights.cpu(), 1, generator=generator))
                else:
                    next_id = int(logits.argmax())
                if eos_id is not None and next_id == eos_id:
                    break
                generated.append(next_id)
                input_ids = torch.cat(
                    [input_ids, torch.tensor([[next_id]],
                                             device=input_ids.device)], dim=1)
                text = self._decode(generated)
                cut = self._stop_cut(text, stop)
                if cut is not None:
                    return {"text": cut}
        text = self._decode(generated)
        return {"text": self._stop_cut(text, stop) or text}

    def _decode(self, token_ids: list[int]) -> str:
        return self._gen_tokenizer.decode(token_ids, skip_special_tokens=True)

    @staticmethod
    def _stop_cut(text: str, stop: list[str]) -> str | None:
        positions = [text.find(seq) for seq in stop if seq and seq in text]
        if not positions:
            return None
        return text[:min(positions)]
