"""Sidecar configuration."""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Mapping


class SidecarError(Exception):
    """Bad configuration, or a model that cannot be loaded at startup."""


_DROPOUT_FIELDS = ("drop_explanation_only", "drop_hypothesis_premise", "drop_all")


@dataclasses.dataclass(frozen=True)
class SidecarConfig:
    """What to serve and on which device.

    The three dropout probabilities are not consulted at inference time;
    requests state their condition explicitly. They ride along so a
    simulator fine-tuning job and the server it feeds can share one config
    file (drop explanations only, hypothesis plus premise, or everything).
    """

    classifier_model: str
    generator_model: str
    device: str = "cpu"
    drop_explanation_only: float = 0.2
    drop_hypothesis_premise: float = 0.4
    drop_all: float = 0.4

    def __post_init__(self) -> None:
        for name in _DROPOUT_FIELDS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SidecarError(f"{name} must be in [0, 1], got {value}")

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "SidecarConfig":
        known = {field.name for field in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise SidecarError(f"unknown config keys: {sorted(unknown)}")
        missing = {"classifier_model", "generator_model"} - set(doc)
        if missing:
            raise SidecarError(f"missing config keys: {sorted(missing)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "SidecarConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)
