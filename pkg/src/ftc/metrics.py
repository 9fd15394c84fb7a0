"""Scoring: counterfactual faithfulness variants, LAS, LRA, and METEOR.

All three faithfulness variants share the form 1 - d(prediction, target
label); they differ only in the distance d:

  delta        0/1 disagreement of the argmax
  kl           KL(onehot(target) || prediction) = -ln p(target)
  wasserstein  exact transport cost to the point mass, under a ground
               distance of 1 between E and C and alpha between N and the rest

Scores live in (-inf, 1] for kl and [0, 1] for the other two.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import LabelDistribution, NLILabel
from .stemmer import stem


@dataclass(frozen=True)
class MetricConfig:
    """alpha is the ground distance between N and either decided label."""

    alpha: float = 0.5
    prob_floor: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if not 0.0 < self.prob_floor < 1.0:
            raise ValueError("prob_floor must be in (0, 1)")


DEFAULT_METRIC_CONFIG = MetricConfig()


def ground_distance(l1: NLILabel, l2: NLILabel, config: MetricConfig) -> float:
    if l1 == l2:
        return 0.0
    if {l1, l2} == {NLILabel.E, NLILabel.C}:
        return 1.0
    return config.alpha


def ftc_delta(
    pred: LabelDistribution, y_cf: NLILabel,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> float:
    """1.0 when the argmax hits the derived label, else 0.0."""
    return 1.0 if pred.argmax() == y_cf else 0.0


def ftc_kl(
    pred: LabelDistribution, y_cf: NLILabel,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> float:
    """1 + ln p(y_cf), with the probability floored to keep the log finite."""
    return 1.0 + math.log(max(pred.prob(y_cf), config.prob_floor))


def ftc_wasserstein(
    pred: LabelDistribution, y_cf: NLILabel,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> float:
    """1 minus the transport cost of moving pred onto the point mass at y_cf."""
    cost = sum(
        pred.prob(label) * ground_distance(label, y_cf, config)
        for label in NLILabel
        if label != y_cf
    )
    return 1.0 - cost


FTC_VARIANTS: dict[str, Callable[..., float]] = {
    "delta": ftc_delta,
    "kl": ftc_kl,
    "wasserstein": ftc_wasserstein,
}


@dataclass(frozen=True)
class FTCScore:
    variant: str
    value: float

    def __post_init__(self) -> None:
        if self.variant not in FTC_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


def score_all_variants(
    pred: LabelDistribution, y_cf: NLILabel,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> dict[str, float]:
    return {name: fn(pred, y_cf, config) for name, fn in FTC_VARIANTS.items()}


# --- simulatability (LAS) and robustness agreement (LRA) --------------------


def _check_binary(name: str, value: int) -> int:
    if value not in (0, 1):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")
    return value


@dataclass(frozen=True)
class LASInputs:
    """Binary indicators for one instance.

    correct_with_x_and_e: simulator called with input and explanation
    correct_with_x:       simulator called with input alone
    leak_k:               1 when the explanation alone already gives the
                          label away (the leakage group key)
    """

    correct_with_x_and_e: int
    correct_with_x: int
    leak_k: int

    def __post_init__(self) -> None:
        _check_binary("correct_with_x_and_e", self.correct_with_x_and_e)
        _check_binary("correct_with_x", self.correct_with_x)
        _check_binary("leak_k", self.leak_k)


@dataclass(frozen=True)
class LASResult:
    las0: float | None  # non-leaking group mean advantage
    las1: float | None  # leaking group mean advantage
    las: float | None  # arithmetic mean of the two, when both exist


def las_scores(rows: Sequence[LASInputs]) -> LASResult:
    """Group-balanced explanation advantage.

    Each group's score is the mean of (correct with explanation - correct
    without) over its own rows; a group with no rows is undefined (None), and
    the combined score is undefined with it.
    """
    if not rows:
        raise ValueError("las_scores requires at least one row")
    group0 = [r for r in rows if r.leak_k == 0]
    group1 = [r for r in rows if r.leak_k == 1]

    def advantage(group: list[LASInputs]) -> float | None:
        if not group:
            return None
        return sum(r.correct_with_x_and_e - r.correct_with_x for r in group) / len(
            group
        )

    las0 = advantage(group0)
    las1 = advantage(group1)
    las = None if las0 is None or las1 is None else 0.5 * (las0 + las1)
    return LASResult(las0, las1, las)


@dataclass(frozen=True)
class LRAInputs:
    """f: 1 when the prediction survives input noise. z: simulatability
    delta, correct_with_x_and_e - correct_with_x, in {-1, 0, 1}."""

    f: int
    z: int

    def __post_init__(self) -> None:
        _check_binary("f", self.f)
        if self.z not in (-1, 0, 1):
            raise ValueError(f"z must be -1, 0, or 1, got {self.z!r}")


def lra_score(rows: Sequence[LRAInputs]) -> float:
    """Fraction of rows where robustness f literally equals delta z.

    Integer equality on purpose: z = -1 can never match, f = z = 0 and
    f = z = 1 both count.
    """
    if not rows:
        raise ValueError("lra_score requires at least one row")
    return sum(1 for r in rows if r.f == r.z) / len(rows)


# --- METEOR ------------------------------------------------------------------

_METEOR_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def _meteor_tokens(text: str) -> list[str]:
    return _METEOR_TOKEN_RE.findall(text.lower())


def _align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Exact-match stage then stem-match stage, greedy first-free pairing."""
    matches: list[tuple[int, int]] = []
    used_ref: set[int] = set()
    matched_cand: set[int] = set()
    for i, token in enumerate(cand):
        for j, ref_token in enumerate(ref):
            if j in used_ref:
                continue
            if token == ref_token:
                matches.append((i, j))
                used_ref.add(j)
                matched_cand.add(i)
                break
    cand_stems = [stem(t) for t in cand]
    ref_stems = [stem(t) for t in ref]
    for i, token_stem in enumerate(cand_stems):
        if i in matched_cand:
            continue
        for j, ref_stem in enumerate(ref_stems):
            if j in used_ref:
                continue
            if token_stem == ref_stem:
                matches.append((i, j))
                used_ref.add(j)
                matched_cand.add(i)
                break
    matches.sort()
    return matches


def _chunk_count(matches: list[tuple[int, int]]) -> int:
    chunks = 0
    prev: tuple[int, int] | None = None
    for i, j in matches:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def _meteor_single(cand: list[str], ref: list[str]) -> float:
    if not cand or not ref:
        return 0.0
    matches = _align(cand, ref)
    m = len(matches)
    if m == 0:
        return 0.0
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (_chunk_count(matches) / m) ** 3
    return fmean * (1.0 - penalty)


def meteor(candidate: str, references: Sequence[str]) -> float:
    """Best single-reference score across references.

    Tokenization lowercases and splits punctuation into its own tokens;
    alignment runs an exact stage then a stemmed stage. An empty candidate
    scores 0; an empty reference list is an error.
    """
    if not references:
        raise ValueError("meteor requires at least one reference")
    cand = _meteor_tokens(candidate)
    if not cand:
        return 0.0
    return max(_meteor_single(cand, _meteor_tokens(ref)) for ref in references)
