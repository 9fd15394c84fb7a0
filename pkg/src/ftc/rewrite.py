"""Counterfactual construction: pattern-based extraction and few-shot prompting.

Two routes produce CounterfactualRecords from an instance:

  regex_rewrite  span extraction with the pattern bank, then deterministic
                 freelogic edits.
  fsp_rewrite    two generator calls: extract the spans, then transform the
                 hypothesis, both primed with worked examples.

Both are all-or-nothing per instance: any branch failing yields an empty
outcome with a machine-readable reason, so callers can mark the instance
skipped. The shipped pattern bank and prompt sets are replaceable data files,
not fixed behavior.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    CANONICAL_LABEL_NAMES,
    Branch,
    CounterfactualRecord,
    Instance,
    NLILabel,
)
from .freelogic import (
    NoMatchError,
    SpanPair,
    derive_counterfactual_labels,
    neutral_branch_rewrite,
    substitute_span,
)
from .modelio.protocol import GenerateRequest

_ARTICLE_PREFIX = re.compile(r"^(?:a|an|the)\s+", re.IGNORECASE)
_TRAILING_PUNCT = re.compile(r"[.,;:!?]+$")


def _apply_normalize(span: str, steps: Sequence[str]) -> str:
    for step in steps:
        if step == "strip_articles":
            span = _ARTICLE_PREFIX.sub("", span.strip())
        elif step == "strip_punct":
            span = _TRAILING_PUNCT.sub("", span.strip())
        elif step == "collapse_ws":
            span = " ".join(span.split())
        elif step == "lower_initial":
            # Undo sentence-initial capitalization, but leave all-caps and
            # CamelCase tokens alone.
            if span and span[0].isupper():
                first = span.split(" ", 1)[0]
                if first[1:].islower() or len(first) == 1:
                    span = span[0].lower() + span[1:]
        else:
            raise ValueError(f"unknown normalize step {step!r}")
    return span


@dataclass(frozen=True)
class PatternRule:
    id: str
    label: NLILabel
    pattern: str
    normalize: tuple[str, ...] = (
        "strip_articles",
        "strip_punct",
        "collapse_ws",
        "lower_initial",
    )

    def compiled(self) -> re.Pattern:
        return re.compile(self.pattern, re.IGNORECASE)


@dataclass
class PatternBank:
    rules: tuple[PatternRule, ...]
    skip_if: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self._by_label: dict[NLILabel, list[PatternRule]] = {l: [] for l in NLILabel}
        for rule in self.rules:
            compiled = rule.compiled()
            if "A" not in compiled.groupindex or "B" not in compiled.groupindex:
                raise ValueError(f"rule {rule.id}: pattern needs (A) and (B) groups")
            self._by_label[rule.label].append(rule)
        self._skip = tuple(re.compile(p, re.IGNORECASE) for p in self.skip_if)

    @classmethod
    def from_json(cls, doc: Mapping) -> "PatternBank":
        rules = tuple(
            PatternRule(
                id=r["id"],
                label=NLILabel(r["label"]),
                pattern=r["pattern"],
                normalize=tuple(r.get("normalize", PatternRule.normalize)),
            )
            for r in doc["rules"]
        )
        return cls(rules=rules, skip_if=tuple(doc.get("skip_if", ())))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PatternBank":
        if path is None:
            text = (
                resources.files("ftc.data").joinpath("patterns.json").read_text("utf-8")
            )
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_json(json.loads(text))


_DEFAULT_BANK: PatternBank | None = None


def default_bank() -> PatternBank:
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = PatternBank.load()
    return _DEFAULT_BANK


def regex_extract(
    explanation: str, label_class: NLILabel, bank: PatternBank | None = None
) -> SpanPair | None:
    """First-match span extraction for one label class, or None."""
    bank = bank or default_bank()
    text = explanation.strip()
    if any(skip.search(text) for skip in bank._skip):
        return None
    for rule in bank._by_label[label_class]:
        match = rule.compiled().match(text)
        if not match:
            continue
        a = _apply_normalize(match.group("A"), rule.normalize)
        b = _apply_normalize(match.group("B"), rule.normalize)
        if not a or not b:
            continue
        return SpanPair(a=a, b=b, source="regex", pattern_id=rule.id)
    return None


@dataclass(frozen=True)
class RewriteOutcome:
    """Records for every derived branch, or nothing plus a failure reason."""

    records: tuple[CounterfactualRecord, ...]
    failure: str | None = None

    def __post_init__(self) -> None:
        if bool(self.records) == bool(self.failure):
            raise ValueError("outcome needs records xor a failure reason")


def regex_rewrite(
    instance: Instance,
    bank: PatternBank | None = None,
    stem_match: bool = True,
) -> RewriteOutcome:
    """Extract spans with the bank and apply the deterministic edits."""
    pair = regex_extract(instance.explanation, instance.gold_label, bank)
    if pair is None:
        return RewriteOutcome((), "no-pattern-match")
    records: list[CounterfactualRecord] = []
    for branch, y_cf in derive_counterfactual_labels(instance.gold_label):
        try:
            if branch == Branch.MAIN:
                x_cf = substitute_span(instance.hypothesis, pair, stem_match)
            else:
                x_cf = neutral_branch_rewrite(
                    instance.hypothesis, pair, branch, stem_match
                )
        except NoMatchError:
            return RewriteOutcome((), f"span-not-in-hypothesis:{branch.value}")
        records.append(
            CounterfactualRecord(
                instance_id=instance.id,
                branch=branch,
                x_cf=x_cf,
                y_cf=y_cf,
                provenance="regex",
                pattern_id=pair.pattern_id,
            )
        )
    return RewriteOutcome(tuple(records))


# --- few-shot prompting ----------------------------------------------------

_EDIT_INSTRUCTIONS: dict[Branch, str] = {
    Branch.MAIN: "replace A with B",
    Branch.A_BRANCH: "drop B",
    Branch.NEG_B_BRANCH: "drop A and negate B",
}

SPAN_LINE_RE = re.compile(r"A:\s*(?P<a>.+?)\s*\|\s*B:\s*(?P<b>.+?)\s*$")


@dataclass(frozen=True)
class PromptTemplate:
    """Rendering recipe for one prompting stage."""

    stage: str  # "extract" | "transform"
    header: str
    example_pattern: str
    query_pattern: str
    separator: str = "\n###\n"
    stop: str = "\n"

    def render_example(self, fields: Mapping[str, str]) -> str:
        return self.example_pattern.format(**fields)

    def render_query(self, fields: Mapping[str, str]) -> str:
        return self.query_pattern.format(**fields)


EXTRACT_TEMPLATE = PromptTemplate(
    stage="extract",
    header="Extract the two key spans from each explanation.",
    example_pattern="Explanation: {explanation}\nLabel: {label}\nSpans: A: {a} | B: {b}",
    query_pattern="Explanation: {explanation}\nLabel: {label}\nSpans:",
)

TRANSFORM_TEMPLATE = PromptTemplate(
    stage="transform",
    header="Rewrite each hypothesis by applying the edit to its spans.",
    example_pattern=(
        "Hypothesis: {hypothesis}\nSpans: A: {a} | B: {b}\n"
        "Edit: {edit}\nCounterfactual: {counterfactual}"
    ),
    query_pattern=(
        "Hypothesis: {hypothesis}\nSpans: A: {a} | B: {b}\n"
        "Edit: {edit}\nCounterfactual:"
    ),
)

DEFAULT_PRIMES_PER_LABEL = 20
DEFAULT_WORD_BUDGET = 900


@dataclass
class PromptSet:
    """Worked examples per label class, loaded from a JSON data file.

    Each prime is {hypothesis, explanation, a, b, counterfactual}; N-label
    primes additionally carry counterfactual_negb for the second branch.
    """

    primes: dict[NLILabel, tuple[dict, ...]]
    primes_per_label: int = DEFAULT_PRIMES_PER_LABEL

    def __post_init__(self) -> None:
        for label in NLILabel:
            if not self.primes.get(label):
                raise ValueError(f"prompt set has no primes for label {label.value}")
        for prime in self.primes[NLILabel.N]:
            if "counterfactual_negb" not in prime:
                raise ValueError("N-label primes need counterfactual_negb")

    def select(self, label: NLILabel) -> tuple[dict, ...]:
        return self.primes[label][: self.primes_per_label]

    @classmethod
    def from_json(cls, doc: Mapping, primes_per_label: int = DEFAULT_PRIMES_PER_LABEL):
        primes = {
            label: tuple(doc.get(label.value, ()))
            for label in NLILabel
        }
        return cls(primes=primes, primes_per_label=primes_per_label)

    @classmethod
    def load(
        cls,
        path: str | Path | None = None,
        primes_per_label: int = DEFAULT_PRIMES_PER_LABEL,
    ) -> "PromptSet":
        if path is None:
            text = (
                resources.files("ftc.data").joinpath("prompts.json").read_text("utf-8")
            )
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_json(json.loads(text), primes_per_label)


def build_prompt(
    template: PromptTemplate,
    primes: Sequence[Mapping[str, str]],
    query_fields: Mapping[str, str],
    budget_words: int = DEFAULT_WORD_BUDGET,
) -> str:
    """Assemble header + primes + query, trimming trailing primes to budget.

    The query block is never dropped, even when it alone exceeds the budget.
    """
    query = template.render_query(query_fields)

    def assemble(count: int) -> str:
        blocks = [template.header]
        blocks.extend(template.render_example(p) for p in primes[:count])
        blocks.append(query)
        return template.separator.join(blocks)

    for count in range(len(primes), -1, -1):
        prompt = assemble(count)
        if len(prompt.split()) <= budget_words:
            return prompt
    return assemble(0)


def parse_span_line(text: str) -> tuple[str, str] | None:
    line = text.strip().splitlines()[0] if text.strip() else ""
    match = SPAN_LINE_RE.search(line)
    if not match:
        return None
    a, b = match.group("a").strip(), match.group("b").strip()
    if not a or not b:
        return None
    return a, b


def _truncate_at_stop(text: str, stop: str) -> str:
    if stop and stop in text:
        return text[: text.index(stop)]
    return text


def _transform_primes(
    primes: Sequence[Mapping[str, str]], branch: Branch
) -> list[dict[str, str]]:
    rendered = []
    for prime in primes:
        cf = prime.get(
            "counterfactual_negb" if branch == Branch.NEG_B_BRANCH else "counterfactual"
        )
        if not cf:
            continue
        rendered.append(
            {
                "hypothesis": prime["hypothesis"],
                "a": prime["a"],
                "b": prime["b"],
                "edit": _EDIT_INSTRUCTIONS[branch],
                "counterfactual": cf,
            }
        )
    return rendered


def fsp_rewrite(
    instance: Instance,
    generator,
    prompt_set: PromptSet | None = None,
    extract_template: PromptTemplate = EXTRACT_TEMPLATE,
    transform_template: PromptTemplate = TRANSFORM_TEMPLATE,
    budget_words: int = DEFAULT_WORD_BUDGET,
    max_tokens: int = 64,
) -> RewriteOutcome:
    """Two-step generator route: extract the spans, then rewrite per branch.

    Transport failures propagate (they are retryable); everything the
    generator gets wrong turns into an empty outcome with a reason.
    """
    prompt_set = prompt_set or default_prompt_set()
    primes = prompt_set.select(instance.gold_label)
    label_word = CANONICAL_LABEL_NAMES[instance.gold_label]

    extract_prompt = build_prompt(
        extract_template,
        [
            {"explanation": p["explanation"], "label": label_word,
             "a": p["a"], "b": p["b"]}
            for p in primes
        ],
        {"explanation": instance.explanation, "label": label_word},
        budget_words,
    )
    raw = generator.generate(
        GenerateRequest(
            prompt=extract_prompt,
            max_tokens=max_tokens,
            stop=(extract_template.stop,),
            temperature=0.0,
        )
    )
    parsed = parse_span_line(_truncate_at_stop(raw, extract_template.stop))
    if parsed is None:
        return RewriteOutcome((), "unparseable-extraction")
    pair = SpanPair(a=parsed[0], b=parsed[1], source="fsp")

    records: list[CounterfactualRecord] = []
    for branch, y_cf in derive_counterfactual_labels(instance.gold_label):
        prompt = build_prompt(
            transform_template,
            _transform_primes(primes, branch),
            {
                "hypothesis": instance.hypothesis,
                "a": pair.a,
                "b": pair.b,
                "edit": _EDIT_INSTRUCTIONS[branch],
            },
            budget_words,
        )
        raw = generator.generate(
            GenerateRequest(
                prompt=prompt,
                max_tokens=max_tokens,
                stop=(transform_template.stop,),
                temperature=0.0,
            )
        )
        x_cf = _truncate_at_stop(raw, transform_template.stop).strip()
        if not x_cf:
            return RewriteOutcome((), f"empty-generation:{branch.value}")
        records.append(
            CounterfactualRecord(
                instance_id=instance.id,
                branch=branch,
                x_cf=x_cf,
                y_cf=y_cf,
                provenance="fsp",
            )
        )
    return RewriteOutcome(tuple(records))


_DEFAULT_PROMPTS: PromptSet | None = None


def default_prompt_set() -> PromptSet:
    global _DEFAULT_PROMPTS
    if _DEFAULT_PROMPTS is None:
        _DEFAULT_PROMPTS = PromptSet.load()
    return _DEFAULT_PROMPTS


class EchoGenerator:
    """Mock generator that answers prompts with the deterministic-route output.

    Parses the final query block of an extract or transform prompt and
    replies the way a perfectly primed model would: spans come from the
    pattern bank, rewrites from the freelogic edits. Used by the mock
    server's echo backend and by tests comparing the two routes.
    """

    _LABELS_BY_WORD = {v: k for k, v in CANONICAL_LABEL_NAMES.items()}

    def __init__(self, bank: PatternBank | None = None, stem_match: bool = True,
                 separator: str = "\n###\n"):
        self.bank = bank or default_bank()
        self.stem_match = stem_match
        self.separator = separator

    def generate(self, request: GenerateRequest) -> str:
        query = request.prompt.split(self.separator)[-1]
        fields = {}
        for line in query.splitlines():
            if ":" in line:
                key, _, value = line.partition(":")
                fields[key.strip()] = value.strip()
        if query.rstrip().endswith("Spans:"):
            return self._extract(fields)
        if query.rstrip().endswith("Counterfactual:"):
            return self._transform(fields)
        return " ?"

    def _extract(self, fields: dict[str, str]) -> str:
        label = self._LABELS_BY_WORD.get(fields.get("Label", ""))
        explanation = fields.get("Explanation", "")
        if label is None or not explanation:
            return " ?"
        pair = regex_extract(explanation, label, self.bank)
        if pair is None:
            return " ?"
        return f" A: {pair.a} | B: {pair.b}"

    def _transform(self, fields: dict[str, str]) -> str:
        spans = parse_span_line(fields.get("Spans", ""))
        hypothesis = fields.get("Hypothesis", "")
        edit = fields.get("Edit", "")
        if spans is None or not hypothesis:
            return " ?"
        pair = SpanPair(a=spans[0], b=spans[1], source="fsp")
        branch = next(
            (br for br, text in _EDIT_INSTRUCTIONS.items() if text == edit), None
        )
        if branch is None:
            return " ?"
        try:
            if branch == Branch.MAIN:
                x_cf = substitute_span(hypothesis, pair, self.stem_match)
            else:
                x_cf = neutral_branch_rewrite(hypothesis, pair, branch, self.stem_match)
        except NoMatchError:
            return " ?"
        return f" {x_cf}"
