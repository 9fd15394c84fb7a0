"""Canonical data types, dataset ingestion, and annotator-vote utilities.

Everything downstream (rewriting, scoring, reporting) speaks in terms of the
types defined here. Parsing is deliberately strict: malformed rows are
collected with their row numbers instead of being silently dropped.
"""
from __future__ import annotations

import enum
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence


class NLILabel(enum.Enum):
    E = "E"
    C = "C"
    N = "N"

    def __repr__(self) -> str:  # terser in test diffs
        return f"NLILabel.{self.name}"


# Canonical label order; argmax ties resolve to the earliest entry.
LABEL_ORDER: tuple[NLILabel, ...] = (NLILabel.E, NLILabel.C, NLILabel.N)

# Long-form names used when serializing datasets.
CANONICAL_LABEL_NAMES: dict[NLILabel, str] = {
    NLILabel.E: "entailment",
    NLILabel.C: "contradiction",
    NLILabel.N: "neutral",
}

DEFAULT_LABEL_ALIASES: dict[str, NLILabel] = {
    "e": NLILabel.E,
    "entailment": NLILabel.E,
    "c": NLILabel.C,
    "contradiction": NLILabel.C,
    "n": NLILabel.N,
    "neutral": NLILabel.N,
}


class Branch(enum.Enum):
    """Which derived counterfactual a record belongs to.

    E and C instances produce a single main branch. N instances split into a
    keep-first-span branch and a negate-second-span branch.
    """

    MAIN = "main"
    A_BRANCH = "A_branch"
    NEG_B_BRANCH = "negB_branch"

    def __repr__(self) -> str:
        return f"Branch.{self.name}"


@dataclass(frozen=True)
class Instance:
    """One dataset row: premise reference, hypothesis, label, explanation."""

    id: str
    premise_ref: str
    hypothesis: str
    gold_label: NLILabel
    explanation: str
    annotator_labels: tuple[NLILabel, ...] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("instance id must be non-empty")
        if not self.hypothesis.strip():
            raise ValueError(f"instance {self.id}: empty hypothesis")
        if not self.explanation.strip():
            raise ValueError(f"instance {self.id}: empty explanation")


@dataclass(frozen=True)
class CounterfactualRecord:
    """A rewritten hypothesis plus the label it is expected to take."""

    instance_id: str
    branch: Branch
    x_cf: str
    y_cf: NLILabel
    provenance: str  # "regex" | "fsp" | "human"
    pattern_id: str | None = None

    _PROVENANCES = ("regex", "fsp", "human")

    def __post_init__(self) -> None:
        if self.provenance not in self._PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not self.x_cf.strip():
            raise ValueError(f"record {self.instance_id}: empty counterfactual")


@dataclass(frozen=True)
class LabelDistribution:
    """Probabilities over (E, C, N). Must sum to 1 within 1e-6."""

    p_e: float
    p_c: float
    p_n: float

    def __post_init__(self) -> None:
        for name, p in (("p_e", self.p_e), ("p_c", self.p_c), ("p_n", self.p_n)):
            if not -1e-9 <= p <= 1.0 + 1e-9:
                raise ValueError(f"{name}={p} outside [0, 1]")
        total = self.p_e + self.p_c + self.p_n
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, expected 1 within 1e-6")

    def prob(self, label: NLILabel) -> float:
        return {NLILabel.E: self.p_e, NLILabel.C: self.p_c, NLILabel.N: self.p_n}[label]

    def argmax(self) -> NLILabel:
        # Ties break toward the earliest label in LABEL_ORDER.
        best = LABEL_ORDER[0]
        for label in LABEL_ORDER[1:]:
            if self.prob(label) > self.prob(best):
                best = label
        return best

    def as_dict(self) -> dict[str, float]:
        return {"E": self.p_e, "C": self.p_c, "N": self.p_n}

    @classmethod
    def from_dict(cls, probs: Mapping[str, float]) -> "LabelDistribution":
        missing = {"E", "C", "N"} - set(probs)
        if missing:
            raise ValueError(f"distribution missing keys {sorted(missing)}")
        return cls(float(probs["E"]), float(probs["C"]), float(probs["N"]))


class ConfigError(ValueError):
    """Dataset or pipeline configuration is unusable (fatal, not per-row)."""


@dataclass(frozen=True)
class RowError:
    row_number: int  # 1-based, counting the header for TSV
    message: str

    def __str__(self) -> str:
        return f"row {self.row_number}: {self.message}"


class ParseAbort(ValueError):
    """Raised when row errors exceed the configured threshold."""

    def __init__(self, errors: list[RowError], threshold: int):
        self.errors = errors
        self.threshold = threshold
        super().__init__(
            f"aborted after {len(errors)} row errors (threshold {threshold}); "
            f"first: {errors[0]}"
        )


@dataclass(frozen=True)
class ParseResult:
    instances: tuple[Instance, ...]
    errors: tuple[RowError, ...]


_REQUIRED_FIELDS = ("id", "premise_ref", "hypothesis", "gold_label", "explanation")


@dataclass
class DatasetFormatConfig:
    """Describes how to read a TSV or JSONL dataset.

    columns maps canonical field names (id, premise_ref, hypothesis,
    gold_label, explanation, annotator_labels) to source column/key names.
    annotator_labels may name a single comma-separated column or a list of
    one-label-per-column names (blank cells allowed).
    """

    format: str  # "tsv" | "jsonl"
    columns: dict[str, str | list[str]]
    label_aliases: dict[str, NLILabel] = field(
        default_factory=lambda: dict(DEFAULT_LABEL_ALIASES)
    )
    max_row_errors: int = 100

    def __post_init__(self) -> None:
        if self.format not in ("tsv", "jsonl"):
            raise ConfigError(f"unknown dataset format {self.format!r}")
        missing = [f for f in _REQUIRED_FIELDS if f not in self.columns]
        if missing:
            raise ConfigError(f"column map missing required fields: {missing}")
        if self.max_row_errors < 0:
            raise ConfigError("max_row_errors must be >= 0")

    def resolve_label(self, raw: str) -> NLILabel:
        key = raw.strip().lower()
        if key not in self.label_aliases:
            raise ValueError(f"unknown label string {raw!r}")
        return self.label_aliases[key]

    @classmethod
    def from_json(cls, doc: Mapping) -> "DatasetFormatConfig":
        aliases = dict(DEFAULT_LABEL_ALIASES)
        for raw, label in doc.get("label_aliases", {}).items():
            aliases[raw.strip().lower()] = NLILabel(label)
        return cls(
            format=doc.get("format", "tsv"),
            columns=dict(doc["columns"]),
            label_aliases=aliases,
            max_row_errors=int(doc.get("max_row_errors", 100)),
        )

    def to_json(self) -> dict:
        return {
            "format": self.format,
            "columns": dict(self.columns),
            "label_aliases": {
                raw: label.value for raw, label in sorted(self.label_aliases.items())
            },
            "max_row_errors": self.max_row_errors,
        }


def _coerce_text(source: bytes | str | IO) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8-sig")
    if isinstance(source, str):
        return source
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8-sig")
    return data


def _parse_annotators(
    config: DatasetFormatConfig, getter, row_desc: str
) -> tuple[NLILabel, ...] | None:
    spec = config.columns.get("annotator_labels")
    if spec is None:
        return None
    raws: list[str] = []
    if isinstance(spec, list):
        for col in spec:
            value = getter(col)
            if value is None:
                continue
            value = str(value).strip()
            if value:
                raws.append(value)
    else:
        value = getter(spec)
        if value is None:
            return None
        if isinstance(value, list):
            raws = [str(v).strip() for v in value if str(v).strip()]
        else:
            raws = [part.strip() for part in str(value).split(",") if part.strip()]
    if not raws:
        return None
    return tuple(config.resolve_label(raw) for raw in raws)


def parse_instances(
    source: bytes | str | IO, config: DatasetFormatConfig
) -> ParseResult:
    """Parse a dataset stream into Instances, collecting per-row errors.

    Raises ConfigError when a required column is absent from the header and
    ParseAbort when row errors exceed config.max_row_errors. Well-formed rows
    always survive bad neighbors.
    """
    text = _coerce_text(source)
    if config.format == "tsv":
        instances, errors = _parse_tsv(text, config)
    else:
        instances, errors = _parse_jsonl(text, config)
    if len(errors) > config.max_row_errors:
        raise ParseAbort(errors, config.max_row_errors)
    return ParseResult(tuple(instances), tuple(errors))


def _build_instance(
    config: DatasetFormatConfig, getter, seen_ids: set[str]
) -> Instance:
    def need(field_name: str) -> str:
        col = config.columns[field_name]
        value = getter(col)
        if value is None:
            raise ValueError(f"missing value for {field_name!r} (column {col!r})")
        return str(value)

    instance_id = need("id").strip()
    if not instance_id:
        raise ValueError("empty id")
    if instance_id in seen_ids:
        raise ValueError(f"duplicate id {instance_id!r}")
    hypothesis = need("hypothesis")
    explanation = need("explanation")
    if not hypothesis.strip():
        raise ValueError("empty hypothesis")
    if not explanation.strip():
        raise ValueError("empty explanation")
    instance = Instance(
        id=instance_id,
        premise_ref=need("premise_ref"),
        hypothesis=hypothesis,
        gold_label=config.resolve_label(need("gold_label")),
        explanation=explanation,
        annotator_labels=_parse_annotators(config, getter, instance_id),
    )
    seen_ids.add(instance_id)
    return instance


def _parse_tsv(
    text: str, config: DatasetFormatConfig
) -> tuple[list[Instance], list[RowError]]:
    lines = text.splitlines()
    if not lines:
        raise ConfigError("empty dataset: no header row")
    header = lines[0].split("\t")
    index = {name: i for i, name in enumerate(header)}

    referenced: list[str] = []
    for field_name in _REQUIRED_FIELDS:
        referenced.append(str(config.columns[field_name]))
    spec = config.columns.get("annotator_labels")
    if isinstance(spec, list):
        referenced.extend(spec)
    elif spec is not None:
        referenced.append(spec)
    missing_cols = [c for c in referenced if c not in index]
    if missing_cols:
        raise ConfigError(f"dataset header missing columns: {missing_cols}")

    instances: list[Instance] = []
    errors: list[RowError] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            errors.append(
                RowError(line_no, f"expected {len(header)} cells, got {len(cells)}")
            )
            continue

        def getter(col: str, _cells=cells) -> str | None:
            return _cells[index[col]]

        try:
            instances.append(_build_instance(config, getter, seen))
        except ValueError as exc:
            errors.append(RowError(line_no, str(exc)))
    return instances, errors


def _parse_jsonl(
    text: str, config: DatasetFormatConfig
) -> tuple[list[Instance], list[RowError]]:
    instances: list[Instance] = []
    errors: list[RowError] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(RowError(line_no, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(doc, dict):
            errors.append(RowError(line_no, "row is not a JSON object"))
            continue

        def getter(col: str, _doc=doc):
            return _doc.get(col)

        try:
            instances.append(_build_instance(config, getter, seen))
        except ValueError as exc:
            errors.append(RowError(line_no, str(exc)))
    return instances, errors


def serialize_instances(
    instances: Iterable[Instance], config: DatasetFormatConfig
) -> bytes:
    """Render instances back to the configured format.

    Labels are written in canonical long form, so parse -> serialize -> parse
    is field-identical.
    """
    if config.format == "tsv":
        return _serialize_tsv(instances, config)
    return _serialize_jsonl(instances, config)


def _annotator_cells(
    instance: Instance, spec: str | list[str] | None
) -> dict[str, str]:
    if spec is None:
        return {}
    labels = instance.annotator_labels or ()
    if isinstance(spec, list):
        cells = {col: "" for col in spec}
        for col, label in zip(spec, labels):
            cells[col] = CANONICAL_LABEL_NAMES[label]
        return cells
    return {spec: ",".join(CANONICAL_LABEL_NAMES[l] for l in labels)}


def _serialize_tsv(
    instances: Iterable[Instance], config: DatasetFormatConfig
) -> bytes:
    spec = config.columns.get("annotator_labels")
    columns: list[str] = [str(config.columns[f]) for f in _REQUIRED_FIELDS]
    if isinstance(spec, list):
        columns.extend(spec)
    elif spec is not None:
        columns.append(spec)
    out = io.StringIO()
    out.write("\t".join(columns) + "\n")
    for inst in instances:
        row = {
            str(config.columns["id"]): inst.id,
            str(config.columns["premise_ref"]): inst.premise_ref,
            str(config.columns["hypothesis"]): inst.hypothesis,
            str(config.columns["gold_label"]): CANONICAL_LABEL_NAMES[inst.gold_label],
            str(config.columns["explanation"]): inst.explanation,
        }
        row.update(_annotator_cells(inst, spec))
        out.write("\t".join(row[c] for c in columns) + "\n")
    return out.getvalue().encode("utf-8")


def _serialize_jsonl(
    instances: Iterable[Instance], config: DatasetFormatConfig
) -> bytes:
    spec = config.columns.get("annotator_labels")
    out = io.StringIO()
    for inst in instances:
        doc = {
            str(config.columns["id"]): inst.id,
            str(config.columns["premise_ref"]): inst.premise_ref,
            str(config.columns["hypothesis"]): inst.hypothesis,
            str(config.columns["gold_label"]): CANONICAL_LABEL_NAMES[inst.gold_label],
            str(config.columns["explanation"]): inst.explanation,
        }
        if spec is not None and inst.annotator_labels is not None:
            if isinstance(spec, list):
                doc.update(_annotator_cells(inst, spec))
            else:
                doc[spec] = [
                    CANONICAL_LABEL_NAMES[l] for l in inst.annotator_labels
                ]
        out.write(json.dumps(doc, ensure_ascii=False) + "\n")
    return out.getvalue().encode("utf-8")


def majority_vote(labels: Sequence[NLILabel]) -> NLILabel | None:
    """Strict-majority label, or None when no label exceeds half the votes."""
    if not labels:
        raise ValueError("majority_vote requires at least one label")
    counts = Counter(labels)
    label, count = counts.most_common(1)[0]
    if count * 2 > len(labels):
        return label
    return None


@dataclass(frozen=True)
class DroppedRecord:
    instance: Instance
    record: CounterfactualRecord
    reason: str  # "unannotated" | "tie" | "mismatch"


def filter_consistent(
    pairs: Sequence[tuple[Instance, CounterfactualRecord]],
) -> tuple[
    list[tuple[Instance, CounterfactualRecord]], list[DroppedRecord]
]:
    """Keep pairs whose annotator majority endorses the derived label.

    Pairs without annotator labels drop with reason "unannotated"; tied votes
    drop with "tie"; a majority disagreeing with y_cf drops with "mismatch".
    Input order is preserved on both sides.
    """
    kept: list[tuple[Instance, CounterfactualRecord]] = []
    dropped: list[DroppedRecord] = []
    for instance, record in pairs:
        if not instance.annotator_labels:
            dropped.append(DroppedRecord(instance, record, "unannotated"))
            continue
        majority = majority_vote(instance.annotator_labels)
        if majority is None:
            dropped.append(DroppedRecord(instance, record, "tie"))
        elif majority == record.y_cf:
            kept.append((instance, record))
        else:
            dropped.append(DroppedRecord(instance, record, "mismatch"))
    return kept, dropped
