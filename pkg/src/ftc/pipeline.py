"""Batch pipeline: derive branches, rewrite, classify, score, aggregate.

One run turns a dataset into a Report. Per instance the flow is

    derive (gold label -> branches with target labels)
    rewrite (regex / few-shot generator / hybrid / precomputed file)
    classify the counterfactual
    score every faithfulness variant against the target label

plus, when enabled, four conditioned classify calls on the original
hypothesis to fill the LAS and LRA input tables.

Instances partition into exactly one of three statuses: scored (counts toward
the aggregate means), skipped (rewrite produced nothing; reason recorded), or
filtered (rater majority disagreed with the derived target; still classified
and scored so the agreement/disagreement rank-sum has both groups, but kept
out of the headline means).
"""
from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import (
    Branch,
    ConfigError,
    CounterfactualRecord,
    DatasetFormatConfig,
    Instance,
    LabelDistribution,
    NLILabel,
    filter_consistent,
    parse_instances,
)
from .freelogic import derive_counterfactual_labels
from .metrics import (
    FTC_VARIANTS,
    LASInputs,
    LASResult,
    LRAInputs,
    MetricConfig,
    las_scores,
    lra_score,
    score_all_variants,
)
from .modelio.cache import ResponseCache
from .modelio.client import (
    ENV_CACHE_DIR,
    ENV_CLASSIFIER_URL,
    ENV_GENERATOR_URL,
    ModelClient,
)
from .modelio.protocol import ClassifyRequest, canonical_json
from .rewrite import (
    DEFAULT_PRIMES_PER_LABEL,
    DEFAULT_WORD_BUDGET,
    PatternBank,
    PromptSet,
    RewriteOutcome,
    fsp_rewrite,
    regex_rewrite,
)
from .stats import KappaResult, RankSumResult, fleiss_kappa, rank_sum

log = logging.getLogger(__name__)

MODES = ("regex", "fsp", "hybrid", "external")

DEFAULT_COLUMNS: dict[str, str | list[str]] = {
    "id": "id",
    "premise_ref": "premise_ref",
    "hypothesis": "hypothesis",
    "gold_label": "gold_label",
    "explanation": "explanation",
    "annotator_labels": "annotator_labels",
}


def default_dataset_format(fmt: str = "jsonl") -> DatasetFormatConfig:
    return DatasetFormatConfig(format=fmt, columns=dict(DEFAULT_COLUMNS))


@dataclass
class PipelineConfig:
    """Everything a run depends on; hashed into the report for replay checks.

    classifier_url / generator_url / cache_dir yield to the FTC_CLASSIFIER_URL,
    FTC_GENERATOR_URL and FTC_CACHE_DIR environment variables when those are
    set (resolve() applies them).
    """

    dataset_path: str | None = None
    dataset_format: DatasetFormatConfig = field(default_factory=default_dataset_format)
    mode: str = "hybrid"
    classifier_url: str | None = None
    generator_url: str | None = None
    cache_dir: str | None = None
    metric: MetricConfig = field(default_factory=MetricConfig)
    patterns_path: str | None = None
    prompts_path: str | None = None
    external_path: str | None = None
    seed: int = 0
    jobs: int = 4
    stem_match: bool = True
    noise_sigma: float = 0.0
    simulate: bool = False
    lra_noise_sigma: float = 0.3
    word_budget: int = DEFAULT_WORD_BUDGET
    primes_per_label: int = DEFAULT_PRIMES_PER_LABEL
    max_tokens: int = 64

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown rewrite mode {self.mode!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.noise_sigma < 0 or self.lra_noise_sigma < 0:
            raise ConfigError("noise levels must be >= 0")
        if self.mode == "external" and not self.external_path:
            raise ConfigError("external mode needs external_path")

    _KEYS = (
        "dataset_path", "dataset_format", "mode", "classifier_url",
        "generator_url", "cache_dir", "metric", "patterns_path",
        "prompts_path", "external_path", "seed", "jobs", "stem_match",
        "noise_sigma", "simulate", "lra_noise_sigma", "word_budget",
        "primes_per_label", "max_tokens",
    )

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "PipelineConfig":
        unknown = sorted(set(doc) - set(cls._KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs: dict[str, Any] = dict(doc)
        if "dataset_format" in kwargs:
            kwargs["dataset_format"] = DatasetFormatConfig.from_json(
                kwargs["dataset_format"]
            )
        if "metric" in kwargs:
            m = kwargs["metric"]
            kwargs["metric"] = MetricConfig(
                alpha=float(m.get("alpha", 0.5)),
                prob_floor=float(m.get("prob_floor", 1e-12)),
            )
        return cls(**kwargs)

    def to_json(self) -> dict[str, Any]:
        doc = {key: getattr(self, key) for key in self._KEYS}
        doc["dataset_format"] = self.dataset_format.to_json()
        doc["metric"] = {
            "alpha": self.metric.alpha,
            "prob_floor": self.metric.prob_floor,
        }
        return doc

    def resolve(self) -> "PipelineConfig":
        """Apply environment overrides and check referenced files exist."""
        resolved = replace(
            self,
            classifier_url=os.environ.get(ENV_CLASSIFIER_URL) or self.classifier_url,
            generator_url=os.environ.get(ENV_GENERATOR_URL) or self.generator_url,
            cache_dir=os.environ.get(ENV_CACHE_DIR) or self.cache_dir,
        )
        for label, path in (
            ("dataset_path", resolved.dataset_path),
            ("patterns_path", resolved.patterns_path),
            ("prompts_path", resolved.prompts_path),
            ("external_path", resolved.external_path),
        ):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{label} {path!r} does not exist")
        return resolved

    def fingerprint(self) -> str:
        digest = hashlib.sha256(canonical_json(self.to_json()).encode())
        return digest.hexdigest()[:16]


# --- results ----------------------------------------------------------------

STATUSES = ("scored", "skipped", "filtered")


@dataclass(frozen=True)
class RowResult:
    """One counterfactual record's outcome (or one skip marker)."""

    instance_id: str
    gold_label: NLILabel
    status: str
    branch: Branch | None = None
    x_cf: str | None = None
    y_cf: NLILabel | None = None
    provenance: str | None = None
    pattern_id: str | None = None
    probs: LabelDistribution | None = None
    scores: dict[str, float] | None = None
    reason: str | None = None


@dataclass(frozen=True)
class Aggregates:
    n_instances: int
    n_scored: int
    n_skipped: int
    n_filtered: int
    mean_scores: dict[str, float | None]
    class_means: dict[str, dict[str, float | None]]
    rank_sums: dict[str, dict[str, RankSumResult | None]]
    kappa: KappaResult | None
    las: LASResult | None
    lra: float | None


@dataclass(frozen=True)
class Report:
    rows: tuple[RowResult, ...]
    aggregates: Aggregates
    config_hash: str
    # diagnostics only: replaying from a warm cache must reproduce the
    # rendered report byte for byte, and hit counts differ by definition
    cache_stats: dict[str, int] | None = None


# --- model plumbing ---------------------------------------------------------


def build_model(config: PipelineConfig) -> ModelClient:
    if not config.classifier_url:
        raise ConfigError(
            f"no classifier endpoint: set classifier_url or {ENV_CLASSIFIER_URL}"
        )
    if config.mode in ("fsp", "hybrid") and not config.generator_url:
        raise ConfigError(
            f"mode {config.mode} needs a generator endpoint: set generator_url "
            f"or {ENV_GENERATOR_URL}"
        )
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    return ModelClient(
        classifier_url=config.classifier_url,
        generator_url=config.generator_url,
        cache=cache,
        max_in_flight=config.jobs,
    )


def load_external_records(
    path: str | Path,
) -> dict[str, dict[Branch, str]]:
    """Read precomputed counterfactuals: JSONL {instance_id, branch, x_cf}."""
    import json

    table: dict[str, dict[Branch, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                instance_id = str(doc["instance_id"])
                branch = Branch(doc.get("branch", "main"))
                x_cf = str(doc["x_cf"])
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"bad external record on line {line_no}: {exc}")
            table.setdefault(instance_id, {})[branch] = x_cf
    return table


def _external_outcome(
    instance: Instance, table: Mapping[str, Mapping[Branch, str]]
) -> RewriteOutcome:
    provided = table.get(instance.id)
    if not provided:
        return RewriteOutcome((), "no-external-counterfactual")
    records = []
    for branch, y_cf in derive_counterfactual_labels(instance.gold_label):
        if branch not in provided:
            return RewriteOutcome((), f"incomplete-external:{branch.value}")
        records.append(
            CounterfactualRecord(
                instance_id=instance.id,
                branch=branch,
                x_cf=provided[branch],
                y_cf=y_cf,
                provenance="human",
            )
        )
    return RewriteOutcome(tuple(records))


# --- per-instance work ------------------------------------------------------


@dataclass(frozen=True)
class _InstanceResult:
    instance: Instance
    outcome: RewriteOutcome
    probs: tuple[LabelDistribution, ...] = ()
    scores: tuple[dict[str, float], ...] = ()
    las_row: LASInputs | None = None
    lra_row: LRAInputs | None = None


def _rewrite(
    instance: Instance,
    config: PipelineConfig,
    model,
    bank: PatternBank,
    prompts: PromptSet,
    external: Mapping[str, Mapping[Branch, str]] | None,
) -> RewriteOutcome:
    if config.mode == "external":
        return _external_outcome(instance, external or {})
    if config.mode in ("regex", "hybrid"):
        outcome = regex_rewrite(instance, bank, config.stem_match)
        if outcome.failure is None or config.mode == "regex":
            return outcome
    return fsp_rewrite(
        instance,
        model,
        prompts,
        budget_words=config.word_budget,
        max_tokens=config.max_tokens,
    )


def _argmax(model, request: ClassifyRequest) -> NLILabel:
    return model.classify(request).argmax()


def _simulation_rows(
    instance: Instance, config: PipelineConfig, model
) -> tuple[LASInputs, LRAInputs]:
    base = _argmax(
        model, ClassifyRequest(instance.premise_ref, instance.hypothesis, "x")
    )
    with_e = _argmax(
        model,
        ClassifyRequest(
            instance.premise_ref, instance.hypothesis, "x_and_e",
            explanation=instance.explanation,
        ),
    )
    e_only = _argmax(
        model,
        ClassifyRequest(
            instance.premise_ref, instance.hypothesis, "e_only",
            explanation=instance.explanation,
        ),
    )
    noised = _argmax(
        model,
        ClassifyRequest(
            instance.premise_ref, instance.hypothesis, "x",
            noise_sigma=config.lra_noise_sigma,
        ),
    )
    gold = instance.gold_label
    correct_with_x = int(base == gold)
    correct_with_x_and_e = int(with_e == gold)
    las_row = LASInputs(
        correct_with_x_and_e=correct_with_x_and_e,
        correct_with_x=correct_with_x,
        leak_k=int(e_only == gold),
    )
    lra_row = LRAInputs(
        f=int(noised == base),
        z=correct_with_x_and_e - correct_with_x,
    )
    return las_row, lra_row


def _process_instance(
    instance: Instance,
    config: PipelineConfig,
    model,
    bank: PatternBank,
    prompts: PromptSet,
    external: Mapping[str, Mapping[Branch, str]] | None,
) -> _InstanceResult:
    outcome = _rewrite(instance, config, model, bank, prompts, external)
    probs: list[LabelDistribution] = []
    scores: list[dict[str, float]] = []
    for record in outcome.records:
        dist = model.classify(
            ClassifyRequest(
                instance.premise_ref,
                record.x_cf,
                "x",
                noise_sigma=config.noise_sigma or None,
            )
        )
        probs.append(dist)
        scores.append(score_all_variants(dist, record.y_cf, config.metric))
    las_row = lra_row = None
    if config.simulate:
        las_row, lra_row = _simulation_rows(instance, config, model)
    return _InstanceResult(
        instance, outcome, tuple(probs), tuple(scores), las_row, lra_row
    )


# --- aggregation ------------------------------------------------------------


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _kappa(instances: Sequence[Instance]) -> KappaResult | None:
    counts = [len(i.annotator_labels) for i in instances if i.annotator_labels]
    if not counts:
        return None
    raters = max(set(counts), key=counts.count)
    if raters < 2:
        return None
    rows = []
    for inst in instances:
        labels = inst.annotator_labels
        if not labels or len(labels) != raters:
            continue
        rows.append([sum(1 for l in labels if l == cat) for cat in NLILabel])
    dropped = len(counts) - len(rows)
    if dropped:
        log.warning("kappa: dropped %d instances with rater count != %d",
                    dropped, raters)
    return fleiss_kappa(rows, raters)


def _aggregate(
    instances: Sequence[Instance],
    results: Sequence[_InstanceResult],
    filtered: Mapping[str, str],
    config: PipelineConfig,
) -> Aggregates:
    # instance-level score: the mean over that instance's branch rows
    inst_scores: dict[str, dict[str, float]] = {}
    for res in results:
        if not res.scores:
            continue
        inst_scores[res.instance.id] = {
            variant: _mean([s[variant] for s in res.scores])
            for variant in FTC_VARIANTS
        }

    scored_ids = [
        r.instance.id
        for r in results
        if r.scores and r.instance.id not in filtered
    ]
    n_skipped = sum(1 for r in results if not r.outcome.records)
    by_id = {r.instance.id: r.instance for r in results}

    mean_scores = {
        variant: _mean([inst_scores[i][variant] for i in scored_ids])
        for variant in FTC_VARIANTS
    }
    class_means: dict[str, dict[str, float | None]] = {}
    for variant in FTC_VARIANTS:
        class_means[variant] = {
            label.value: _mean(
                [
                    inst_scores[i][variant]
                    for i in scored_ids
                    if by_id[i].gold_label == label
                ]
            )
            for label in NLILabel
        }

    # agreement group: annotated instances the consistency filter kept;
    # disagreement group: the ones it dropped for an outright majority
    # mismatch (ties and missing annotations join neither group)
    agree: dict[str, list[str]] = {}
    disagree: dict[str, list[str]] = {}
    for res in results:
        inst = res.instance
        if not res.scores or inst.annotator_labels is None:
            continue
        reason = filtered.get(inst.id)
        if reason is None:
            agree.setdefault(inst.gold_label.value, []).append(inst.id)
        elif reason == "mismatch":
            disagree.setdefault(inst.gold_label.value, []).append(inst.id)
    rank_sums: dict[str, dict[str, RankSumResult | None]] = {}
    class_keys = ["all"] + [label.value for label in NLILabel]
    for variant in FTC_VARIANTS:
        rank_sums[variant] = {}
        for key in class_keys:
            if key == "all":
                a_ids = [i for ids in agree.values() for i in ids]
                b_ids = [i for ids in disagree.values() for i in ids]
            else:
                a_ids = agree.get(key, [])
                b_ids = disagree.get(key, [])
            if a_ids and b_ids:
                rank_sums[variant][key] = rank_sum(
                    [inst_scores[i][variant] for i in a_ids],
                    [inst_scores[i][variant] for i in b_ids],
                )
            else:
                rank_sums[variant][key] = None

    las = lra = None
    if config.simulate:
        las_rows = [r.las_row for r in results if r.las_row is not None]
        lra_rows = [r.lra_row for r in results if r.lra_row is not None]
        if las_rows:
            las = las_scores(las_rows)
        if lra_rows:
            lra = lra_score(lra_rows)

    return Aggregates(
        n_instances=len(results),
        n_scored=len(scored_ids),
        n_skipped=n_skipped,
        n_filtered=len(filtered),
        mean_scores=mean_scores,
        class_means=class_means,
        rank_sums=rank_sums,
        kappa=_kappa(instances),
        las=las,
        lra=lra,
    )


# --- entry point ------------------------------------------------------------


def run_pipeline(
    config: PipelineConfig,
    model=None,
    instances: Sequence[Instance] | None = None,
) -> Report:
    """Run the full flow and return the Report.

    model and instances are injectable for in-process use; by default both
    come from the config (HTTP client, dataset file). Rewrite failures skip
    rows; transport failures with a cold cache abort the run.
    """
    config = config.resolve()
    if instances is None:
        if not config.dataset_path:
            raise ConfigError("no dataset: pass instances or set dataset_path")
        with open(config.dataset_path, "rb") as fh:
            result = parse_instances(fh, config.dataset_format)
        for err in result.errors:
            log.warning("dataset %s: %s", config.dataset_path, err)
        instances = result.instances
    if model is None:
        model = build_model(config)

    bank = PatternBank.load(config.patterns_path)
    prompts = PromptSet.load(config.prompts_path, config.primes_per_label)
    external = (
        load_external_records(config.external_path)
        if config.mode == "external"
        else None
    )

    def work(instance: Instance) -> _InstanceResult:
        return _process_instance(instance, config, model, bank, prompts, external)

    if config.jobs == 1 or len(instances) <= 1:
        results = [work(inst) for inst in instances]
    else:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(work, instances))

    # consistency filter, decided on each instance's first branch record
    pairs = [
        (res.instance, res.outcome.records[0])
        for res in results
        if res.outcome.records and res.instance.annotator_labels is not None
    ]
    _, dropped = filter_consistent(pairs)
    filtered = {d.instance.id: d.reason for d in dropped}

    rows: list[RowResult] = []
    for res in results:
        inst = res.instance
        if not res.outcome.records:
            rows.append(
                RowResult(
                    instance_id=inst.id,
                    gold_label=inst.gold_label,
                    status="skipped",
                    reason=res.outcome.failure,
                )
            )
            continue
        status = "filtered" if inst.id in filtered else "scored"
        for record, dist, score in zip(res.outcome.records, res.probs, res.scores):
            rows.append(
                RowResult(
                    instance_id=inst.id,
                    gold_label=inst.gold_label,
                    status=status,
                    branch=record.branch,
                    x_cf=record.x_cf,
                    y_cf=record.y_cf,
                    provenance=record.provenance,
                    pattern_id=record.pattern_id,
                    probs=dist,
                    scores=score,
                    reason=filtered.get(inst.id),
                )
            )

    aggregates = _aggregate(instances, results, filtered, config)
    cache = getattr(model, "cache", None)
    cache_stats = cache.stats() if cache is not None else None
    if cache_stats:
        log.info("cache: %(hits)d hits, %(misses)d misses, %(size)d entries",
                 cache_stats)
    return Report(
        rows=tuple(rows),
        aggregates=aggregates,
        config_hash=config.fingerprint(),
        cache_stats=cache_stats,
    )
