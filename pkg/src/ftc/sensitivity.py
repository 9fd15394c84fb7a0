"""Input-ablation harness: score explanation sets from degraded generators.

One explanation set per generation condition (the full-input generator plus
the three single-input ablations), each a JSONL file of
{"instance_id": ..., "explanation": ...}. Every condition is run through the
standard pipeline against the same dataset, and the result is one table row
per condition. Rater labels are stripped for these runs: they rated the
dataset's own explanations, not the generated ones.

The optional METEOR column compares each generated explanation against the
dataset's explanation for the same instance, so the full-input condition
scores near 1 by construction and the ablations fall off with text drift.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import ConfigError, Instance, parse_instances
from .metrics import meteor
from .pipeline import PipelineConfig, Report, build_model, run_pipeline

log = logging.getLogger(__name__)

CONDITIONS = ("full_yxu", "y_only", "x_only", "u_only")


@dataclass(frozen=True)
class ConditionedExplanationSet:
    condition: str
    explanations: dict[str, str]  # instance id -> generated explanation

    def __post_init__(self) -> None:
        if self.condition not in CONDITIONS:
            raise ConfigError(
                f"unknown condition {self.condition!r} (expected one of {CONDITIONS})"
            )
        if not self.explanations:
            raise ConfigError(f"condition {self.condition} has no explanations")


def load_condition_file(condition: str, path: str | Path) -> ConditionedExplanationSet:
    explanations: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                explanations[str(doc["instance_id"])] = str(doc["explanation"])
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"{path} line {line_no}: {exc}")
    return ConditionedExplanationSet(condition, explanations)


@dataclass(frozen=True)
class SensitivityRow:
    condition: str
    n_scored: int
    n_skipped: int
    ftc_delta: float | None
    ftc_kl: float | None
    ftc_wasserstein: float | None
    las: float | None
    lra: float | None
    meteor: float | None


@dataclass(frozen=True)
class SensitivityReport:
    rows: tuple[SensitivityRow, ...]  # one per condition, in CONDITIONS order
    config_hash: str


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def sensitivity_report(
    sets: Sequence[ConditionedExplanationSet],
    config: PipelineConfig,
    model=None,
    instances: Sequence[Instance] | None = None,
) -> SensitivityReport:
    """Run the pipeline once per condition and tabulate the means.

    All four conditions must be present and must cover the same instance ids;
    ids must exist in the dataset. The table is a pure function of the sets,
    the cache contents, and the config.
    """
    by_condition: dict[str, ConditionedExplanationSet] = {}
    for item in sets:
        if item.condition in by_condition:
            raise ConfigError(f"condition {item.condition} given twice")
        by_condition[item.condition] = item
    missing = [c for c in CONDITIONS if c not in by_condition]
    if missing:
        raise ConfigError(f"missing conditions: {missing}")

    ids = set(by_condition[CONDITIONS[0]].explanations)
    for condition in CONDITIONS[1:]:
        other = set(by_condition[condition].explanations)
        if other != ids:
            diff = sorted(ids.symmetric_difference(other))[:5]
            raise ConfigError(
                f"condition {condition} covers different instance ids "
                f"(first differences: {diff})"
            )

    config = config.resolve()
    if instances is None:
        if not config.dataset_path:
            raise ConfigError("no dataset: pass instances or set dataset_path")
        with open(config.dataset_path, "rb") as fh:
            result = parse_instances(fh, config.dataset_format)
        for err in result.errors:
            log.warning("dataset %s: %s", config.dataset_path, err)
        instances = result.instances
    known = {inst.id for inst in instances}
    unknown = sorted(ids - known)
    if unknown:
        raise ConfigError(f"conditions name unknown instance ids: {unknown[:5]}")
    covered = [inst for inst in instances if inst.id in ids]
    if model is None:
        model = build_model(config)

    rows: list[SensitivityRow] = []
    reports: dict[str, Report] = {}
    for condition in CONDITIONS:
        texts = by_condition[condition].explanations
        replaced = [
            dataclasses.replace(
                inst, explanation=texts[inst.id], annotator_labels=None
            )
            for inst in covered
        ]
        report = run_pipeline(config, model=model, instances=replaced)
        reports[condition] = report
        agg = report.aggregates
        rows.append(
            SensitivityRow(
                condition=condition,
                n_scored=agg.n_scored,
                n_skipped=agg.n_skipped,
                ftc_delta=agg.mean_scores.get("delta"),
                ftc_kl=agg.mean_scores.get("kl"),
                ftc_wasserstein=agg.mean_scores.get("wasserstein"),
                las=None if agg.las is None else agg.las.las,
                lra=agg.lra,
                meteor=_mean(
                    [meteor(texts[inst.id], [inst.explanation]) for inst in covered]
                ),
            )
        )
    return SensitivityReport(
        rows=tuple(rows), config_hash=reports[CONDITIONS[0]].config_hash
    )


# --- rendering ----------------------------------------------------------------

_COLUMNS = (
    "condition", "n_scored", "n_skipped",
    "ftc_kl", "ftc_delta", "ftc_wasserstein", "las", "lra", "meteor",
)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _row_cells(row: SensitivityRow) -> list[str]:
    return [_fmt(getattr(row, column)) for column in _COLUMNS]


def render_sensitivity(report: SensitivityReport, fmt: str = "tsv") -> str:
    if fmt == "tsv":
        lines = ["\t".join(_COLUMNS)]
        lines.extend("\t".join(_row_cells(row)) for row in report.rows)
        return "\n".join(lines) + "\n"
    if fmt == "json":
        def cell(row: SensitivityRow, column: str) -> Any:
            value = getattr(row, column)
            return round(value, 4) if isinstance(value, float) else value

        doc = {
            "config_hash": report.config_hash,
            "rows": [
                {column: cell(row, column) for column in _COLUMNS}
                for row in report.rows
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        lines = [
            "# Sensitivity to generator inputs",
            "",
            f"Config `{report.config_hash}`.",
            "",
            "| " + " | ".join(_COLUMNS) + " |",
            "|" + "|".join(" --- " for _ in _COLUMNS) + "|",
        ]
        lines.extend("| " + " | ".join(_row_cells(row)) + " |" for row in report.rows)
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def render_sensitivity_figure(
    report: SensitivityReport, out_dir: str | Path, stem: str = "sensitivity"
) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    names = {"kl": "ftc_kl", "delta": "ftc_delta", "wasserstein": "ftc_wasserstein"}
    width = 0.8 / len(names)
    for i, (variant, attr) in enumerate(names.items()):
        values = [getattr(row, attr) for row in report.rows]
        xs = [j + i * width for j in range(len(report.rows))]
        ax.bar(
            xs,
            [0.0 if v is None else v for v in values],
            width=width,
            label=f"FTC-{variant}",
        )
    ax.set_xticks([j + width for j in range(len(report.rows))])
    ax.set_xticklabels([row.condition for row in report.rows])
    ax.set_ylabel("mean score")
    ax.set_title("Faithfulness by generation condition")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.legend()
    path = out_dir / f"{stem}.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def write_sensitivity(
    report: SensitivityReport,
    out_dir: str | Path,
    formats: Sequence[str] = ("tsv", "json", "markdown"),
    figures: bool = True,
    stem: str = "sensitivity",
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    extensions = {"tsv": ".tsv", "json": ".json", "markdown": ".md"}
    written: list[Path] = []
    for fmt in formats:
        path = out_dir / f"{stem}{extensions[fmt]}"
        path.write_text(render_sensitivity(report, fmt), encoding="utf-8")
        written.append(path)
    if figures:
        written.append(render_sensitivity_figure(report, out_dir, stem))
    return written
