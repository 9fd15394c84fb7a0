"""Deterministic report rendering plus figure output.

Three text formats share one value-formatting rule (floats print with four
decimals, missing values print empty) so converting between them preserves
every printed number:

  tsv       the per-record row table, nothing else
  json      rows plus aggregates, floats rounded to the printed precision
  markdown  the aggregate tables in per-class layout (columns C, E, N)

write_report also renders figures next to the text files: mean scores per
class and per-variant score histograms (a sensitivity run adds its own bar
chart, see sensitivity.py). Figures are presentation output; the determinism
guarantee covers the text formats.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

from .core import NLILabel
from .metrics import FTC_VARIANTS
from .pipeline import Report, RowResult
from .stats import RankSumResult

FORMATS = ("tsv", "json", "markdown")

# markdown per-class column order; "all" is prepended where it applies
CLASS_COLUMNS = ("C", "E", "N")

ROW_COLUMNS = (
    "instance_id", "gold_label", "status", "branch", "x_cf", "y_cf",
    "provenance", "pattern_id", "p_E", "p_C", "p_N",
    "ftc_delta", "ftc_kl", "ftc_wasserstein", "reason",
)

_VARIANT_TITLES = {
    "delta": "FTC-delta",
    "kl": "FTC-kl",
    "wasserstein": "FTC-wasserstein",
}


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, NLILabel):
        return value.value
    return str(value)


def _round(value: float | None) -> float | None:
    return None if value is None else round(value, 4)


def _row_cells(row: RowResult) -> list[str]:
    probs = row.probs.as_dict() if row.probs else {}
    scores = row.scores or {}
    return [
        row.instance_id,
        row.gold_label.value,
        row.status,
        row.branch.value if row.branch else "",
        row.x_cf or "",
        row.y_cf.value if row.y_cf else "",
        row.provenance or "",
        row.pattern_id or "",
        _fmt(probs.get("E")),
        _fmt(probs.get("C")),
        _fmt(probs.get("N")),
        _fmt(scores.get("delta")),
        _fmt(scores.get("kl")),
        _fmt(scores.get("wasserstein")),
        row.reason or "",
    ]


def _rank_sum_json(result: RankSumResult | None) -> dict[str, Any] | None:
    if result is None:
        return None
    return {
        "u_statistic": _round(result.u_statistic),
        "z_score": _round(result.z_score),
        "p_value": _round(result.p_value),
        "rho": _round(result.rho),
        "n_a": result.n_a,
        "n_b": result.n_b,
    }


def report_to_json(report: Report) -> dict[str, Any]:
    """The JSON document; floats carry the same four-decimal precision the
    text formats print."""
    agg = report.aggregates
    rows = []
    for row in report.rows:
        probs = row.probs.as_dict() if row.probs else None
        rows.append(
            {
                "instance_id": row.instance_id,
                "gold_label": row.gold_label.value,
                "status": row.status,
                "branch": row.branch.value if row.branch else None,
                "x_cf": row.x_cf,
                "y_cf": row.y_cf.value if row.y_cf else None,
                "provenance": row.provenance,
                "pattern_id": row.pattern_id,
                "p_E": _round(probs["E"]) if probs else None,
                "p_C": _round(probs["C"]) if probs else None,
                "p_N": _round(probs["N"]) if probs else None,
                "scores": {
                    name: _round(value) for name, value in (row.scores or {}).items()
                }
                or None,
                "reason": row.reason,
            }
        )
    return {
        "config_hash": report.config_hash,
        "counts": {
            "instances": agg.n_instances,
            "scored": agg.n_scored,
            "skipped": agg.n_skipped,
            "filtered": agg.n_filtered,
        },
        "aggregates": {
            "mean_scores": {
                name: _round(agg.mean_scores.get(name)) for name in FTC_VARIANTS
            },
            "class_means": {
                name: {
                    label: _round(agg.class_means[name].get(label))
                    for label in CLASS_COLUMNS
                }
                for name in FTC_VARIANTS
            },
            "rank_sums": {
                name: {
                    key: _rank_sum_json(agg.rank_sums[name].get(key))
                    for key in ("all", *CLASS_COLUMNS)
                }
                for name in FTC_VARIANTS
            },
            "kappa": None
            if agg.kappa is None
            else {
                "kappa": _round(agg.kappa.kappa),
                "category_marginals": [
                    _round(m) for m in agg.kappa.category_marginals
                ],
            },
            "las": None
            if agg.las is None
            else {
                "las0": _round(agg.las.las0),
                "las1": _round(agg.las.las1),
                "las": _round(agg.las.las),
            },
            "lra": _round(agg.lra),
        },
        "rows": rows,
    }


def _render_tsv(report: Report) -> str:
    lines = ["\t".join(ROW_COLUMNS)]
    lines.extend("\t".join(_row_cells(row)) for row in report.rows)
    return "\n".join(lines) + "\n"


def _md_table(header: Sequence[str], body: Sequence[Sequence[str]]) -> list[str]:
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(" --- " for _ in header) + "|",
    ]
    lines.extend("| " + " | ".join(cells) + " |" for cells in body)
    return lines


def _render_markdown(report: Report) -> str:
    agg = report.aggregates
    out = [
        "# Counterfactual faithfulness report",
        "",
        f"Config `{report.config_hash}`. {agg.n_instances} instances: "
        f"{agg.n_scored} scored, {agg.n_skipped} skipped, "
        f"{agg.n_filtered} filtered.",
        "",
        "## Mean scores over scored instances",
        "",
    ]
    body = [
        [
            _VARIANT_TITLES[name],
            _fmt(agg.mean_scores.get(name)),
            *[_fmt(agg.class_means[name].get(label)) for label in CLASS_COLUMNS],
        ]
        for name in FTC_VARIANTS
    ]
    out.extend(_md_table(["metric", "all", *CLASS_COLUMNS], body))
    out += ["", "## Agreement separation (rank-sum rho)", ""]
    body = []
    for name in FTC_VARIANTS:
        cells = [_VARIANT_TITLES[name]]
        for key in ("all", *CLASS_COLUMNS):
            result = agg.rank_sums[name].get(key)
            cells.append("" if result is None else _fmt(result.rho))
        body.append(cells)
    out.extend(_md_table(["metric", "all", *CLASS_COLUMNS], body))
    out += ["", "## Comparison statistics", ""]
    las = agg.las
    body = [
        ["LAS_0", "" if las is None else _fmt(las.las0)],
        ["LAS_1", "" if las is None else _fmt(las.las1)],
        ["LAS", "" if las is None else _fmt(las.las)],
        ["LRA", _fmt(agg.lra)],
        ["Fleiss kappa", "" if agg.kappa is None else _fmt(agg.kappa.kappa)],
    ]
    out.extend(_md_table(["statistic", "value"], body))
    return "\n".join(out) + "\n"


def render_report(report: Report, fmt: str = "tsv") -> str:
    """Render one format; equal reports render to equal bytes."""
    if fmt == "tsv":
        return _render_tsv(report)
    if fmt == "json":
        return json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        return _render_markdown(report)
    raise ValueError(f"unknown format {fmt!r} (expected one of {FORMATS})")


# --- figures ------------------------------------------------------------------

_EXTENSIONS = {"tsv": ".tsv", "json": ".json", "markdown": ".md"}


def render_figures(report: Report, out_dir: str | Path, stem: str = "report") -> list[Path]:
    """Mean-score bars per class and score histograms, as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    agg = report.aggregates

    fig, ax = plt.subplots(figsize=(7, 4))
    groups = ["all", *CLASS_COLUMNS]
    width = 0.8 / len(FTC_VARIANTS)
    for i, name in enumerate(FTC_VARIANTS):
        values = [agg.mean_scores.get(name)] + [
            agg.class_means[name].get(label) for label in CLASS_COLUMNS
        ]
        xs = [j + i * width for j in range(len(groups))]
        ax.bar(
            xs,
            [0.0 if v is None else v for v in values],
            width=width,
            label=_VARIANT_TITLES[name],
        )
    ax.set_xticks([j + width for j in range(len(groups))])
    ax.set_xticklabels(groups)
    ax.set_ylabel("mean score")
    ax.set_title("Mean faithfulness score by class")
    ax.legend()
    ax.axhline(0.0, color="black", linewidth=0.8)
    path = out_dir / f"{stem}_class_means.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    scored = [row for row in report.rows if row.status == "scored" and row.scores]
    fig, axes = plt.subplots(1, len(FTC_VARIANTS), figsize=(11, 3.2))
    for ax, name in zip(axes, FTC_VARIANTS):
        values = [row.scores[name] for row in scored]
        if values:
            ax.hist(values, bins=20)
        ax.set_title(_VARIANT_TITLES[name])
        ax.set_xlabel("score")
    axes[0].set_ylabel("records")
    fig.suptitle("Score distribution over scored records")
    path = out_dir / f"{stem}_histograms.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written


def write_report(
    report: Report,
    out_dir: str | Path,
    formats: Sequence[str] = FORMATS,
    figures: bool = True,
    stem: str = "report",
) -> list[Path]:
    """Write the rendered formats (and figures) into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for fmt in formats:
        path = out_dir / f"{stem}{_EXTENSIONS[fmt]}"
        path.write_text(render_report(report, fmt), encoding="utf-8")
        written.append(path)
    if figures:
        written.extend(render_figures(report, out_dir, stem))
    return written
