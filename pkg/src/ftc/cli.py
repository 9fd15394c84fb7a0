"""Command line entry point.

Subcommands cover each pipeline stage plus the full run:

  derive       derived branches and target labels per instance, no rewriting
  rewrite      counterfactual construction only; JSONL output feeds `score`
  score        classify and score precomputed counterfactuals
  stats        re-render the aggregate block of an existing JSON report
  sensitivity  condition-ablation table from per-condition explanation files
  serve-mock   local HTTP stand-in for the classifier and generator
  run          the whole flow: rewrite, classify, score, aggregate, render

Exit codes: 0 success, 1 fatal configuration or transport problem, 2 finished
with skipped rows.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .core import ConfigError, ParseAbort, parse_instances
from .freelogic import derive_counterfactual_labels
from .modelio.client import ModelClient
from .modelio.mock_server import MockServer, MockServerConfig
from .modelio.oracle import OracleWorld
from .modelio.protocol import ProtocolError, TransportError
from .pipeline import (
    MODES,
    PipelineConfig,
    build_model,
    default_dataset_format,
    run_pipeline,
)
from .report import FORMATS, render_report, write_report
from .sensitivity import (
    CONDITIONS,
    load_condition_file,
    render_sensitivity,
    sensitivity_report,
    write_sensitivity,
)

log = logging.getLogger(__name__)


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--dataset", help="dataset file (tsv or jsonl)")
    parser.add_argument(
        "--dataset-format",
        help="dataset format config JSON file (default: jsonl with canonical keys)",
    )
    parser.add_argument("--mode", choices=MODES, help="rewrite mode")
    parser.add_argument("--patterns", help="pattern bank JSON file")
    parser.add_argument("--prompts", help="prompt prime bank JSON file")
    parser.add_argument("--external", help="precomputed counterfactual JSONL file")
    parser.add_argument("--cache-dir", help="response cache directory")
    parser.add_argument("--seed", type=int, help="run seed (recorded in the config hash)")
    parser.add_argument("--jobs", type=int, help="parallel instances in flight")
    parser.add_argument(
        "--simulate",
        action="store_true",
        help="gather LAS/LRA inputs with conditioned classify calls",
    )


def _load_pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = PipelineConfig.from_json(json.load(fh))
    else:
        config = PipelineConfig()
    overrides: dict[str, object] = {}
    if args.dataset:
        overrides["dataset_path"] = args.dataset
    if args.dataset_format:
        from .core import DatasetFormatConfig

        with open(args.dataset_format, encoding="utf-8") as fh:
            overrides["dataset_format"] = DatasetFormatConfig.from_json(json.load(fh))
    elif args.dataset and not args.config:
        fmt = "tsv" if args.dataset.endswith((".tsv", ".txt")) else "jsonl"
        overrides["dataset_format"] = default_dataset_format(fmt)
    if args.mode:
        overrides["mode"] = args.mode
    if args.patterns:
        overrides["patterns_path"] = args.patterns
    if args.prompts:
        overrides["prompts_path"] = args.prompts
    if args.external:
        overrides["external_path"] = args.external
        overrides["mode"] = "external"
    if args.cache_dir:
        overrides["cache_dir"] = args.cache_dir
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.simulate:
        overrides["simulate"] = True
    return dataclasses.replace(config, **overrides) if overrides else config


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_dataset(config: PipelineConfig):
    config = config.resolve()
    if not config.dataset_path:
        raise ConfigError("no dataset: pass --dataset or set dataset_path")
    with open(config.dataset_path, "rb") as fh:
        result = parse_instances(fh, config.dataset_format)
    for err in result.errors:
        log.warning("dataset %s: %s", config.dataset_path, err)
    return result.instances


# --- subcommands -------------------------------------------------------------


def _cmd_derive(args: argparse.Namespace) -> int:
    instances = _read_dataset(_load_pipeline_config(args))
    if args.format == "jsonl":
        lines = [
            json.dumps(
                {
                    "instance_id": inst.id,
                    "gold_label": inst.gold_label.value,
                    "branch": branch.value,
                    "y_cf": y_cf.value,
                },
                sort_keys=True,
            )
            for inst in instances
            for branch, y_cf in derive_counterfactual_labels(inst.gold_label)
        ]
    else:
        lines = ["instance_id\tgold_label\tbranch\ty_cf"]
        lines.extend(
            f"{inst.id}\t{inst.gold_label.value}\t{branch.value}\t{y_cf.value}"
            for inst in instances
            for branch, y_cf in derive_counterfactual_labels(inst.gold_label)
        )
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_rewrite(args: argparse.Namespace) -> int:
    from .rewrite import PatternBank, PromptSet, fsp_rewrite, regex_rewrite

    config = _load_pipeline_config(args).resolve()
    if config.mode == "external":
        raise ConfigError("rewrite does not apply in external mode")
    instances = _read_dataset(config)
    bank = PatternBank.load(config.patterns_path)
    prompts = PromptSet.load(config.prompts_path, config.primes_per_label)
    model = None
    if config.mode in ("fsp", "hybrid"):
        if not config.generator_url:
            raise ConfigError(
                f"mode {config.mode} needs a generator endpoint "
                "(generator_url or FTC_GENERATOR_URL)"
            )
        model = ModelClient(generator_url=config.generator_url)

    skipped = 0
    records = []
    for inst in instances:
        outcome = None
        if config.mode in ("regex", "hybrid"):
            outcome = regex_rewrite(inst, bank, config.stem_match)
        if config.mode == "fsp" or (outcome.failure and config.mode == "hybrid"):
            outcome = fsp_rewrite(
                inst, model, prompts,
                budget_words=config.word_budget, max_tokens=config.max_tokens,
            )
        if outcome.failure:
            skipped += 1
            log.warning("skipped %s: %s", inst.id, outcome.failure)
            continue
        records.extend(outcome.records)

    if args.format == "jsonl":
        lines = [
            json.dumps(
                {
                    "instance_id": r.instance_id,
                    "branch": r.branch.value,
                    "x_cf": r.x_cf,
                    "y_cf": r.y_cf.value,
                    "provenance": r.provenance,
                    "pattern_id": r.pattern_id,
                },
                sort_keys=True,
            )
            for r in records
        ]
    else:
        lines = ["instance_id\tbranch\tx_cf\ty_cf\tprovenance\tpattern_id"]
        lines.extend(
            f"{r.instance_id}\t{r.branch.value}\t{r.x_cf}\t{r.y_cf.value}"
            f"\t{r.provenance}\t{r.pattern_id or ''}"
            for r in records
        )
    _emit("\n".join(lines) + "\n", args.out)
    return 2 if skipped else 0


def _run_and_render(config: PipelineConfig, args: argparse.Namespace) -> int:
    report = run_pipeline(config)
    if args.out:
        formats = [args.format] if args.format else list(FORMATS)
        written = write_report(report, args.out, formats=formats)
        for path in written:
            log.info("wrote %s", path)
    else:
        sys.stdout.write(render_report(report, args.format or "tsv"))
    return 2 if report.aggregates.n_skipped else 0


def _cmd_score(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args)
    config = dataclasses.replace(
        config, mode="external", external_path=args.records
    )
    return _run_and_render(config, args)


def _cmd_run(args: argparse.Namespace) -> int:
    return _run_and_render(_load_pipeline_config(args), args)


def _cmd_stats(args: argparse.Namespace) -> int:
    with open(args.report, encoding="utf-8") as fh:
        doc = json.load(fh)
    agg = doc.get("aggregates")
    counts = doc.get("counts")
    if agg is None or counts is None:
        raise ConfigError(f"{args.report} is not a pipeline JSON report")
    if args.format == "json":
        text = json.dumps(
            {"config_hash": doc.get("config_hash"), "counts": counts,
             "aggregates": agg},
            indent=2, sort_keys=True,
        ) + "\n"
    else:
        lines = ["statistic\tvalue"]
        for key, value in counts.items():
            lines.append(f"n_{key}\t{value}")
        for variant, mean in sorted(agg["mean_scores"].items()):
            lines.append(f"mean_{variant}\t{'' if mean is None else mean}")
        for variant, per_class in sorted(agg["class_means"].items()):
            for label, mean in sorted(per_class.items()):
                lines.append(f"mean_{variant}_{label}\t{'' if mean is None else mean}")
        for variant, per_class in sorted(agg["rank_sums"].items()):
            for label, result in sorted(per_class.items()):
                rho = "" if result is None else result["rho"]
                lines.append(f"rho_{variant}_{label}\t{rho}")
        kappa = agg.get("kappa")
        lines.append(f"kappa\t{'' if kappa is None else kappa['kappa']}")
        las = agg.get("las")
        for key in ("las0", "las1", "las"):
            value = None if las is None else las.get(key)
            lines.append(f"{key}\t{'' if value is None else value}")
        lra = agg.get("lra")
        lines.append(f"lra\t{'' if lra is None else lra}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0


def _cmd_sensitivity(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args)
    sets = []
    for item in args.condition or []:
        condition, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(
                f"--condition wants NAME=FILE with NAME one of {CONDITIONS}, "
                f"got {item!r}"
            )
        sets.append(load_condition_file(condition, path))
    report = sensitivity_report(sets, config)
    if args.out:
        formats = [args.format] if args.format else ["tsv", "json", "markdown"]
        for path in write_sensitivity(report, args.out, formats=formats):
            log.info("wrote %s", path)
    else:
        sys.stdout.write(render_sensitivity(report, args.format or "tsv"))
    return 0


def _cmd_serve_mock(args: argparse.Namespace) -> int:
    if args.canned:
        config = MockServerConfig.load(args.canned)
    elif args.world:
        config = MockServerConfig(world=OracleWorld.load(args.world))
    elif args.synthesize:
        from .core import serialize_instances
        from .pipeline import default_dataset_format
        from .worldgen import SynthesisConfig, annotate, synthesize

        world, instances = synthesize(
            SynthesisConfig(n_per_label=args.synthesize, seed=args.seed or 0)
        )
        instances = annotate(world, instances)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "world.json").write_text(
                json.dumps(world.to_json(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            (out / "dataset.jsonl").write_bytes(
                serialize_instances(instances, default_dataset_format())
            )
            log.info("wrote %s and %s", out / "world.json", out / "dataset.jsonl")
        config = MockServerConfig(world=world)
    else:
        raise ConfigError("serve-mock needs --world, --canned, or --synthesize")

    server = MockServer(config, host=args.host, port=args.port)
    server.start()
    print(server.url, flush=True)
    if args.out and args.synthesize:
        demo = {
            "dataset_path": str(Path(args.out) / "dataset.jsonl"),
            "mode": "hybrid",
            "classifier_url": server.url,
            "generator_url": server.url,
            "cache_dir": str(Path(args.out) / "cache"),
        }
        (Path(args.out) / "config.json").write_text(
            json.dumps(demo, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftc",
        description="Counterfactual faithfulness evaluation for NLI explanations.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="derived branches and target labels")
    _add_config_args(p)
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("tsv", "jsonl"), default="tsv")
    p.set_defaults(fn=_cmd_derive)

    p = sub.add_parser("rewrite", help="construct counterfactual hypotheses")
    _add_config_args(p)
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("tsv", "jsonl"), default="jsonl")
    p.set_defaults(fn=_cmd_rewrite)

    p = sub.add_parser("score", help="classify and score precomputed counterfactuals")
    _add_config_args(p)
    p.add_argument("--records", required=True,
                   help="counterfactual JSONL (from `rewrite --format jsonl`)")
    p.add_argument("--out", help="output directory (writes figures too)")
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("stats", help="re-render aggregates from a JSON report")
    p.add_argument("--report", required=True, help="report.json from a run")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("sensitivity", help="generation-condition ablation table")
    _add_config_args(p)
    p.add_argument(
        "--condition", action="append", metavar="NAME=FILE",
        help=f"explanation JSONL per condition; all of {CONDITIONS} required",
    )
    p.add_argument("--out", help="output directory (writes the figure too)")
    p.add_argument("--format", choices=("tsv", "json", "markdown"))
    p.set_defaults(fn=_cmd_sensitivity)

    p = sub.add_parser("serve-mock", help="serve a local mock model endpoint")
    p.add_argument("--world", help="world JSON file for the oracle backend")
    p.add_argument("--canned", help="full mock config JSON (canned responses)")
    p.add_argument("--synthesize", type=int, metavar="N",
                   help="build a synthetic world with N instances per label")
    p.add_argument("--seed", type=int, help="synthesis seed")
    p.add_argument("--out", help="directory for world/dataset/config files")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0, help="0 picks a free port")
    p.set_defaults(fn=_cmd_serve_mock)

    p = sub.add_parser("run", help="full pipeline")
    _add_config_args(p)
    p.add_argument("--out", help="output directory (writes figures too)")
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(fn=_cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except (ConfigError, ParseAbort, TransportError, ProtocolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
