from __future__ import annotations

import json
import signal
import subprocess
import sys
import time

import pytest

from ftc.cli import main
from ftc.core import serialize_instances
from ftc.modelio.mock_server import MockServer, MockServerConfig
from ftc.pipeline import default_dataset_format


@pytest.fixture(scope="module")
def server(small_world):
    world, _ = small_world
    with MockServer(MockServerConfig(world=world)) as srv:
        yield srv


@pytest.fixture(scope="module")
def dataset_path(small_world, tmp_path_factory) -> str:
    _, instances = small_world
    path = tmp_path_factory.mktemp("data") / "dataset.jsonl"
    path.write_bytes(serialize_instances(instances, default_dataset_format()))
    return str(path)


def test_derive_writes_a_table(dataset_path, capsys):
    assert main(["derive", "--dataset", dataset_path]) == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0] == "instance_id\tgold_label\tbranch\ty_cf"
    assert any("\tnegB_branch\t" in line for line in lines)


def test_rewrite_then_score_round_trip(dataset_path, server, tmp_path, capsys):
    records = tmp_path / "records.jsonl"
    code = main(
        ["rewrite", "--dataset", dataset_path, "--mode", "regex",
         "--out", str(records), "--format", "jsonl"]
    )
    assert code == 0
    first = json.loads(records.read_text().splitlines()[0])
    assert {"instance_id", "branch", "x_cf", "y_cf"} <= set(first)

    out_dir = tmp_path / "scored"
    code = main(
        ["score", "--dataset", dataset_path, "--records", str(records),
         "--config", _config_file(tmp_path, server), "--out", str(out_dir)]
    )
    assert code == 0
    doc = json.loads((out_dir / "report.json").read_text())
    assert doc["counts"]["scored"] == doc["counts"]["instances"]
    assert doc["aggregates"]["mean_scores"]["delta"] == pytest.approx(1.0)


def _config_file(tmp_path, server) -> str:
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps({"classifier_url": server.url, "generator_url": server.url}),
        encoding="utf-8",
    )
    return str(path)


def test_run_writes_reports_and_figures(dataset_path, server, tmp_path):
    out_dir = tmp_path / "report"
    code = main(
        ["run", "--dataset", dataset_path, "--config",
         _config_file(tmp_path, server), "--out", str(out_dir)]
    )
    assert code == 0
    names = {p.name for p in out_dir.iterdir()}
    assert names == {
        "report.tsv", "report.json", "report.md",
        "report_class_means.png", "report_histograms.png",
    }


def test_run_to_stdout_defaults_to_tsv(dataset_path, server, tmp_path, capsys):
    code = main(
        ["run", "--dataset", dataset_path, "--config",
         _config_file(tmp_path, server), "--mode", "regex"]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("instance_id\t")


def test_run_flags_partial_results(server, tmp_path, capsys):
    dataset = tmp_path / "odd.jsonl"
    rows = [
        {"id": "ok-1", "premise_ref": "scene-e-0000",
         "hypothesis": "The dog is watching the ball.",
         "gold_label": "E", "explanation": "A dog is a type of kind0."},
        {"id": "skip-1", "premise_ref": "scene-e-0000",
         "hypothesis": "The dog is watching the ball.",
         "gold_label": "E", "explanation": "Who knows!"},
    ]
    dataset.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
    code = main(
        ["run", "--dataset", str(dataset), "--config",
         _config_file(tmp_path, server), "--format", "json"]
    )
    assert code == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["counts"]["skipped"] == 1


def test_stats_rerenders_a_report(dataset_path, server, tmp_path, capsys):
    out_dir = tmp_path / "report"
    main(["run", "--dataset", dataset_path, "--config",
          _config_file(tmp_path, server), "--out", str(out_dir),
          "--format", "json"])
    capsys.readouterr()
    code = main(["stats", "--report", str(out_dir / "report.json")])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("statistic\tvalue")
    assert "mean_delta\t1.0" in out


def test_fatal_errors_exit_one(tmp_path, capsys):
    assert main(["run", "--dataset", str(tmp_path / "missing.jsonl")]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["serve-mock"]) == 1
    assert "serve-mock needs" in capsys.readouterr().err
    assert main(["sensitivity", "--condition", "nonsense"]) == 1
    assert "NAME=FILE" in capsys.readouterr().err
    assert main(["stats", "--report", str(tmp_path / "missing.json")]) == 1
    capsys.readouterr()


def test_rewrite_external_mode_is_rejected(dataset_path, tmp_path, capsys):
    records = tmp_path / "r.jsonl"
    records.write_text("", encoding="utf-8")
    code = main(["rewrite", "--dataset", dataset_path,
                 "--external", str(records)])
    assert code == 1
    assert "external" in capsys.readouterr().err


def test_serve_mock_demo_flow(tmp_path):
    # The blocking subcommand runs as a child process: grab the URL it
    # prints, drive one classify call, then interrupt it.
    out_dir = tmp_path / "demo"
    proc = subprocess.Popen(
        [sys.executable, "-m", "ftc.cli", "serve-mock", "--synthesize", "5",
         "--seed", "1", "--out", str(out_dir)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        url = proc.stdout.readline().strip()
        assert url.startswith("http://127.0.0.1:")
        deadline = time.time() + 10
        while time.time() < deadline and not (out_dir / "config.json").exists():
            time.sleep(0.05)
        names = {p.name for p in out_dir.iterdir()}
        assert {"world.json", "dataset.jsonl", "config.json"} <= names
        config = json.loads((out_dir / "config.json").read_text())
        assert config["classifier_url"] == url

        import requests

        response = requests.post(
            url + "/v1/classify",
            json={"premise_ref": "scene-e-0000",
                  "hypothesis": "The dog is watching the ball.",
                  "condition": "x"},
            timeout=5,
        )
        assert response.status_code == 200
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            assert proc.wait(timeout=10) == 0
        except subprocess.TimeoutExpired:
            proc.kill()
            raise


def test_seed_changes_the_config_hash(dataset_path, server, tmp_path, capsys):
    args = ["run", "--dataset", dataset_path, "--config",
            _config_file(tmp_path, server), "--format", "json"]
    main(args + ["--seed", "1"])
    first = json.loads(capsys.readouterr().out)["config_hash"]
    main(args + ["--seed", "2"])
    second = json.loads(capsys.readouterr().out)["config_hash"]
    assert first != second
