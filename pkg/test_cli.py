#!/usr/bin/env python3
"""
End-to-end tests of the command-line stages
"""

import json

import pandas as pd
import pytest

from src.config import Config
from src.ingest import read_point_sequences, read_subject_deltas
from src.main import main
from src.preprocess import read_bis


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    Config(synth_n=40, omega_sweep=[1800, 3600], stable_iters=20).save_yaml(str(path))
    return str(path)


def run(config_file, *argv):
    return main(["-c", config_file, *argv])


def present_bins(path) -> dict:
    return {s.subject_id: int(s.bits.sum()) for s in read_bis(path)}


def test_planted_round_trip(tmp_path, config_file):
    bis = tmp_path / "planted.bis"
    labels = tmp_path / "labels.csv"
    raw = tmp_path / "raw.csv"
    assert run(config_file, "synth", "-o", str(bis), "--labels", str(labels), "--emit-raw", str(raw)) == 0
    assert (tmp_path / "planted.bis.run.json").exists()

    tree = tmp_path / "tree"
    assert run(config_file, "tree", str(bis), "-o", str(tree)) == 0
    assert (tree / "run.json").exists()

    found = tmp_path / "found"
    assert run(config_file, "discover", str(tree), "-o", str(found), "--window", "0:192") == 0
    assert (found / "patterns_0_192.json").exists()
    assert (found / "patterns_0_192.csv").exists()

    report = tmp_path / "report.json"
    code = run(
        config_file, "eval",
        "--clusters", str(found / "clusters_0_192.csv"),
        "--labels", str(labels),
        "--bis", str(bis),
        "--patterns", str(found / "patterns_0_192.json"),
        "-o", str(report),
    )
    assert code == 0
    scores = json.loads(report.read_text())
    assert 0 <= scores["purity"] <= 1
    assert "accuracy_score" in scores

    run_record = json.loads((tmp_path / "report.json.run.json").read_text())
    assert run_record["command"] == "eval"
    assert str(labels) in run_record["inputs"]


def test_raw_trace_through_ingest_and_preprocess(tmp_path, config_file):
    bis = tmp_path / "planted.bis"
    raw = tmp_path / "raw.csv"
    run(config_file, "synth", "-o", str(bis), "--labels", str(tmp_path / "l.csv"), "--emit-raw", str(raw))

    points = tmp_path / "points.txt"
    assert run(config_file, "ingest", str(raw), "-o", str(points)) == 0
    record = json.loads((tmp_path / "points.txt.run.json").read_text())
    assert record["estimated_delta_s"] > 0
    assert record["estimated_delta_s"] % 450 == 0

    out = tmp_path / "again.bis"
    assert run(config_file, "preprocess", str(points), "-o", str(out), "--delta", "900") == 0
    assert len(out.read_text().splitlines()) == 40


def test_sweep_table(tmp_path, config_file):
    bis = tmp_path / "planted.bis"
    labels = tmp_path / "labels.csv"
    run(config_file, "synth", "-o", str(bis), "--labels", str(labels))
    table = tmp_path / "sweep.csv"
    assert run(config_file, "sweep", str(bis), "--labels", str(labels), "-o", str(table)) == 0
    frame = pd.read_csv(table)
    assert len(frame) == 8
    assert set(frame["mode"]) == {"minimizing", "median", "kmeans", "hierarchical"}
    assert {"omega_s", "n_clusters", "accuracy_score", "f_measure"} <= set(frame.columns)
    assert (frame.loc[frame["mode"] == "kmeans", "n_clusters"] <= 4).all()


def test_sweep_table_with_levels(tmp_path, config_file):
    bis = tmp_path / "planted.bis"
    run(config_file, "synth", "-o", str(bis), "--labels", str(tmp_path / "labels.csv"), "--n", "12")
    table = tmp_path / "sweep.csv"
    assert run(config_file, "sweep", str(bis), "--levels", "-o", str(table)) == 0
    frame = pd.read_csv(table)
    assert set(frame["mode"]) == {"minimizing", "median"}
    assert frame["level_accuracy"].notna().all()


def test_empty_point_file_preprocesses_to_nothing(tmp_path, config_file):
    points = tmp_path / "empty.txt"
    points.write_text("")
    out = tmp_path / "empty.bis"
    assert run(config_file, "preprocess", str(points), "-o", str(out)) == 0
    assert out.read_text() == ""


def test_missing_input_reports_json_error(tmp_path, config_file, capsys):
    code = main(["-c", config_file, "--error-json", "tree", str(tmp_path / "nope.bis"), "-o", str(tmp_path / "t")])
    assert code == 2
    error = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert error["exit_code"] == 2


def test_invalid_override_is_an_input_error(tmp_path, config_file):
    code = run(config_file, "tree", str(tmp_path / "x.bis"), "-o", str(tmp_path / "t"), "--omega", "1000")
    assert code == 2


def test_save_config(tmp_path, config_file):
    target = tmp_path / "resolved.yaml"
    assert main(["-c", config_file, "--seed", "9", "--save-config", str(target)]) == 0
    assert Config.from_yaml(str(target)).seed == 9


def test_header_only_trace_ingests_to_nothing(tmp_path, config_file):
    trace = tmp_path / "trace.csv"
    trace.write_text("subject,timestamp\n")
    points = tmp_path / "points.txt"
    assert run(config_file, "ingest", str(trace), "-o", str(points)) == 0
    assert read_point_sequences(points) == []


def test_per_subject_delta_reaches_preprocess(tmp_path, config_file):
    base = 10 * 86400
    trace = tmp_path / "trace.csv"
    rows = [("a", base + t) for t in (0, 600, 1200)] + [("b", base + t) for t in (0, 1500, 3000)]
    pd.DataFrame(rows, columns=["subject", "timestamp"]).to_csv(trace, index=False)

    points = tmp_path / "points.txt"
    assert run(config_file, "ingest", str(trace), "-o", str(points), "--per-subject-delta") == 0
    assert read_subject_deltas(tmp_path / "points.txt.deltas.csv") == {"a": 600, "b": 1500}

    shared = tmp_path / "shared.bis"
    assert run(config_file, "preprocess", str(points), "-o", str(shared)) == 0
    own = tmp_path / "own.bis"
    assert run(config_file, "preprocess", str(points), "-o", str(own), "--per-subject-delta") == 0

    assert present_bins(shared) == {"a": 3, "b": 3}
    assert present_bins(own) == {"a": 3, "b": 7}


def test_per_subject_delta_needs_the_estimates(tmp_path, config_file):
    points = tmp_path / "points.txt"
    points.write_text("a,2000-01-01,0;600\n")
    code = run(config_file, "preprocess", str(points), "-o", str(tmp_path / "x.bis"), "--per-subject-delta")
    assert code == 2
