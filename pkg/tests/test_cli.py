import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ggae.cli import EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main
from ggae.dataset import TradeGraph


@pytest.fixture
def synth_graph(tmp_path):
    path = tmp_path / "synth.json"
    assert main(["synth", "--n", "20", "--density", "0.3", "--sigma", "0", "--seed", "1", "--output", str(path)]) == 0
    return path


def test_ingest_fixture(tmp_path, data_dir, capsys):
    out = tmp_path / "g.json"
    assert main(["ingest", "--input", str(data_dir / "trade10.csv"), "--output", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["edges"] == 7 and summary["records"] == 10
    assert summary["dropped"] == {"missing_gdp": 1, "nonpositive_distance": 1, "nonpositive_flow": 1}
    assert summary["schema"]["distance"] == "dist"
    g = TradeGraph.from_json(out.read_text())
    assert g.num_edges == 7


def test_ingest_deterministic_bytes(tmp_path, data_dir):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["ingest", "--input", str(data_dir / "trade10.csv"), "--output", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_ingest_empty_file(tmp_path, capsys):
    src = tmp_path / "empty.csv"
    src.write_text("")
    assert main(["ingest", "--input", str(src), "--output", str(tmp_path / "g.json")]) == EXIT_DATA
    assert "empty input" in capsys.readouterr().err


def test_ingest_missing_column(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("iso3_o,iso3_d,gdp_o,gdp_d,tradeflow\nA,B,1,1,1\n")
    assert main(["ingest", "--input", str(src), "--output", str(tmp_path / "g.json")]) == EXIT_DATA
    assert "dist" in capsys.readouterr().err


def test_ingest_custom_schema(tmp_path):
    src = tmp_path / "c.csv"
    src.write_text("o,d,go,gd,km,v\nA,B,10,20,5,2\nB,A,20,10,5,3\n")
    schema = "exporter=o,importer=d,gdp_exporter=go,gdp_importer=gd,distance=km,flow=v"
    out = tmp_path / "g.json"
    assert main(["ingest", "--input", str(src), "--schema", schema, "--output", str(out)]) == 0
    assert TradeGraph.from_json(out.read_text()).num_edges == 2


def test_ingest_missing_input_file(tmp_path):
    assert main(["ingest", "--input", str(tmp_path / "nope.csv"), "--output", str(tmp_path / "g.json")]) == EXIT_DATA


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--graph", "x.json", "--bogus-flag"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == EXIT_USAGE


def test_bad_hyperparameter_is_usage_error(synth_graph):
    assert main(["train", "--graph", str(synth_graph), "--epochs", "0"]) == EXIT_USAGE


def test_scatter_unit_slope(tmp_path, synth_graph):
    out = tmp_path / "s.csv"
    assert main(["scatter", "--graph", str(synth_graph), "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["gravity_term", "log_flow"]
    x = np.array([float(r[0]) for r in rows[1:]])
    y = np.array([float(r[1]) for r in rows[1:]])
    assert len(x) == TradeGraph.from_json(synth_graph.read_text()).num_edges
    slope = np.polyfit(x, y, 1)[0]
    assert abs(slope - 1.0) < 1e-6


def test_scatter_empty_graph_file(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert main(["scatter", "--graph", str(empty), "--out", str(tmp_path / "s.csv")]) == EXIT_DATA
    no_edges = tmp_path / "no_edges.json"
    no_edges.write_text(json.dumps({"nodes": [{"code": "A", "log_gdp": 1.0}], "edges": []}))
    assert main(["scatter", "--graph", str(no_edges), "--out", str(tmp_path / "s.csv")]) == EXIT_DATA


def test_train_echoes_resolved_config(tmp_path, synth_graph, capsys):
    out = tmp_path / "r.json"
    assert main(["train", "--graph", str(synth_graph), "--pattern", "P2", "--epochs", "5", "--runs", "2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["config"] == {
        "pattern": "P2_gcn1_ggae", "learning_rate": 0.01, "epochs": 5, "train_ratio": 0.66,
        "hidden_dim": 16, "mlp_widths": [32, 16], "seed": 0, "train_only_adjacency": True, "center": True,
    }
    assert len(rep["per_run"]) == 2


def test_reproduce_table_smoke_and_determinism(tmp_path, synth_graph):
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        args = ["reproduce-table", "--graph", str(synth_graph), "--runs", "1", "--epochs", "10", "--out", str(out)]
        assert main(args) == EXIT_OK
        outs.append(out)
    docs = [json.loads(p.read_text()) for p in outs]
    for d in docs:
        d.pop("created_at")
    assert docs[0] == docs[1]
    assert len(docs[0]["patterns"]) == 5
    assert outs[0].with_suffix(".txt").read_text() == outs[1].with_suffix(".txt").read_text()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_reproduce_table_divergence_exit_code(tmp_path, synth_graph):
    out = tmp_path / "r.json"
    args = ["reproduce-table", "--graph", str(synth_graph), "--runs", "1", "--epochs", "5", "--lr", "1e200", "--out", str(out)]
    assert main(args) == EXIT_DIVERGED
    doc = json.loads(out.read_text())
    assert any(run["error"] for row in doc["patterns"] for run in row["per_run"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ggae", "synth", "--n", "5", "--output", str(tmp_path / "g.json")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
