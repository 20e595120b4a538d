import csv
import json
import logging
from pathlib import Path

import numpy as np
import pytest

from fairmo.cli import main
from fairmo.data import TOY_SCHEMA, gen_toy, load_csv, split
from fairmo.datasets import load_builtin


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_gen_toy(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(["gen-toy", "--seed", 3, "--n", 150, "--out", a], capsys)[0] == 0
    assert _run(["gen-toy", "--seed", 3, "--n", 150, "--out", b], capsys)[0] == 0
    lines = a.read_text().splitlines()
    assert len(lines) == 601
    assert a.read_bytes() == b.read_bytes()
    groups = {row["group"] for row in csv.DictReader(a.open())}
    assert groups == {"-1", "1"}
    assert len(load_csv(a, TOY_SCHEMA)) == 600


def test_gen_toy_rejects_zero(tmp_path, capsys):
    code, out = _run(["gen-toy", "--n", 0, "--out", tmp_path / "x.csv"], capsys)
    assert code == 2 and "error" in out.err


def test_landscape_small_grid(tmp_path, capsys):
    code, out = _run(["landscape", "--res", 2, "--out", tmp_path], capsys)
    assert code == 0
    for kind in ("htr", "linear", "convex-concave", "indicator"):
        rows = (tmp_path / f"landscape_{kind}.csv").read_text().splitlines()
        assert rows[0] == "a0,a1,value" and len(rows) == 5
    values = [float(r.split(",")[2]) for r in (tmp_path / "landscape_indicator.csv").read_text().splitlines()[1:]]
    assert all(0.0 <= v <= 1.0 for v in values)
    report = json.loads((tmp_path / "fidelity.json").read_text())
    assert set(report["spearman"]) == {"htr", "linear", "convex-concave"}


def test_landscape_htr_ranks_best(tmp_path, capsys):
    code, _ = _run(["landscape", "--res", 40, "--out", tmp_path, "--seed", 1], capsys)
    rho = json.loads((tmp_path / "fidelity.json").read_text())["spearman"]
    assert code == 0
    assert rho["htr"] > rho["linear"] and rho["htr"] > rho["convex-concave"]


@pytest.mark.parametrize("flag", [["--a0", "3:1"], ["--a1", "x"], ["--relaxations", "cubic"], ["--res", "1"]])
def test_landscape_invalid(tmp_path, capsys, flag):
    assert _run(["landscape", "--out", tmp_path, *flag], capsys)[0] == 2


def _front(tmp_path, text):
    path = tmp_path / "front.csv"
    path.write_text(text)
    return path


def test_pareto_single_point(tmp_path, capsys):
    code, out = _run(["pareto", "--front", _front(tmp_path, "acc,fair\n0.5,0.5\n")], capsys)
    assert code == 0
    assert json.loads(out.out) == {"hv": 0.25, "sp": 0.0, "selected_index": 0}


def test_pareto_two_points(tmp_path, capsys):
    code, out = _run(["pareto", "--front", _front(tmp_path, "acc,fair\n0.6,0.4\n0.4,0.6\n")], capsys)
    assert json.loads(out.out)["hv"] == pytest.approx(0.32, abs=1e-12)


def test_pareto_drops_dominated(tmp_path, capsys, caplog):
    path = _front(tmp_path, "acc,fair,checkpoint\n0.6,0.4,a\n0.3,0.3,b\n0.4,0.6,c\n")
    with caplog.at_level(logging.INFO, logger="fairmo"):
        code, out = _run(["pareto", "--front", path, "--norm", "l1", "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    assert "excluded 1 dominated" in caplog.text
    result = json.loads((tmp_path / "m.json").read_text())
    assert result["hv"] == pytest.approx(0.32, abs=1e-12)
    assert result["selected_index"] == 0


def test_pareto_malformed(tmp_path, capsys):
    code, out = _run(["pareto", "--front", _front(tmp_path, "a,b\n1,oops\n")], capsys)
    assert code == 2 and "front.csv:2" in out.err


def _toy_config(tmp_path, **train):
    cfg = {
        "dataset": "toy",
        "split": [300, 150],
        "model": {"kind": "mlp", "hidden": [8, 4], "dropout": 0.2},
        "objectives": [{"notion": "ddp", "attribute": "group"}],
        "train": {"epochs": 50, "batch_size": 64, "lr": 0.1, **train},
        "output_dir": "runs",
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def _train(argv, capsys):
    code, out = _run(["train", *argv], capsys)
    assert code == 0, out.err
    return Path(out.out.splitlines()[0])


def test_train_unconstrained_beats_constant(tmp_path, capsys):
    run = _train(["--config", _toy_config(tmp_path), "--mode", "unconstrained", "--seed", 2], capsys)
    metrics = json.loads((run / "metrics.json").read_text())
    y = gen_toy(2, 150).labels[split(600, (300, 150), 2).test]
    constant_error = min(np.mean(y == 1), np.mean(y == -1))
    assert metrics["split_sizes"] == [300, 150, 150]
    assert metrics["test"]["error"] < constant_error
    for name in ("trace.csv", "front.csv", "config.json"):
        assert (run / name).is_file()
    assert (run / metrics["selected_checkpoint"]).is_file()
    assert {"ddp[group]", "deo[group]"} <= set(metrics["test"])


def test_train_deterministic_and_reproducible(tmp_path, capsys):
    cfg = _toy_config(tmp_path)
    first = _train(["--config", cfg, "--seed", 4], capsys)
    second = _train(["--config", cfg, "--seed", 4], capsys)
    assert first != second
    assert (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()
    # the emitted config alone reproduces the run
    third = _train(["--config", first / "config.json", "--output-dir", tmp_path / "again"], capsys)
    assert (third / "trace.csv").read_bytes() == (first / "trace.csv").read_bytes()
    assert json.loads((third / "metrics.json").read_text()) == json.loads((first / "metrics.json").read_text())
    resolved = json.loads((first / "config.json").read_text())
    assert resolved["seed"] == 4 and resolved["train"]["mode"] == "mamo"


def test_train_front_csv_feeds_pareto(tmp_path, capsys):
    run = _train(["--config", _toy_config(tmp_path)], capsys)
    code, out = _run(["pareto", "--front", run / "front.csv"], capsys)
    metrics = json.loads((run / "metrics.json").read_text())
    assert code == 0
    assert json.loads(out.out)["hv"] == pytest.approx(metrics["front"]["hv"])


@pytest.mark.parametrize(
    "override",
    [
        {"objectives": [{"notion": "ddp", "attribute": "missing"}]},
        {"train": {"lr": -1}},
        {"split": [500, 200]},
        {"dataset": "nowhere.csv", "schema": "nowhere.json"},
        {"bogus": 1},
    ],
)
def test_train_config_errors(tmp_path, capsys, override):
    cfg = json.loads(_toy_config(tmp_path).read_text())
    cfg.update(override)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    code, out = _run(["train", "--config", path], capsys)
    assert code == 2 and out.err.startswith("error:")
    assert not (tmp_path / "runs").exists()


def test_train_from_csv_dataset(tmp_path, capsys):
    assert _run(["gen-toy", "--seed", 0, "--n", 60, "--out", tmp_path / "toy.csv"], capsys)[0] == 0
    (tmp_path / "toy.schema.json").write_text(json.dumps(TOY_SCHEMA))
    cfg = json.loads(_toy_config(tmp_path).read_text())
    cfg.update(dataset="toy.csv", schema="toy.schema.json", split=[120, 60])
    cfg["train"]["epochs"] = 2
    path = tmp_path / "csv.json"
    path.write_text(json.dumps(cfg))
    run = _train(["--config", path], capsys)
    assert json.loads((run / "metrics.json").read_text())["split_sizes"] == [120, 60, 60]


def test_prepare_compas(tmp_path, capsys):
    code, _ = _run(["prepare", "--dataset", "compas", "--out", tmp_path], capsys)
    assert code == 0
    schema = json.loads((tmp_path / "compas.schema.json").read_text())
    ds = load_csv(tmp_path / "compas.csv", schema)
    assert len(ds) == 6167
    np.testing.assert_array_equal(ds.labels, load_builtin("compas").labels)
