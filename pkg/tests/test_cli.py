import json

import pytest
from click.testing import CliRunner

from l2d2 import records, sim
from l2d2.cli import main
from l2d2.mapping import PlanarWorkspace
from l2d2.policy import save_policy, train_bc
from l2d2.nn import TrainConfig


@pytest.fixture()
def runner():
    return CliRunner()


def test_calibrate_place_with_sweep(runner, tmp_path):
    out = tmp_path / "camera.l2d2"
    result = runner.invoke(
        main,
        ["calibrate", "place", "--workspace", "planar", "--distance", "1.5",
         "--sweep", "500", "--cloud-points", "400", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    assert "achieved info loss" in result.output
    assert "sweep best" in result.output
    recs = records.read_records(out)
    assert recs[0]["kind"] == "camera"


def test_calibrate_map_and_ground(runner, tmp_path):
    camera = tmp_path / "camera.l2d2"
    fmap = tmp_path / "fmap.model"
    ft = tmp_path / "fmap_ft.model"
    r = runner.invoke(
        main,
        ["calibrate", "place", "--workspace", "box", "--cloud-points", "300",
         "--out", str(camera)],
    )
    assert r.exit_code == 0, r.output
    r = runner.invoke(
        main,
        ["calibrate", "map", "--camera", str(camera), "--workspace", "box",
         "-n", "800", "--epochs", "80", "--out", str(fmap)],
    )
    assert r.exit_code == 0, r.output
    assert "holdout RMSE" in r.output

    oracle = tmp_path / "oracle.l2d2"
    records.write_dataset(oracle, sim.oracle_dataset(sim.get_task("lift"), 2, seed=3))
    r = runner.invoke(
        main,
        ["ground", "map", "--model", str(fmap), "--oracle", str(oracle),
         "--camera", str(camera), "--epochs", "30", "--out", str(ft)],
    )
    assert r.exit_code == 0, r.output
    assert ft.exists()


def test_train_bc_and_eval(runner, tmp_path):
    data = tmp_path / "demos.l2d2"
    records.write_dataset(data, sim.oracle_dataset(sim.get_task("lift"), 3, seed=5))
    policy = tmp_path / "policy.model"
    r = runner.invoke(
        main,
        ["train", "bc", "--data", str(data), "--epochs", "40", "--out", str(policy)],
    )
    assert r.exit_code == 0, r.output

    report = tmp_path / "report.json-lines"
    r = runner.invoke(
        main,
        ["eval", "--policy", str(policy), "--task", "lift", "-n", "3",
         "--seed", "7", "--report", str(report)],
    )
    assert r.exit_code == 0, r.output
    assert "mean success" in r.output
    recs = records.read_records(report)
    assert recs[0]["report"] == "evaluation_summary"
    assert sum(1 for x in recs if x["report"] == "evaluation_instance") == 3


def test_eval_report_has_segment_booleans(runner, tmp_path):
    data = tmp_path / "demos.l2d2"
    records.write_dataset(data, sim.oracle_dataset(sim.get_task("push"), 2, seed=2))
    ds = records.read_dataset(data)
    policy, _ = train_bc(ds, TrainConfig(epochs=5, seed=0))
    path = tmp_path / "p.model"
    save_policy(path, policy)
    report = tmp_path / "r.report"
    r = runner.invoke(
        main,
        ["eval", "--policy", str(path), "--task", "push", "-n", "2",
         "--seed", "1", "--horizon", "10", "--report", str(report)],
    )
    assert r.exit_code == 0, r.output
    for rec in records.read_records(report):
        if rec["report"] == "evaluation_instance":
            assert set(rec["segments"]) == {"reach_bowl", "push_bowl_to_center"}


def test_bench(runner):
    r = runner.invoke(main, ["bench", "--epochs", "3", "--samples", "200", "--json"])
    assert r.exit_code == 0, r.output
    rows = json.loads(r.output[r.output.index("[") :])
    assert {"numpy"} <= set(rows[0])


def test_workspace_file_argument(runner, tmp_path):
    ws = tmp_path / "ws.l2d2"
    records.write_records(ws, [PlanarWorkspace(z=0.1).to_record()])
    r = runner.invoke(
        main,
        ["calibrate", "place", "--workspace", str(ws), "--cloud-points", "300"],
    )
    assert r.exit_code == 0, r.output
    assert "info loss: 0.000000" in r.output
