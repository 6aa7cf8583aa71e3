"""Round-trips for every file format the engine reads or writes."""
import json

import numpy as np
import pytest

from grade import (
    CsbmConfig,
    DynamicsConfig,
    KernelSpec,
    ModelParams,
    SolverConfig,
    Trajectory,
    csbm_generate,
    from_edge_list,
)
from grade import io as gio
from grade.training import EpochMetrics


def test_edge_list_roundtrip(tmp_path):
    g = from_edge_list(5, [(0, 1), (1, 2), (3, 4)], weights=[1.0, 2.5, 0.125])
    path = tmp_path / "graph.txt"
    gio.write_edge_list(g, path)
    g2 = gio.read_edge_list(path)
    assert g2.n == 5
    np.testing.assert_array_equal(g2.edge_u, g.edge_u)
    np.testing.assert_array_equal(g2.edge_v, g.edge_v)
    np.testing.assert_array_equal(g2.edge_weight, g.edge_weight)


def test_edge_list_comments_and_default_weight(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("# a comment\n0 1\n\n1 2 0.5\n")
    g = gio.read_edge_list(path, n=4)
    assert g.n == 4
    assert list(g.edge_weight) == [1.0, 0.5]


def test_edge_list_malformed_line(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("0 1 2 3\n")
    with pytest.raises(ValueError, match="expected"):
        gio.read_edge_list(path, n=2)


def test_dataset_bundle_roundtrip(tmp_path):
    ds = csbm_generate(CsbmConfig(n=20, p_intra=0.8, p_inter=0.1), seed=4)
    gio.write_dataset(ds, tmp_path / "ds")
    again = gio.read_dataset(tmp_path / "ds")
    np.testing.assert_array_equal(again.graph.edge_u, ds.graph.edge_u)
    np.testing.assert_array_equal(again.features, ds.features)  # 17 digits
    np.testing.assert_array_equal(again.labels, ds.labels)
    np.testing.assert_array_equal(again.train_mask, ds.train_mask)
    np.testing.assert_array_equal(again.val_mask, ds.val_mask)
    np.testing.assert_array_equal(again.test_mask, ds.test_mask)


def test_dataset_bundle_missing_file(tmp_path):
    (tmp_path / "ds").mkdir()
    with pytest.raises(FileNotFoundError, match="graph.txt"):
        gio.read_dataset(tmp_path / "ds")


def test_trajectory_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    traj = Trajectory(np.array([0.0, 0.5, 1.0]), rng.normal(size=(3, 4, 2)), 2)
    path = tmp_path / "traj.csv"
    gio.write_trajectory_csv(traj, path)
    again = gio.read_trajectory_csv(path)
    np.testing.assert_array_equal(again.times, traj.times)
    np.testing.assert_array_equal(again.states, traj.states)  # bit-exact


def test_summary_json(tmp_path):
    path = tmp_path / "summary.json"
    gio.write_summary_json(path, [0.0, 1.0], [2.0, 1.0], [0.5, 0.25], [3, 2],
                           extra={"verdict": "mitigated"})
    obj = json.loads(path.read_text())
    assert obj["cluster_count"] == [3, 2]
    assert obj["verdict"] == "mitigated"


def test_checkpoint_roundtrip(tmp_path):
    p = ModelParams(np.eye(2), np.zeros(2), np.ones((2, 2)), np.array([0.5, -0.5]),
                    theta=np.full((2, 2), 0.25))
    dyn = DynamicsConfig(kernel=KernelSpec("power", delta=0.1))
    sol = SolverConfig("rk4", step=0.5, horizon=3.0)
    path = tmp_path / "checkpoint.json"
    gio.write_checkpoint(path, p, dyn, sol)
    p2, dyn2, sol2 = gio.read_checkpoint(path)
    for (_, a), (_, b) in zip(p.fields(), p2.fields()):
        np.testing.assert_array_equal(a, b)
    assert dyn2.kernel == dyn.kernel
    assert sol2 == sol


def test_metrics_csv(tmp_path):
    path = tmp_path / "metrics.csv"
    gio.write_metrics_csv(path, [EpochMetrics(0, 0.7, 0.5, 0.4),
                                 EpochMetrics(1, 0.6, 0.6, 0.5)])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss,val_acc,test_acc"
    assert len(lines) == 3
    assert lines[1].startswith("0,0.69999999999999996,")


def test_manifest_atomic_write(tmp_path):
    target = gio.write_manifest(tmp_path, {"command": "generate", "seed": 1})
    assert target.name == "manifest.json"
    obj = json.loads(target.read_text())
    assert obj["command"] == "generate"
    assert not (tmp_path / ".manifest.json.tmp").exists()


def test_csv_seventeen_digits_roundtrip(tmp_path):
    # a value with no short decimal representation survives the format
    value = np.pi / 3.0e7
    traj = Trajectory(np.array([0.0]), np.array([[[value]]]), 0)
    gio.write_trajectory_csv(traj, tmp_path / "t.csv")
    again = gio.read_trajectory_csv(tmp_path / "t.csv")
    assert again.states[0, 0, 0] == value
