"""File formats: edge-list text, dataset bundles, trajectory CSV, checkpoints.

Numeric CSV output uses 17 significant digits so doubles round-trip
exactly. Manifests are written atomically (temp file + rename) next to the
outputs they describe.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .dynamics import DynamicsConfig
from .graph import Dataset, Graph, from_edge_list
from .solvers import SolverConfig, Trajectory
from .training import EpochMetrics, ModelParams

__all__ = [
    "write_edge_list",
    "read_edge_list",
    "write_dataset",
    "read_dataset",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_summary_json",
    "write_checkpoint",
    "read_checkpoint",
    "write_metrics_csv",
    "write_manifest",
]

_FMT = "{:.17g}"


def _fmt(x: float) -> str:
    return _FMT.format(float(x))


# ------------------------------------------------------------------ graphs


def write_edge_list(g: Graph, path) -> None:
    """One `u v weight` triple per line, 0-based ids, `#` comments allowed."""
    with open(path, "w") as fh:
        fh.write(f"# nodes: {g.n}\n")
        for u, v, w in zip(g.edge_u, g.edge_v, g.edge_weight):
            fh.write(f"{u} {v} {_fmt(w)}\n")


def read_edge_list(path, n: int | None = None) -> Graph:
    """Parse the edge-list text format; node count from the header or ``n``."""
    edges, weights = [], []
    header_n = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                if "nodes:" in line:
                    header_n = int(line.split("nodes:")[1].strip())
                continue
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'u v [weight]'")
            edges.append((int(parts[0]), int(parts[1])))
            weights.append(float(parts[2]) if len(parts) == 3 else 1.0)
    if n is None:
        n = header_n if header_n is not None else (
            max((max(u, v) for u, v in edges), default=-1) + 1
        )
    return from_edge_list(n, edges, weights)


# ---------------------------------------------------------------- datasets


def write_dataset(ds: Dataset, out_dir) -> None:
    """Write the bundle {graph.txt, features.csv, labels.csv, masks.csv}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(ds.graph, out / "graph.txt")

    d = ds.features.shape[1]
    with open(out / "features.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node"] + [f"f{j}" for j in range(d)])
        for i in range(ds.graph.n):
            w.writerow([i] + [_fmt(x) for x in ds.features[i]])

    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "label"])
        for i, lab in enumerate(ds.labels):
            w.writerow([i, int(lab)])

    with open(out / "masks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "train", "val", "test"])
        for i in range(ds.graph.n):
            w.writerow(
                [i, int(ds.train_mask[i]), int(ds.val_mask[i]), int(ds.test_mask[i])]
            )


def read_dataset(in_dir) -> Dataset:
    src = Path(in_dir)
    for name in ("graph.txt", "features.csv", "labels.csv", "masks.csv"):
        if not (src / name).exists():
            raise FileNotFoundError(f"dataset bundle is missing {name}")
    graph = read_edge_list(src / "graph.txt")

    with open(src / "features.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    d = len(rows[0]) - 1
    features = np.zeros((graph.n, d))
    for row in rows[1:]:
        features[int(row[0])] = [float(x) for x in row[1:]]

    labels = np.zeros(graph.n, dtype=np.int64)
    with open(src / "labels.csv", newline="") as fh:
        for row in list(csv.reader(fh))[1:]:
            labels[int(row[0])] = int(row[1])

    train = np.zeros(graph.n, dtype=bool)
    val = np.zeros(graph.n, dtype=bool)
    test = np.zeros(graph.n, dtype=bool)
    with open(src / "masks.csv", newline="") as fh:
        for row in list(csv.reader(fh))[1:]:
            i = int(row[0])
            train[i], val[i], test[i] = bool(int(row[1])), bool(int(row[2])), bool(int(row[3]))
    return Dataset(graph, features, labels, train, val, test)


# ------------------------------------------------------------- trajectories


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Long format: one row per (time, node) with columns f0..f{d-1}."""
    d = traj.states.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "node"] + [f"f{j}" for j in range(d)])
        for t, state in zip(traj.times, traj.states):
            for node in range(state.shape[0]):
                w.writerow([_fmt(t), node] + [_fmt(x) for x in state[node]])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    d = len(rows[0]) - 2
    by_time: dict[float, list[tuple[int, list[float]]]] = {}
    order: list[float] = []
    for row in rows[1:]:
        t = float(row[0])
        if t not in by_time:
            by_time[t] = []
            order.append(t)
        by_time[t].append((int(row[1]), [float(x) for x in row[2:]]))
    n = len(by_time[order[0]])
    states = np.zeros((len(order), n, d))
    for k, t in enumerate(order):
        for node, feats in by_time[t]:
            states[k, node] = feats
    return Trajectory(np.asarray(order), states, step_count=max(len(order) - 1, 0))


def write_summary_json(path, times, energy, spread, cluster_counts, extra=None) -> None:
    obj = {
        "times": [float(t) for t in times],
        "energy": [float(e) for e in energy],
        "spread": [float(s) for s in spread],
        "cluster_count": [int(c) for c in cluster_counts],
    }
    if extra:
        obj.update(extra)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ------------------------------------------------------------- checkpoints


def write_checkpoint(path, params: ModelParams, dynamics: DynamicsConfig, solver: SolverConfig) -> None:
    obj = {
        "model": params.to_json(),
        "dynamics_config": dynamics.to_json(),
        "solver_config": solver.to_json(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def read_checkpoint(path) -> tuple[ModelParams, DynamicsConfig, SolverConfig]:
    with open(path) as fh:
        obj = json.load(fh)
    return (
        ModelParams.from_json(obj["model"]),
        DynamicsConfig.from_json(obj["dynamics_config"]),
        SolverConfig.from_json(obj["solver_config"]),
    )


def write_metrics_csv(path, metrics: list[EpochMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "val_acc", "test_acc"])
        for m in metrics:
            w.writerow([m.epoch, _fmt(m.loss), _fmt(m.val_acc), _fmt(m.test_acc)])


# ---------------------------------------------------------------- manifest


def write_manifest(out_dir, manifest: dict) -> Path:
    """Atomically write run metadata next to the outputs it describes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "manifest.json"
    tmp = out / ".manifest.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, target)
    return target
