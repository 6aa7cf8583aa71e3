"""Over-smoothing and metastability measurements on states and trajectories.

Dirichlet energy and feature spread quantify how close node features are to
a global constant; epsilon-proximity cluster counts and their dwell
intervals expose long-lived intermediate cluster configurations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .solvers import Trajectory

__all__ = [
    "EnergySeries",
    "ClusterProfile",
    "dirichlet_energy",
    "feature_spread",
    "cluster_count",
    "metastability_profile",
    "oversmoothing_verdict",
    "energy_series",
    "default_cluster_eps",
]


@dataclass(frozen=True, eq=False)
class EnergySeries:
    """Dirichlet energy per recorded trajectory time."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must align")
        if np.any(self.values < 0):
            raise ValueError("Dirichlet energy is nonnegative")


@dataclass(frozen=True, eq=False)
class ClusterProfile:
    """Cluster count per recorded time and maximal constant-count intervals."""

    times: np.ndarray
    counts: np.ndarray
    dwell_intervals: list[tuple[int, float, float]]


def dirichlet_energy(g: Graph, X: np.ndarray) -> float:
    """(1/N) sum_i sum_{j in N(i)} w_ij ||x_i - x_j||^2.

    The double sum runs over ordered neighbor pairs, so each undirected
    edge contributes twice.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.n:
        raise ValueError("state row count must equal node count")
    diff = X[g.arc_src] - X[g.arc_dst]
    return float(np.sum(g.arc_weight * np.sum(diff * diff, axis=1)) / g.n)


def feature_spread(X: np.ndarray) -> float:
    """Max over node pairs of the infinity-norm feature distance.

    Equals the largest per-coordinate range, so it is translation
    invariant and O(n d) to evaluate.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("need at least one node")
    return float(np.max(X.max(axis=0) - X.min(axis=0)))


def cluster_count(X: np.ndarray, eps: float) -> int:
    """Connected components of the eps-proximity graph on feature vectors.

    Nodes are linked iff their Euclidean distance is <= eps; components are
    found by union-find with path compression.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    parent = np.arange(n)

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2)
    close = sq <= eps * eps
    for i in range(n):
        for j in range(i + 1, n):
            if close[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    return len({find(i) for i in range(n)})


def metastability_profile(traj: Trajectory, eps: float) -> ClusterProfile:
    """Cluster count at every recorded time plus run-length dwell intervals."""
    counts = np.array([cluster_count(s, eps) for s in traj.states], dtype=np.int64)
    intervals: list[tuple[int, float, float]] = []
    start = 0
    for i in range(1, len(counts) + 1):
        if i == len(counts) or counts[i] != counts[start]:
            intervals.append(
                (int(counts[start]), float(traj.times[start]), float(traj.times[i - 1]))
            )
            start = i
    return ClusterProfile(traj.times, counts, intervals)


def oversmoothing_verdict(
    traj: Trajectory, g: Graph, energy_floor: float, spread_floor: float
) -> str:
    """'oversmoothed' iff the final state sits below both floors, else 'mitigated'."""
    final = traj.final_state
    energy = dirichlet_energy(g, final)
    spread = feature_spread(final)
    if energy < energy_floor and spread < spread_floor:
        return "oversmoothed"
    return "mitigated"


def energy_series(traj: Trajectory, g: Graph) -> EnergySeries:
    """Dirichlet energy evaluated at every recorded state."""
    values = np.array([dirichlet_energy(g, s) for s in traj.states])
    return EnergySeries(np.asarray(traj.times, dtype=np.float64), values)


def default_cluster_eps(X0: np.ndarray, fraction: float = 0.05) -> float:
    """Clustering scale: ``fraction`` of the initial Euclidean feature diameter."""
    X0 = np.asarray(X0, dtype=np.float64)
    sq = np.sum((X0[:, None, :] - X0[None, :, :]) ** 2, axis=2)
    diameter = float(np.sqrt(sq.max()))
    if diameter == 0.0:
        return fraction  # degenerate constant features; any positive eps works
    return fraction * diameter
