"""Density clustering of on-road points into corner-case proposals."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import PointCloud, as_index_set


class Status(str, enum.Enum):
    PROPOSED = "proposed"
    KNOWN_3D = "known3d"
    KNOWN_2D = "known2d"
    ANOMALY = "anomaly"


@dataclass(frozen=True)
class DbscanConfig:
    epsilon: float = 1.0
    min_cluster_size: int = 30

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("dbscan.epsilon_m must be > 0")
        if self.min_cluster_size < 1:
            raise ValueError("dbscan.min_cluster_size must be >= 1")

    def to_dict(self) -> dict:
        return {"epsilon_m": self.epsilon, "min_cluster_size": self.min_cluster_size}

    @classmethod
    def from_dict(cls, d: dict) -> "DbscanConfig":
        return cls(float(d.get("epsilon_m", 1.0)), int(d.get("min_cluster_size", 30)))


@dataclass(eq=False)
class Cluster:
    """A proposal: member indices into the scene cloud plus its gating verdict."""

    id: int
    members: np.ndarray
    status: Status = Status.PROPOSED
    class_label: str | None = None
    score: float | None = None

    def __len__(self) -> int:
        return int(self.members.size)

    def resolve(self, status: Status, class_label: str | None = None, score: float | None = None):
        if self.status is not Status.PROPOSED:
            raise ValueError(f"cluster {self.id} already resolved as {self.status.value}")
        if status is Status.PROPOSED:
            raise ValueError("cannot resolve to 'proposed'")
        self.status = status
        self.class_label = class_label
        self.score = score


def epsilon_neighbors(xyz: np.ndarray, eps: float) -> list[np.ndarray]:
    """Sorted neighbor lists (self included) with ``|p - q| <= eps``.

    The tree query is slightly inflated; membership is then decided by one
    explicit squared-distance comparison.
    """
    tree = cKDTree(xyz)
    raw = tree.query_ball_point(xyz, eps * (1 + 1e-9) + 1e-12)
    eps2 = eps * eps
    out = []
    for i, cand in enumerate(raw):
        cand = np.asarray(cand, dtype=np.int64)
        d = xyz[cand] - xyz[i]
        keep = cand[np.sum(d * d, axis=1) <= eps2]
        keep.sort()
        out.append(keep)
    return out


def dbscan(cloud: PointCloud, subset, config: DbscanConfig = DbscanConfig()) -> list[Cluster]:
    """DBSCAN over 3D Euclidean distance restricted to ``subset``.

    Core points have at least ``min_cluster_size`` neighbors within epsilon
    (counting themselves).  Clusters are the connected components of core
    points; a border point joins the cluster of its lowest-index core
    neighbor.  Clusters smaller than ``min_cluster_size`` are dropped and the
    rest are ordered by their smallest member index.
    """
    subset = as_index_set(subset)
    if not subset.size:
        return []
    xyz = cloud.xyz[subset]
    neighbors = epsilon_neighbors(xyz, config.epsilon)
    core = np.array([nb.size >= config.min_cluster_size for nb in neighbors])

    label = np.full(subset.size, -1, dtype=np.int64)
    n_labels = 0
    for seed in np.flatnonzero(core):
        if label[seed] >= 0:
            continue
        label[seed] = n_labels
        queue = deque([seed])
        while queue:
            nb = neighbors[queue.popleft()]
            fresh = nb[core[nb] & (label[nb] < 0)]
            label[fresh] = n_labels
            queue.extend(fresh.tolist())
        n_labels += 1

    for i in np.flatnonzero(~core):
        nb = neighbors[i]
        core_nb = nb[core[nb]]
        if core_nb.size:
            # Subset order equals cloud-index order, so the first is the lowest.
            label[i] = label[core_nb[0]]

    clusters = []
    for lab in range(n_labels):
        members = subset[label == lab]
        if members.size >= config.min_cluster_size:
            clusters.append(members)
    clusters.sort(key=lambda m: int(m[0]))
    return [Cluster(id=i, members=m) for i, m in enumerate(clusters)]
