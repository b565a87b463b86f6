"""Point cloud container, front-view cropping and statistical outlier removal.

Index sets are plain sorted ``int64`` numpy arrays pointing into the cloud
they were derived from.  Filtering operations never reorder or copy points,
they only narrow index sets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

MAGIC = b"ORAPC1\n"


def as_index_set(indices) -> np.ndarray:
    """Normalize anything index-like to a strictly increasing int64 array."""
    return np.unique(np.asarray(indices, dtype=np.int64).ravel())


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of lidar points in the ego frame (x forward, y left, z up)."""

    xyz: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        xyz = np.ascontiguousarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        xyz.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        if self.intensity is not None:
            inten = np.ascontiguousarray(self.intensity, dtype=np.float64).ravel()
            if inten.shape[0] != xyz.shape[0]:
                raise ValueError("intensity length does not match point count")
            if not np.all(inten >= 0):
                raise ValueError("intensity must be finite and >= 0")
            inten.setflags(write=False)
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def all_indices(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)


def crop_front(cloud: PointCloud) -> np.ndarray:
    """Indices of points strictly in front of the ego center (x > 0)."""
    return np.flatnonzero(cloud.xyz[:, 0] > 0).astype(np.int64)


def knn_mean_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Mean distance from each point to its ``k`` nearest other points.

    Neighbors are ranked by (distance, index) so that ties resolve to the
    lower index.  The kd-tree only proposes candidates; distances are
    recomputed with one fixed formula so results do not depend on the
    search structure.
    """
    n = points.shape[0]
    tree = cKDTree(points)
    extra = min(n, k + 1 + 8)
    _, cand = tree.query(points, k=extra)
    cand = np.asarray(cand).reshape(n, extra)
    diff = points[cand] - points[:, None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    # Drop self by index, not by zero distance (duplicates are real neighbors).
    dist = np.where(cand == np.arange(n)[:, None], np.inf, dist)
    order = np.lexsort((cand, dist), axis=-1)
    ranked = np.take_along_axis(dist, order, axis=-1)
    nearest = ranked[:, :k].copy()
    if extra < n:
        # Column extra-2 is always a non-self candidate.  If it is not clearly
        # beyond the k-th distance the tree may have truncated a tie set.
        suspect = np.flatnonzero(ranked[:, extra - 2] <= nearest[:, -1] * (1 + 1e-12))
    else:
        suspect = np.empty(0, dtype=np.int64)
    for i in suspect:
        near = np.asarray(tree.query_ball_point(points[i], nearest[i, -1] * (1 + 1e-9) + 1e-12))
        near = near[near != i]
        diff_i = points[near] - points[i]
        d = np.sqrt(np.sum(diff_i * diff_i, axis=-1))
        nearest[i] = d[np.lexsort((near, d))][:k]
    return np.mean(nearest, axis=1)


def remove_statistical_outliers(
    cloud: PointCloud, subset, k: int = 20, ratio: float = 8.0
) -> np.ndarray:
    """Drop points whose mean k-NN distance exceeds ``mu + ratio * sigma``.

    Statistics are computed over ``subset`` only.  Returns the kept indices.
    """
    subset = as_index_set(subset)
    if k < 1:
        raise ValueError("k must be >= 1")
    if ratio <= 0:
        raise ValueError("ratio must be > 0")
    if subset.size <= k:
        raise ValueError("insufficient points for neighborhood statistics")
    d = knn_mean_distances(cloud.xyz[subset], k)
    threshold = d.mean() + ratio * d.std()
    return subset[d <= threshold]


# -- file formats -----------------------------------------------------------


def save_pointcloud(path, cloud: PointCloud) -> None:
    """Write the binary ``ORAPC1`` format (little-endian f32 x, y, z, intensity)."""
    n = len(cloud)
    rec = np.zeros((n, 4), dtype="<f4")
    rec[:, :3] = cloud.xyz
    if cloud.intensity is not None:
        rec[:, 3] = cloud.intensity
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", n))
        fh.write(rec.tobytes())


def load_pointcloud(path) -> PointCloud:
    """Load a cloud from ``ORAPC1`` binary or ASCII PLY (chosen by content)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head == MAGIC:
            raw = fh.read(8)
            if len(raw) != 8:
                raise ValueError(f"{path}: truncated header")
            (n,) = struct.unpack("<Q", raw)
            body = fh.read()
            if len(body) != n * 16:
                raise ValueError(f"{path}: expected {n} points, got {len(body)} bytes of payload")
            rec = np.frombuffer(body, dtype="<f4").reshape(n, 4).astype(np.float64)
            return PointCloud(rec[:, :3], rec[:, 3])
    if head.startswith(b"ply"):
        return _load_ascii_ply(path)
    raise ValueError(f"{path}: not an ORAPC1 or PLY point cloud")


def _load_ascii_ply(path: Path) -> PointCloud:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: missing ply magic")
    n_vertex = None
    props: list[str] = []
    in_vertex = False
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format" and parts[1] != "ascii":
            raise ValueError(f"{path}: only ascii PLY is supported")
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            props.append(parts[-1])
        elif parts[0] == "end_header":
            body_start = i + 1
            break
    if n_vertex is None or body_start is None:
        raise ValueError(f"{path}: malformed PLY header")
    missing = {"x", "y", "z"} - set(props)
    if missing:
        raise ValueError(f"{path}: PLY vertex lacks properties {sorted(missing)}")
    rows = lines[body_start : body_start + n_vertex]
    if len(rows) != n_vertex:
        raise ValueError(f"{path}: expected {n_vertex} vertices, found {len(rows)}")
    data = np.array([[float(v) for v in r.split()[: len(props)]] for r in rows]).reshape(
        n_vertex, len(props)
    )
    xyz = data[:, [props.index("x"), props.index("y"), props.index("z")]]
    intensity = data[:, props.index("intensity")] if "intensity" in props else None
    return PointCloud(xyz, intensity)


def save_ascii_ply(path, xyz: np.ndarray, colors: np.ndarray | None = None) -> None:
    """Write points (and optional uint8 RGB colors) as ASCII PLY."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    header = ["ply", "format ascii 1.0", f"element vertex {len(xyz)}",
              "property float x", "property float y", "property float z"]
    if colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(header) + "\n")
        for i, p in enumerate(xyz):
            row = f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}"
            if colors is not None:
                c = colors[i]
                row += f" {int(c[0])} {int(c[1])} {int(c[2])}"
            fh.write(row + "\n")
