"""Road plane re-estimation with plain RANSAC over least-squares sample fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pointcloud import PointCloud, as_index_set


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class Plane:
    """Plane ``{p : normal . p + offset = 0}`` with a unit, upward normal."""

    normal: tuple[float, float, float]
    offset: float

    @classmethod
    def from_normal(cls, normal, offset: float) -> "Plane":
        n = np.asarray(normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("zero normal")
        n = n / norm
        offset = float(offset) / norm
        if n[2] < 0:
            n, offset = -n, -offset
        return cls(tuple(float(v) for v in n), float(offset))

    def signed_distance(self, xyz: np.ndarray) -> np.ndarray:
        """Signed orthogonal distance; positive above the plane."""
        return np.asarray(xyz, dtype=np.float64) @ np.asarray(self.normal) + self.offset


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 500
    sample_size: int = 10
    inlier_distance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("ransac.iterations must be >= 1")
        if self.sample_size < 3:
            raise ValueError("ransac.sample_size must be >= 3")
        if not self.inlier_distance > 0:
            raise ValueError("ransac.inlier_distance_m must be > 0")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "sample_size": self.sample_size,
            "inlier_distance_m": self.inlier_distance,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RansacConfig":
        return cls(
            iterations=int(d.get("iterations", 500)),
            sample_size=int(d.get("sample_size", 10)),
            inlier_distance=float(d.get("inlier_distance_m", 0.5)),
            seed=int(d.get("seed", 0)),
        )


def fit_plane_least_squares(points) -> Plane:
    """Total least squares plane through ``points`` (principal-axis fit).

    The normal is the direction of least variance of the centered points,
    taken from an SVD rather than the covariance matrix for accuracy.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise DegenerateSampleError("degenerate sample")
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    # Collinear or coincident samples leave the second axis without spread.
    if s[1] <= 1e-9 * max(s[0], 1.0) or s[0] == 0:
        raise DegenerateSampleError("degenerate sample")
    normal = vt[2]
    return Plane.from_normal(normal, -normal @ centroid)


def ransac_plane(cloud: PointCloud, subset, config: RansacConfig = RansacConfig(), log=None):
    """Robustly fit the dominant plane among ``cloud.xyz[subset]``.

    Each round fits a plane to ``config.sample_size`` distinct random points
    and counts subset points within ``config.inlier_distance`` (both sides).
    The first candidate reaching the maximum count wins.

    If ``log`` is a list, one ``(iteration, plane, inlier_count)`` tuple per
    valid candidate is appended to it.

    Returns ``(plane, inlier_indices)``.
    """
    subset = as_index_set(subset)
    if subset.size < config.sample_size:
        raise ValueError(
            f"subset of {subset.size} points is smaller than sample_size={config.sample_size}"
        )
    pts = cloud.xyz[subset]
    rng = np.random.default_rng(config.seed)
    best_plane = None
    best_count = -1
    for it in range(config.iterations):
        sample = rng.choice(pts.shape[0], size=config.sample_size, replace=False)
        try:
            plane = fit_plane_least_squares(pts[sample])
        except DegenerateSampleError:
            continue
        count = int(np.count_nonzero(np.abs(plane.signed_distance(pts)) <= config.inlier_distance))
        if log is not None:
            log.append((it, plane, count))
        if count > best_count:
            best_plane, best_count = plane, count
    if best_plane is None:
        raise ValueError("no valid plane hypothesis")
    inliers = subset[np.abs(best_plane.signed_distance(pts)) <= config.inlier_distance]
    return best_plane, inliers
