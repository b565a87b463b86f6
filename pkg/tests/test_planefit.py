import math

import numpy as np
import pytest

from ora.planefit import (
    DegenerateSampleError,
    Plane,
    RansacConfig,
    fit_plane_least_squares,
    ransac_plane,
)
from ora.pointcloud import PointCloud


def angle_deg(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    c = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(min(1.0, c)))


def test_fit_exact_plane_z0():
    p = fit_plane_least_squares([(0, 0, 0), (1, 0, 0), (0, 1, 0)])
    assert np.allclose(p.normal, (0, 0, 1))
    assert abs(p.offset) < 1e-12


def test_fit_plane_z1():
    p = fit_plane_least_squares([(0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)])
    assert np.allclose(p.normal, (0, 0, 1))
    assert p.offset == pytest.approx(-1.0)


def test_fit_noisy_tilted_plane():
    rng = np.random.default_rng(11)
    xy = rng.uniform(-5, 5, (10, 2))
    z = 0.1 * xy[:, 0] + 0.2 * xy[:, 1] + 3 + rng.normal(0, 0.01, 10)
    p = fit_plane_least_squares(np.column_stack([xy, z]))
    assert angle_deg(p.normal, (-0.1, -0.2, 1.0)) < 0.5


def test_fit_canonical_orientation_and_unit_norm():
    rng = np.random.default_rng(12)
    for _ in range(50):
        pts = rng.normal(0, 1, (5, 3))
        p = fit_plane_least_squares(pts)
        assert p.normal[2] >= 0
        assert abs(np.linalg.norm(p.normal) - 1) < 1e-9


@pytest.mark.parametrize("pts", [
    [(0, 0, 0), (1, 1, 1)],
    [(0, 0, 0), (1, 1, 1), (2, 2, 2), (3, 3, 3)],
    [(1, 2, 3)] * 5,
])
def test_fit_degenerate(pts):
    with pytest.raises(DegenerateSampleError, match="degenerate sample"):
        fit_plane_least_squares(pts)


def test_plane_from_normal_flips_down_normals():
    p = Plane.from_normal((0, 0, -2), 4)
    assert p.normal == (0.0, 0.0, 1.0)
    assert p.offset == -2.0
    assert p.signed_distance([[0, 0, 3]])[0] == pytest.approx(1.0)


def test_config_validation_and_dict():
    for bad in (dict(iterations=0), dict(sample_size=2), dict(inlier_distance=0)):
        with pytest.raises(ValueError):
            RansacConfig(**bad)
    cfg = RansacConfig(12, 4, 0.3, 99)
    assert cfg.to_dict() == {"iterations": 12, "sample_size": 4, "inlier_distance_m": 0.3, "seed": 99}
    assert RansacConfig.from_dict(cfg.to_dict()) == cfg


def _plane_with_elevated(seed=1):
    rng = np.random.default_rng(seed)
    ground = np.column_stack([rng.uniform(0, 20, (200, 2)), np.zeros(200)])
    high = np.column_stack([rng.uniform(0, 20, (50, 2)), rng.uniform(5, 10, 50)])
    return np.vstack([ground, high])


def test_ransac_exact_inliers():
    xyz = _plane_with_elevated()
    plane, inliers = ransac_plane(PointCloud(xyz), np.arange(250), RansacConfig(seed=1))
    assert np.allclose(plane.normal, (0, 0, 1), atol=1e-6)
    assert inliers.tolist() == list(range(200))


def test_ransac_noise_free_plane_keeps_everything():
    rng = np.random.default_rng(2)
    xy = rng.uniform(-10, 10, (100, 2))
    xyz = np.column_stack([xy, 0.05 * xy[:, 0] + 1.0])
    _, inliers = ransac_plane(PointCloud(xyz), np.arange(100), RansacConfig(iterations=20, seed=3))
    assert inliers.tolist() == list(range(100))


def test_ransac_gross_outliers_recovery():
    rng = np.random.default_rng(7)
    n_true = np.array([0.03, -0.02, 1.0])
    n_true /= np.linalg.norm(n_true)
    d_true = -0.4
    xy = rng.uniform(-20, 20, (500, 2))
    z = -(d_true + xy @ n_true[:2]) / n_true[2]
    z[:150] += rng.choice([-1, 1], 150) * rng.uniform(2, 6, 150)
    xyz = np.column_stack([xy, z])
    plane, _ = ransac_plane(PointCloud(xyz), np.arange(500), RansacConfig(seed=7))
    assert angle_deg(plane.normal, n_true) < 1.0
    assert abs(plane.offset - d_true) <= 0.05


def test_ransac_inlier_band_and_best_of_log():
    rng = np.random.default_rng(8)
    xyz = np.column_stack([rng.uniform(0, 10, (300, 2)), rng.normal(0, 0.3, 300)])
    xyz[:60, 2] += 3
    subset = np.arange(0, 300, 1)
    log = []
    plane, inliers = ransac_plane(PointCloud(xyz), subset, RansacConfig(iterations=60, seed=5), log)
    dist = np.abs(plane.signed_distance(xyz))
    assert np.all(dist[inliers] <= 0.5)
    assert np.all(dist[np.setdiff1d(subset, inliers)] > 0.5)
    counts = [c for _, _, c in log]
    assert inliers.size == max(counts)
    # Earliest maximum wins.
    first_best = next(p for _, p, c in log if c == max(counts))
    assert first_best == plane


def test_ransac_deterministic_and_seed_sensitive():
    xyz = _plane_with_elevated(3)
    xyz[:, 2] += np.random.default_rng(0).normal(0, 0.2, len(xyz))
    cfg = RansacConfig(iterations=30, seed=4)
    a = ransac_plane(PointCloud(xyz), np.arange(len(xyz)), cfg)
    b = ransac_plane(PointCloud(xyz), np.arange(len(xyz)), cfg)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])
    c = ransac_plane(PointCloud(xyz), np.arange(len(xyz)), RansacConfig(iterations=30, seed=5))
    assert c[0] != a[0]


def test_ransac_errors():
    cloud = PointCloud(np.zeros((20, 3)))
    with pytest.raises(ValueError, match="smaller than sample_size"):
        ransac_plane(cloud, np.arange(5))
    with pytest.raises(ValueError, match="no valid plane hypothesis"):
        ransac_plane(cloud, np.arange(20), RansacConfig(iterations=5))
