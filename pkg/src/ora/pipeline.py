"""End-to-end corner-case detection for one scene.

Stages: crop -> lift road mask -> RANSAC road plane -> outlier removal ->
alpha-shape surface -> on-road points -> DBSCAN proposals -> 3D gate ->
2D gate.  Proposals that survive both gates are the anomalies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backends import Backends, ClassificationResult, Detection3D, KnownClassList
from .clustering import Cluster, DbscanConfig, Status, dbscan
from .planefit import Plane, RansacConfig, ransac_plane
from .pointcloud import PointCloud, crop_front, remove_statistical_outliers
from .projection import Box2D, Box3D, CalibratedCamera, box3d_to_box2d, cluster_to_box3d, lift_road_mask
from .surface import RoadSurface, build_alpha_shape, on_road_points

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    ransac: RansacConfig = field(default_factory=RansacConfig)
    dbscan: DbscanConfig = field(default_factory=DbscanConfig)
    alpha: float = 10.0
    outlier_k: int = 20
    outlier_ratio: float = 8.0
    height_band: tuple[float, float] = (0.2, 4.0)
    known_fraction: float = 0.5
    anomaly_threshold: float = 0.25
    min_detection_score: float = 0.0
    min_box_area: float = 400.0
    classes: KnownClassList = field(default_factory=KnownClassList)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha_m must be > 0")
        if self.outlier_k < 1 or not self.outlier_ratio > 0:
            raise ValueError("outlier.k must be >= 1 and outlier.ratio > 0")
        lo, hi = self.height_band
        if not lo < hi:
            raise ValueError("height_band_m must be [min_above, max_above] with min < max")
        if not 0 < self.known_fraction <= 1:
            raise ValueError("known_fraction must lie in (0, 1]")
        if not 0 <= self.anomaly_threshold <= 1:
            raise ValueError("anomaly_threshold must lie in [0, 1]")
        if not 0 <= self.min_detection_score <= 1:
            raise ValueError("min_detection_score must lie in [0, 1]")
        if self.min_box_area < 0:
            raise ValueError("min_box_area_px must be >= 0")


@dataclass
class Anomaly:
    cluster: Cluster
    box3d: Box3D
    box2d: Box2D | None


@dataclass
class SceneResult:
    scene_id: str
    clusters: list[Cluster]
    anomalies: list[Anomaly]
    stage_log: dict[str, int]
    boxes3d: dict[int, Box3D] = field(default_factory=dict)
    boxes2d: dict[int, Box2D] = field(default_factory=dict)
    degenerate: str | None = None
    plane: Plane | None = None
    road_inliers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    surface: RoadSurface | None = None


def gate_known_3d(cloud: PointCloud, cluster: Cluster, detections: list[Detection3D],
                  known_fraction: float = 0.5, min_score: float = 0.0) -> bool:
    """True if one detection box holds at least ``known_fraction`` of the members."""
    members = cluster.members
    if not members.size:
        raise ValueError("empty cluster")
    xyz = cloud.xyz[members]
    for det in detections:
        if det.score < min_score:
            continue
        inside = np.count_nonzero(det.box.contains_points(xyz))
        if inside / members.size >= known_fraction:
            return True
    return False


def decide_anomaly(result: ClassificationResult, threshold: float = 0.25) -> tuple[bool, str | None]:
    """``(is_anomaly, label)``; known when the top probability reaches the threshold."""
    probs = np.asarray(result.probs)
    best = int(np.argmax(probs))  # first maximum, i.e. earliest in class order
    if probs[best] >= threshold:
        return False, result.labels[best]
    return True, None


def _empty_log() -> dict[str, int]:
    keys = ("points", "cropped", "road_candidates", "road_inliers", "road_cleaned", "non_road",
            "on_road", "proposals", "known3d", "after_3d_gate", "known2d", "anomalies")
    return {k: 0 for k in keys}


def run_scene(scene_id: str, cloud: PointCloud, cam: CalibratedCamera, backends: Backends,
              config: PipelineConfig = PipelineConfig()) -> SceneResult:
    stage = _empty_log()
    stage["points"] = len(cloud)

    def degenerate(reason: str, **extra) -> SceneResult:
        log.warning("scene %s: degenerate geometry (%s)", scene_id, reason)
        return SceneResult(scene_id, [], [], stage, degenerate=reason, **extra)

    cropped = crop_front(cloud)
    stage["cropped"] = cropped.size

    try:
        mask = backends.segmenter.road_mask(scene_id)
    except Exception as exc:
        raise RuntimeError(f"scene {scene_id}: road segmentation failed: {exc}") from exc
    road = lift_road_mask(cam, mask, cloud, cropped)
    stage["road_candidates"] = road.size

    if road.size < max(3, config.ransac.sample_size):
        return degenerate(f"only {road.size} road points")
    try:
        plane, inliers = ransac_plane(cloud, road, config.ransac)
    except ValueError as exc:
        return degenerate(str(exc))
    stage["road_inliers"] = inliers.size

    if inliers.size <= config.outlier_k:
        return degenerate(f"only {inliers.size} road inliers", plane=plane, road_inliers=inliers)
    cleaned = remove_statistical_outliers(cloud, inliers, config.outlier_k, config.outlier_ratio)
    stage["road_cleaned"] = cleaned.size

    try:
        surface = build_alpha_shape(cloud.xyz[cleaned, :2], config.alpha)
    except ValueError as exc:
        return degenerate(str(exc), plane=plane, road_inliers=inliers)

    non_road = np.setdiff1d(cropped, inliers, assume_unique=True)
    stage["non_road"] = non_road.size
    on_road = on_road_points(cloud, non_road, surface, plane, config.height_band)
    stage["on_road"] = on_road.size

    clusters = dbscan(cloud, on_road, config.dbscan)
    stage["proposals"] = len(clusters)

    try:
        detections = backends.detector.detect(scene_id, cloud)
    except Exception as exc:
        raise RuntimeError(f"scene {scene_id}: 3D detection failed: {exc}") from exc
    detections = [d for d in detections if d.score >= config.min_detection_score]

    result = SceneResult(scene_id, clusters, [], stage, plane=plane, road_inliers=inliers,
                         surface=surface)
    for cluster in clusters:
        if gate_known_3d(cloud, cluster, detections, config.known_fraction, config.min_detection_score):
            cluster.resolve(Status.KNOWN_3D)
            continue
        box3d = cluster_to_box3d(cloud, cluster.members)
        result.boxes3d[cluster.id] = box3d
        box2d = box3d_to_box2d(cam, box3d, config.min_box_area, source_cluster=cluster)
        if box2d is None:
            # Nothing to show the camera: a lidar-only anomaly.
            cluster.resolve(Status.ANOMALY)
            result.anomalies.append(Anomaly(cluster, box3d, None))
            continue
        result.boxes2d[cluster.id] = box2d
        try:
            cls = backends.classifier.classify(scene_id, box2d, config.classes)
        except Exception as exc:
            raise RuntimeError(f"scene {scene_id}: 2D classification failed: {exc}") from exc
        is_anomaly, label = decide_anomaly(cls, config.anomaly_threshold)
        top = float(max(cls.probs))
        if is_anomaly:
            cluster.resolve(Status.ANOMALY, score=top)
            result.anomalies.append(Anomaly(cluster, box3d, box2d))
        else:
            cluster.resolve(Status.KNOWN_2D, label, top)

    stage["known3d"] = sum(c.status is Status.KNOWN_3D for c in clusters)
    stage["after_3d_gate"] = len(clusters) - stage["known3d"]
    stage["known2d"] = sum(c.status is Status.KNOWN_2D for c in clusters)
    stage["anomalies"] = len(result.anomalies)
    log.info("scene %s: %s", scene_id, stage)
    return result


# -- serialization ------------------------------------------------------------------


def result_to_dict(result: SceneResult) -> dict:
    clusters = []
    for c in result.clusters:
        entry = {
            "id": c.id,
            "status": c.status.value,
            "label": c.class_label,
            "score": c.score,
            "member_count": len(c),
            "members": c.members.tolist(),
        }
        if c.id in result.boxes3d:
            entry["box3d"] = result.boxes3d[c.id].to_dict()
        if c.id in result.boxes2d:
            entry["box2d"] = result.boxes2d[c.id].to_dict()
        clusters.append(entry)
    return {
        "scene_id": result.scene_id,
        "degenerate": result.degenerate,
        "plane": None if result.plane is None else
        {"normal": list(result.plane.normal), "offset": result.plane.offset},
        "stage_log": dict(result.stage_log),
        "clusters": clusters,
        "anomalies": [
            {"cluster_id": a.cluster.id, "box3d": a.box3d.to_dict(),
             "box2d": None if a.box2d is None else a.box2d.to_dict()}
            for a in result.anomalies
        ],
        "road_inliers": result.road_inliers.tolist(),
    }
