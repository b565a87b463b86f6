"""Scene directory layout shared by real and synthetic scenes.

::

    <scene>/pointcloud.bin        ORAPC1 binary
    <scene>/road_mask.png         0 = non-road, 255 = road
    <scene>/calibration.json
    <scene>/detections_3d.json    optional, file detector backend
    <scene>/classifications.json  optional, file classifier backend
    <scene>/ground_truth.json     synthetic scenes only
"""

from __future__ import annotations

import json
from pathlib import Path

from .pointcloud import PointCloud, load_pointcloud, save_pointcloud
from .projection import CalibratedCamera, RoadMask, load_calibration, save_calibration, save_road_mask

POINTCLOUD = "pointcloud.bin"
ROAD_MASK = "road_mask.png"
CALIBRATION = "calibration.json"
DETECTIONS = "detections_3d.json"
CLASSIFICATIONS = "classifications.json"
GROUND_TRUTH = "ground_truth.json"
IMAGE = "image.png"


def scene_id_of(scene_dir) -> str:
    return Path(scene_dir).name


def load_scene_inputs(scene_dir) -> tuple[PointCloud, CalibratedCamera]:
    scene_dir = Path(scene_dir)
    return load_pointcloud(scene_dir / POINTCLOUD), load_calibration(scene_dir / CALIBRATION)


def load_ground_truth(scene_dir):
    from .synthgen import GroundTruth

    path = Path(scene_dir) / GROUND_TRUTH
    try:
        return GroundTruth.from_dict(json.loads(path.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ValueError(f"{path}: cannot read ground truth ({exc})") from None


def write_scene(scene_dir, cloud: PointCloud, mask: RoadMask, camera: CalibratedCamera, truth=None) -> Path:
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    save_pointcloud(scene_dir / POINTCLOUD, cloud)
    save_road_mask(scene_dir / ROAD_MASK, mask)
    save_calibration(scene_dir / CALIBRATION, camera)
    if truth is not None:
        (scene_dir / GROUND_TRUTH).write_text(json.dumps(truth.to_dict(), separators=(",", ":")) + "\n")
    return scene_dir
