"""Procedural lidar/camera scenes with exact ground truth."""

from .scene import (
    BACKGROUND,
    FIRST_OBJECT,
    ROAD,
    CameraSpec,
    GroundTruth,
    GroundTruthObject,
    LidarSpec,
    ObjectSpec,
    RoadSpec,
    SceneSpec,
    first_hits,
    generate,
    points_in_polygon,
    render_camera_image,
    render_road_mask,
)
from .shapes import BoxShape, CompositeShape, CylinderShape, hull_box, shape_from_dict
from .suite import random_scene_spec, scenario_suite

__all__ = [
    "BACKGROUND", "FIRST_OBJECT", "ROAD", "BoxShape", "CameraSpec", "CompositeShape",
    "CylinderShape", "GroundTruth", "GroundTruthObject", "LidarSpec", "ObjectSpec", "RoadSpec",
    "SceneSpec", "first_hits", "generate", "hull_box", "points_in_polygon", "random_scene_spec",
    "render_camera_image", "render_road_mask", "scenario_suite", "shape_from_dict",
]
