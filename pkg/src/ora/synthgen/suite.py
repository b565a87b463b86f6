"""Named scenario specs mirroring the qualitative failure/success taxonomy.

Tags:
  a  only known objects on the road
  b  known objects plus one on-road anomaly
  c  anomaly on the sidewalk next to the road
  d  anomaly the lidar sees but the camera cannot (above a nadir camera)
  e  canopy overhanging the road, plus an on-road barrel
  f  a tight row of cones that clusters as one object
  g  tree in a road median that the alpha shape bridges over
  h  large box-shaped anomaly with the proportions of a car
"""

from __future__ import annotations

import numpy as np

from .scene import CameraSpec, LidarSpec, ObjectSpec, RoadSpec, SceneSpec
from .shapes import BoxShape, CompositeShape, CylinderShape

STRAIGHT_ROAD = ((-20.0, -4.5), (120.0, -4.5), (120.0, 4.5), (-20.0, 4.5))
MEDIAN_ROAD = (
    (-20.0, -8.0), (120.0, -8.0), (120.0, -1.5), (8.0, -1.5),
    (8.0, 1.5), (120.0, 1.5), (120.0, 8.0), (-20.0, 8.0),
)

CAR_DIMS = (4.5, 1.9, 1.5)


def box_on_ground(x, y, dims, yaw=0.0, lift=0.0) -> BoxShape:
    return BoxShape((float(x), float(y), dims[2] / 2 + lift), tuple(float(d) for d in dims), float(yaw))


def car(x, y, yaw=0.0) -> ObjectSpec:
    return ObjectSpec(box_on_ground(x, y, CAR_DIMS, yaw), "car", on_road=True)


def cylinder_on_ground(x, y, radius, height) -> CylinderShape:
    return CylinderShape((float(x), float(y), height / 2), float(radius), float(height))


def scenario_suite(seed: int = 0) -> list[SceneSpec]:
    """One spec per tag a-h, seeded ``seed + i``."""
    road = RoadSpec(STRAIGHT_ROAD)
    specs = [
        SceneSpec(
            "a_known_only", road,
            known_objects=(car(14.0, -2.0), car(24.0, 2.2),
                           ObjectSpec(box_on_ground(10.0, 2.5, (0.6, 0.6, 1.8)), "person", True)),
            tag="a",
        ),
        SceneSpec(
            "b_onroad_anomaly", road,
            known_objects=(car(17.0, -2.2), car(25.0, 2.4)),
            anomalies=(ObjectSpec(box_on_ground(11.0, 2.0, (1.8, 1.2, 1.3)), on_road=True),),
            tag="b",
        ),
        SceneSpec(
            "c_offroad_anomaly", road,
            known_objects=(car(18.0, -2.0),),
            anomalies=(ObjectSpec(box_on_ground(12.0, 6.5, (0.5, 0.4, 1.4)), on_road=False),),
            tag="c",
        ),
        SceneSpec(
            "d_lidar_only_anomaly", road,
            anomalies=(ObjectSpec(BoxShape((8.0, 0.0, 3.3), (1.0, 1.0, 1.0)), on_road=True),),
            camera=CameraSpec(position=(8.0, 0.0, 2.5), pitch_deg=90.0, fx=116.0, fy=116.0,
                              width=640, height=640),
            tag="d",
        ),
        SceneSpec(
            "e_canopy", road,
            known_objects=(ObjectSpec(BoxShape((15.0, 0.0, 5.0), (6.0, 8.0, 1.0)), "tree", True),),
            anomalies=(ObjectSpec(cylinder_on_ground(10.0, -1.5, 0.35, 0.9), on_road=True),),
            tag="e",
        ),
        SceneSpec(
            "f_cone_row", road,
            anomalies=(ObjectSpec(CompositeShape(tuple(
                cylinder_on_ground(12.0, y, 0.2, 0.9) for y in (-1.6, -0.8, 0.0, 0.8, 1.6)
            )), on_road=True),),
            tag="f",
        ),
        SceneSpec(
            "g_median_tree", RoadSpec(MEDIAN_ROAD),
            known_objects=(ObjectSpec(CompositeShape((
                cylinder_on_ground(14.0, 0.0, 0.3, 2.2),
                BoxShape((14.0, 0.0, 2.95), (2.0, 2.0, 1.5)),
            )), "tree", False),),
            tag="g",
        ),
        SceneSpec(
            "h_carlike_anomaly", road,
            known_objects=(car(26.0, 2.2),),
            anomalies=(ObjectSpec(box_on_ground(13.0, -1.8, (4.2, 1.8, 1.5)), on_road=True),),
            tag="h",
        ),
    ]
    return [_with_seed(s, seed + i) for i, s in enumerate(specs)]


def _with_seed(spec: SceneSpec, seed: int) -> SceneSpec:
    d = spec.to_dict()
    d["rng_seed"] = int(seed)
    return SceneSpec.from_dict(d)


KNOWN_TEMPLATES = (
    ("car", CAR_DIMS),
    ("truck", (7.0, 2.4, 2.8)),
    ("person", (0.6, 0.6, 1.8)),
    ("bicycle", (1.8, 0.6, 1.2)),
)


def random_scene_spec(seed: int, n_known: int = 4, n_anomalies: int = 1, name: str | None = None) -> SceneSpec:
    """Random straight-road scene; objects keep >= 2 m footprint gaps.

    Anomalies are placed nearest the sensor so nothing occludes them, and
    off-axis so the lidar sees a side face as well as the front; a box seen
    head-on yields a cluster only a few centimeters deep.  Known objects fill
    the range behind.
    """
    rng = np.random.default_rng(seed)
    placed: list[tuple[np.ndarray, np.ndarray]] = []

    def fits(lo, hi) -> bool:
        return all(np.any(lo > h2 + 2.0) or np.any(l2 > hi + 2.0) for l2, h2 in placed)

    def place(dims, x_range, y_range):
        for _ in range(200):
            x = rng.uniform(*x_range)
            y = rng.uniform(*y_range)
            if y_range[0] >= 0 and rng.random() < 0.5:
                y = -y
            lo = np.array([x - dims[0] / 2, y - dims[1] / 2])
            hi = np.array([x + dims[0] / 2, y + dims[1] / 2])
            if fits(lo, hi):
                placed.append((lo, hi))
                return x, y
        return None

    anomalies = []
    for _ in range(n_anomalies):
        dims = tuple(rng.uniform([0.8, 0.8, 0.6], [1.8, 1.6, 1.4]))
        pos = place(dims, (8.0, 11.0), (1.0 + dims[1] / 2, 4.3 - dims[1] / 2))
        if pos is not None:
            anomalies.append(ObjectSpec(box_on_ground(*pos, dims), on_road=True))
    known = []
    for _ in range(n_known):
        label, dims = KNOWN_TEMPLATES[rng.integers(len(KNOWN_TEMPLATES))]
        x_hi = 20.0 if label in ("person", "bicycle") else 30.0
        y_half = 4.5 - dims[1] / 2 - 0.2
        pos = place(dims, (13.0, x_hi), (-y_half, y_half))
        if pos is not None:
            known.append(ObjectSpec(box_on_ground(*pos, dims), label, on_road=True))
    return SceneSpec(name or f"random_{seed:04d}", RoadSpec(STRAIGHT_ROAD), tuple(known),
                     tuple(anomalies), LidarSpec(), CameraSpec(), rng_seed=int(seed), tag="random")
