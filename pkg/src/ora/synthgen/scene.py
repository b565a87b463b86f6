"""Scene specifications and the ray-casting generator.

A scene is a ground plane carrying a road polygon plus rigid objects.  The
generator spins an idealized lidar (uniform azimuth grid times a fixed set of
elevations) from the sensor mount, keeps first hits, and renders the camera
road mask with the same first-hit logic so that objects hide the road behind
them exactly as a segmenter would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..planefit import Plane
from ..pointcloud import PointCloud
from ..projection import Box3D, CalibratedCamera, RoadMask
from .shapes import hull_box, shape_from_dict

BACKGROUND = 0
ROAD = 1
FIRST_OBJECT = 2


def points_in_polygon(xy: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd crossing test of many points against one simple polygon."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    poly = np.asarray(polygon, dtype=np.float64)
    x, y = xy[:, 0], xy[:, 1]
    inside = np.zeros(xy.shape[0], dtype=bool)
    x0, y0 = poly[-1]
    for x1, y1 in poly:
        crosses = (y1 > y) != (y0 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x0 - x1) / (y0 - y1)
        inside ^= crosses & (x < xc)
        x0, y0 = x1, y1
    return inside


@dataclass(frozen=True)
class RoadSpec:
    polygon: tuple  # ((x, y), ...) in meters
    pitch_deg: float = 0.0  # ground rises with +x for positive pitch
    height: float = 0.0  # ground z at the ego origin

    def plane(self) -> Plane:
        return Plane.from_normal((-math.tan(math.radians(self.pitch_deg)), 0.0, 1.0), -self.height)

    def to_dict(self) -> dict:
        return {"polygon": [list(p) for p in self.polygon], "pitch_deg": self.pitch_deg,
                "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "RoadSpec":
        return cls(tuple(tuple(map(float, p)) for p in d["polygon"]),
                   float(d.get("pitch_deg", 0.0)), float(d.get("height", 0.0)))


@dataclass(frozen=True)
class ObjectSpec:
    shape: object
    class_label: str | None = None  # None for anomalies
    on_road: bool | None = None

    def to_dict(self) -> dict:
        d = {"shape": self.shape.to_dict()}
        if self.class_label is not None:
            d["class_label"] = self.class_label
        if self.on_road is not None:
            d["on_road"] = self.on_road
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectSpec":
        return cls(shape_from_dict(d["shape"]), d.get("class_label"), d.get("on_road"))


@dataclass(frozen=True)
class LidarSpec:
    channels: int = 64
    azimuth_resolution_deg: float = 0.2
    max_range_m: float = 75.0
    dropout_rate: float = 0.02
    elevation_min_deg: float = -25.0
    elevation_max_deg: float = 15.0
    mount_height_m: float = 1.8
    range_noise_m: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "LidarSpec":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown lidar fields {sorted(unknown)}")
        return cls(**{k: type(getattr(cls(), k))(v) for k, v in d.items()})

    def ray_directions(self) -> np.ndarray:
        elev = np.radians(np.linspace(self.elevation_min_deg, self.elevation_max_deg, self.channels))
        az = np.radians(np.arange(0.0, 360.0, self.azimuth_resolution_deg))
        e, a = np.meshgrid(elev, az, indexing="ij")
        ce = np.cos(e)
        return np.stack([ce * np.cos(a), ce * np.sin(a), np.sin(e)], axis=-1).reshape(-1, 3)


@dataclass(frozen=True)
class CameraSpec:
    position: tuple = (1.0, 0.0, 1.6)
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    fx: float = 500.0
    fy: float = 500.0
    width: int = 640
    height: int = 480

    def camera(self) -> CalibratedCamera:
        return CalibratedCamera.looking_at(self.position, math.radians(self.yaw_deg),
                                           math.radians(self.pitch_deg), self.fx, self.fy,
                                           self.width, self.height)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["position"] = list(self.position)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CameraSpec":
        d = dict(d)
        if "position" in d:
            d["position"] = tuple(map(float, d["position"]))
        return cls(**d)


@dataclass(frozen=True)
class SceneSpec:
    name: str
    road: RoadSpec
    known_objects: tuple = ()
    anomalies: tuple = ()
    lidar: LidarSpec = field(default_factory=LidarSpec)
    camera: CameraSpec = field(default_factory=CameraSpec)
    rng_seed: int = 0
    tag: str | None = None

    def objects(self) -> list[tuple[str, ObjectSpec]]:
        return [("known", o) for o in self.known_objects] + [("anomaly", o) for o in self.anomalies]

    def validate(self) -> None:
        plane = self.road.plane()
        poly = np.asarray(self.road.polygon, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
            raise ValueError("road polygon needs at least 3 (x, y) vertices")
        if abs(self.road.pitch_deg) > 5.0:
            raise ValueError("road tilt must be at most 5 degrees")
        for kind, obj in self.objects():
            if obj.shape.min_height_above(plane) < -1e-6:
                raise ValueError(f"invalid pose: {kind} object reaches below the road plane")
            if kind == "known" and not obj.class_label:
                raise ValueError("known objects need a class_label")
            if obj.on_road:
                lo, hi = obj.shape.bounds()
                if not points_in_polygon([(lo[:2] + hi[:2]) / 2], poly)[0]:
                    raise ValueError(f"{kind} object declared on_road lies outside the road polygon")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tag": self.tag,
            "rng_seed": self.rng_seed,
            "road": self.road.to_dict(),
            "known_objects": [o.to_dict() for o in self.known_objects],
            "anomalies": [o.to_dict() for o in self.anomalies],
            "lidar": self.lidar.to_dict(),
            "camera": self.camera.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        try:
            return cls(
                name=str(d["name"]),
                road=RoadSpec.from_dict(d["road"]),
                known_objects=tuple(ObjectSpec.from_dict(o) for o in d.get("known_objects", [])),
                anomalies=tuple(ObjectSpec.from_dict(o) for o in d.get("anomalies", [])),
                lidar=LidarSpec.from_dict(d.get("lidar", {})),
                camera=CameraSpec.from_dict(d.get("camera", {})),
                rng_seed=int(d.get("rng_seed", 0)),
                tag=d.get("tag"),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed scene spec: {exc}") from None


@dataclass
class GroundTruthObject:
    id: int  # equals the per-point label code
    kind: str  # "known" | "anomaly"
    class_label: str | None
    shape: object
    on_road: bool
    lidar_points: int = 0
    pixel_area: int = 0

    @property
    def box(self) -> Box3D:
        """Oriented box for plain boxes, axis-aligned hull otherwise."""
        return self.shape.box()

    @property
    def hull(self) -> Box3D:
        return hull_box(self.shape)

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "class_label": self.class_label,
                "shape": self.shape.to_dict(), "on_road": self.on_road,
                "lidar_points": self.lidar_points, "pixel_area": self.pixel_area}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthObject":
        return cls(int(d["id"]), d["kind"], d.get("class_label"), shape_from_dict(d["shape"]),
                   bool(d["on_road"]), int(d.get("lidar_points", 0)), int(d.get("pixel_area", 0)))


@dataclass
class GroundTruth:
    scene_id: str
    tag: str | None
    labels: np.ndarray  # per point: 0 background, 1 road, >= 2 object id
    objects: list[GroundTruthObject]
    road_polygon: np.ndarray
    road_plane: Plane

    def object(self, obj_id: int) -> GroundTruthObject:
        return self.objects[obj_id - FIRST_OBJECT]

    def anomalies(self) -> list[GroundTruthObject]:
        return [o for o in self.objects if o.kind == "anomaly"]

    def known(self) -> list[GroundTruthObject]:
        return [o for o in self.objects if o.kind == "known"]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "tag": self.tag,
            "road_polygon": self.road_polygon.tolist(),
            "road_plane": {"normal": list(self.road_plane.normal), "offset": self.road_plane.offset},
            "objects": [o.to_dict() for o in self.objects],
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            scene_id=d["scene_id"],
            tag=d.get("tag"),
            labels=np.asarray(d["labels"], dtype=np.int64),
            objects=[GroundTruthObject.from_dict(o) for o in d["objects"]],
            road_polygon=np.asarray(d["road_polygon"], dtype=np.float64),
            road_plane=Plane(tuple(d["road_plane"]["normal"]), float(d["road_plane"]["offset"])),
        )


def first_hits(origins: np.ndarray, dirs: np.ndarray, plane: Plane, shapes) -> tuple[np.ndarray, np.ndarray]:
    """Distance to and code of the first surface along each ray.

    Code -1 means a miss, 0 the ground plane, ``FIRST_OBJECT + i`` shape i.
    """
    n = np.asarray(plane.normal)
    denom = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = -(origins @ n + plane.offset) / denom
    t_ground = np.where((denom != 0) & (t_ground > 1e-9), t_ground, np.inf)
    ts = [t_ground] + [s.intersect(origins, dirs) for s in shapes]
    ts = np.stack(ts)
    which = np.argmin(ts, axis=0)
    t = ts[which, np.arange(ts.shape[1])]
    code = np.where(which == 0, 0, which + FIRST_OBJECT - 1)
    code = np.where(np.isfinite(t), code, -1)
    return t, code


def render_road_mask(camera: CalibratedCamera, road_polygon, plane: Plane, shapes) -> tuple[RoadMask, np.ndarray]:
    """Ray-cast every pixel center; returns the mask and the per-pixel hit code."""
    u, v = np.meshgrid(np.arange(camera.width, dtype=np.float64),
                       np.arange(camera.height, dtype=np.float64))
    cam_dirs = np.stack([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy,
                         np.ones_like(u)], axis=-1).reshape(-1, 3)
    dirs = cam_dirs @ camera.rotation  # camera -> lidar rotation is R^T
    origins = np.broadcast_to(camera.position, dirs.shape)
    t, code = first_hits(origins, dirs, plane, shapes)
    road = np.zeros(t.shape[0], dtype=bool)
    ground = np.flatnonzero(code == 0)
    hits = origins[ground] + dirs[ground] * t[ground, None]
    road[ground] = points_in_polygon(hits[:, :2], road_polygon)
    return RoadMask(road.reshape(camera.height, camera.width)), code.reshape(camera.height, camera.width)


_OBJECT_COLORS = np.array([(200, 170, 60), (80, 140, 160), (160, 110, 160), (120, 160, 90),
                           (190, 120, 80), (100, 100, 170)], dtype=np.uint8)


def render_camera_image(camera: CalibratedCamera, truth: "GroundTruth") -> np.ndarray:
    """Flat-shaded RGB stand-in for the camera frame (sky, ground, road, objects)."""
    mask, code = render_road_mask(camera, truth.road_polygon, truth.road_plane,
                                  [o.shape for o in truth.objects])
    img = np.empty(code.shape + (3,), dtype=np.uint8)
    img[code < 0] = (150, 185, 215)
    img[code == 0] = (105, 95, 75)
    img[mask.bitmap] = (90, 90, 90)
    obj = code >= FIRST_OBJECT
    img[obj] = _OBJECT_COLORS[(code[obj] - FIRST_OBJECT) % len(_OBJECT_COLORS)]
    return img


def generate(spec: SceneSpec):
    """Render ``spec`` into (cloud, road mask, camera, ground truth)."""
    spec.validate()
    plane = spec.road.plane()
    polygon = np.asarray(spec.road.polygon, dtype=np.float64)
    objects = spec.objects()
    shapes = [o.shape for _, o in objects]
    lidar = spec.lidar
    rng = np.random.default_rng(spec.rng_seed)

    dirs = lidar.ray_directions()
    origin = np.array([0.0, 0.0, lidar.mount_height_m])
    origins = np.broadcast_to(origin, dirs.shape)
    t, code = first_hits(origins, dirs, plane, shapes)
    if lidar.range_noise_m > 0:
        t = t + rng.normal(0.0, lidar.range_noise_m, size=t.shape)
    keep = (code >= 0) & (t <= lidar.max_range_m)
    keep &= rng.random(t.shape[0]) >= lidar.dropout_rate
    idx = np.flatnonzero(keep)
    xyz = origin + dirs[idx] * t[idx, None]
    labels = code[idx].copy()
    ground = labels == 0
    labels[ground] = np.where(points_in_polygon(xyz[ground, :2], polygon), ROAD, BACKGROUND)
    # Round through float32 so in-memory scenes equal their on-disk copies.
    xyz = xyz.astype(np.float32).astype(np.float64)
    intensity = np.where(labels >= FIRST_OBJECT, 0.8, np.where(labels == ROAD, 0.3, 0.2))
    cloud = PointCloud(xyz, intensity.astype(np.float32).astype(np.float64))

    camera = spec.camera.camera()
    mask, pixel_code = render_road_mask(camera, polygon, plane, shapes)

    gt_objects = []
    for i, (kind, obj) in enumerate(objects):
        oid = FIRST_OBJECT + i
        lo, hi = obj.shape.bounds()
        center_xy = (lo[:2] + hi[:2]) / 2
        gt_objects.append(GroundTruthObject(
            id=oid,
            kind=kind,
            class_label=obj.class_label,
            shape=obj.shape,
            on_road=bool(points_in_polygon([center_xy], polygon)[0]),
            lidar_points=int(np.count_nonzero(labels == oid)),
            pixel_area=int(np.count_nonzero(pixel_code == oid)),
        ))
    truth = GroundTruth(spec.name, spec.tag, labels.astype(np.int64), gt_objects, polygon, plane)
    return cloud, mask, camera, truth
