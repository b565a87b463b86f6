"""Pinhole camera model tying the lidar frame to image pixels."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .pointcloud import PointCloud, as_index_set


@dataclass(frozen=True, eq=False)
class CalibratedCamera:
    """Intrinsics plus a lidar-to-camera rigid transform.

    The camera frame has +z along the optical axis, +x to the image right
    and +y down the image.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) lidar -> camera
    translation: np.ndarray  # (3,)
    width: int
    height: int

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("rotation is not orthonormal")
        rot.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def looking_at(cls, position, yaw=0.0, pitch=0.0, fx=500.0, fy=None, width=640, height=480,
                   cx=None, cy=None) -> "CalibratedCamera":
        """Camera at ``position`` (lidar frame) with forward axis from yaw/pitch.

        ``yaw`` turns left about +z, ``pitch`` tilts the view downward; both
        in radians.  Image "up" stays as close to +z as possible.
        """
        cyaw, syaw = math.cos(yaw), math.sin(yaw)
        cp, sp = math.cos(pitch), math.sin(pitch)
        forward = np.array([cp * cyaw, cp * syaw, -sp])
        left = np.array([-syaw, cyaw, 0.0])
        up = np.cross(forward, left)
        rot = np.stack([-left, -up, forward])
        pos = np.asarray(position, dtype=np.float64)
        fy = fx if fy is None else fy
        return cls(fx, fy, (width - 1) / 2 if cx is None else cx, (height - 1) / 2 if cy is None else cy,
                   rot, -rot @ pos, width, height)

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def position(self) -> np.ndarray:
        """Camera center in the lidar frame."""
        return -self.rotation.T @ self.translation

    def to_camera(self, xyz: np.ndarray) -> np.ndarray:
        return np.asarray(xyz, dtype=np.float64).reshape(-1, 3) @ self.rotation.T + self.translation

    def project_many(self, xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project (n, 3) lidar points; returns (uvd (n, 3), valid mask).

        Rows with non-positive depth are marked invalid and carry NaN pixels.
        """
        cam = self.to_camera(xyz)
        z = cam[:, 2]
        valid = z > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(valid, self.fx * cam[:, 0] / z + self.cx, np.nan)
            v = np.where(valid, self.fy * cam[:, 1] / z + self.cy, np.nan)
        return np.stack([u, v, z], axis=1), valid

    def backproject(self, u: float, v: float, depth: float) -> np.ndarray:
        cam = np.array([(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth])
        return self.rotation.T @ (cam - self.translation)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "rotation": [float(v) for v in self.rotation.ravel()],
            "translation": [float(v) for v in self.translation],
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedCamera":
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                       np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
                       np.array(d["translation"], dtype=np.float64).reshape(3),
                       int(d["width"]), int(d["height"]))
        except KeyError as exc:
            raise ValueError(f"calibration is missing field {exc.args[0]!r}") from None


def project_point(cam: CalibratedCamera, p) -> tuple[float, float, float] | None:
    """Pixel coordinates and depth of ``p``, or None if it is behind the camera."""
    uvd, valid = cam.project_many(np.asarray(p, dtype=np.float64).reshape(1, 3))
    if not valid[0]:
        return None
    return float(uvd[0, 0]), float(uvd[0, 1]), float(uvd[0, 2])


def pixel_of(uv: np.ndarray) -> np.ndarray:
    """Nearest pixel (half-up rounding)."""
    return np.floor(uv + 0.5).astype(np.int64)


# -- road mask ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RoadMask:
    bitmap: np.ndarray  # (height, width) bool, True = road

    def __post_init__(self):
        bm = np.asarray(self.bitmap, dtype=bool)
        if bm.ndim != 2:
            raise ValueError("road mask must be 2-D")
        bm.setflags(write=False)
        object.__setattr__(self, "bitmap", bm)

    @property
    def width(self) -> int:
        return self.bitmap.shape[1]

    @property
    def height(self) -> int:
        return self.bitmap.shape[0]


def load_road_mask(path) -> RoadMask:
    path = Path(path)
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L") if img.mode not in ("L", "1") else img)
    except (OSError, ValueError) as exc:
        raise ValueError(f"{path}: cannot read road mask ({exc})") from None
    if arr.dtype == bool:
        return RoadMask(arr)
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise ValueError(f"{path}: malformed road mask, {int(bad.sum())} pixels not 0 or 255")
    return RoadMask(arr == 255)


def save_road_mask(path, mask: RoadMask) -> None:
    Image.fromarray(np.where(mask.bitmap, 255, 0).astype(np.uint8), mode="L").save(path)


def lift_road_mask(cam: CalibratedCamera, mask: RoadMask, cloud: PointCloud, subset) -> np.ndarray:
    """Subset points whose projection falls on a road pixel of ``mask``."""
    if (mask.width, mask.height) != (cam.width, cam.height):
        raise ValueError(
            f"mask is {mask.width}x{mask.height} but camera is {cam.width}x{cam.height}"
        )
    subset = as_index_set(subset)
    if not subset.size:
        return subset
    uvd, valid = cam.project_many(cloud.xyz[subset])
    px = np.zeros((subset.size, 2), dtype=np.int64)
    px[valid] = pixel_of(uvd[valid, :2])
    inb = valid & (px[:, 0] >= 0) & (px[:, 0] < cam.width) & (px[:, 1] >= 0) & (px[:, 1] < cam.height)
    hit = np.zeros(subset.size, dtype=bool)
    hit[inb] = mask.bitmap[px[inb, 1], px[inb, 0]]
    return subset[hit]


# -- boxes ------------------------------------------------------------------------


@dataclass(frozen=True)
class Box3D:
    center: tuple[float, float, float]
    dims: tuple[float, float, float]  # length (x), width (y), height (z)
    yaw: float = 0.0

    def __post_init__(self):
        if any(not d > 0 for d in self.dims):
            raise ValueError("box dimensions must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        # Normalize into (-pi, pi].
        yaw = math.remainder(float(self.yaw), 2 * math.pi)
        if yaw <= -math.pi:
            yaw += 2 * math.pi
        object.__setattr__(self, "yaw", yaw)

    def corners(self) -> np.ndarray:
        l, w, h = self.dims
        sx = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * l / 2
        sy = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * w / 2
        sz = np.array([1, -1, 1, -1, 1, -1, 1, -1]) * h / 2
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        x = c * sx - s * sy
        y = s * sx + c * sy
        return np.stack([x, y, sz], axis=1) + np.asarray(self.center)

    def contains_points(self, xyz: np.ndarray) -> np.ndarray:
        """Boundary-inclusive test in the box's own frame."""
        d = np.asarray(xyz, dtype=np.float64).reshape(-1, 3) - np.asarray(self.center)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx = c * d[:, 0] + s * d[:, 1]
        dy = -s * d[:, 0] + c * d[:, 1]
        l, w, h = self.dims
        return (np.abs(dx) <= l / 2) & (np.abs(dy) <= w / 2) & (np.abs(d[:, 2]) <= h / 2)

    def axis_aligned_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        corners = self.corners()
        return corners.min(axis=0), corners.max(axis=0)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "dims": list(self.dims), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d: dict) -> "Box3D":
        return cls(tuple(d["center"]), tuple(d["dims"]), float(d.get("yaw", 0.0)))


@dataclass(frozen=True)
class Box2D:
    """Pixel rectangle ``[x_min, x_max) x [y_min, y_max)`` in image coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    source_cluster: object = field(default=None, compare=False)  # the proposal Cluster

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min, "x_max": self.x_max, "y_max": self.y_max}


def box3d_to_box2d(cam: CalibratedCamera, box: Box3D, min_box_area: float = 400.0,
                   source_cluster=None) -> Box2D | None:
    """Image rectangle covering the projected corners of ``box``, clipped."""
    uvd, valid = cam.project_many(box.corners())
    if np.count_nonzero(valid) < 2:
        return None
    uv = uvd[valid, :2]
    x0, y0 = np.clip(uv.min(axis=0), 0, [cam.width, cam.height])
    x1, y1 = np.clip(uv.max(axis=0), 0, [cam.width, cam.height])
    if not (x1 > x0 and y1 > y0):
        return None
    out = Box2D(float(x0), float(y0), float(x1), float(y1), source_cluster)
    if out.area < min_box_area:
        return None
    return out


def cluster_to_box3d(cloud: PointCloud, members, padding: float = 0.1) -> Box3D:
    """Axis-aligned box around ``members`` grown by ``padding`` on every side."""
    members = np.asarray(members, dtype=np.int64)
    if not members.size:
        raise ValueError("cannot box an empty cluster")
    xyz = cloud.xyz[members]
    lo = xyz.min(axis=0) - padding
    hi = xyz.max(axis=0) + padding
    return Box3D(tuple((lo + hi) / 2), tuple(hi - lo), 0.0)


def load_calibration(path) -> CalibratedCamera:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: cannot read calibration ({exc})") from None
    try:
        return CalibratedCamera.from_dict(data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def save_calibration(path, cam: CalibratedCamera) -> None:
    Path(path).write_text(json.dumps(cam.to_dict(), indent=2) + "\n")
