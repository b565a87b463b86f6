"""Rigid primitives used to populate synthetic scenes, with ray intersection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..planefit import Plane
from ..projection import Box3D


def _first_positive(t_near: np.ndarray, t_far: np.ndarray, hit: np.ndarray) -> np.ndarray:
    """Earliest hit distance in front of the origin; ``inf`` on a miss."""
    t = np.where(t_near > 1e-9, t_near, t_far)
    return np.where(hit & (t > 1e-9), t, np.inf)


@dataclass(frozen=True)
class BoxShape:
    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float = 0.0

    kind = "box"

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Slab test in the box frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        o = (origins - np.asarray(self.center)) @ rot.T
        d = dirs @ rot.T
        half = np.asarray(self.dims) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (-half - o) * inv
            t2 = (half - o) * inv
        # Rays parallel to a slab: inside -> unbounded, outside -> miss.
        par = d == 0
        inside = np.abs(o) <= half
        t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
        t2 = np.where(par, np.inf, t2)
        t_near = np.max(np.minimum(t1, t2), axis=1)
        t_far = np.min(np.maximum(t1, t2), axis=1)
        return _first_positive(t_near, t_far, t_near <= t_far)

    def box(self) -> Box3D:
        return Box3D(self.center, self.dims, self.yaw)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.box().axis_aligned_bounds()

    def min_height_above(self, plane: Plane) -> float:
        return float(plane.signed_distance(self.box().corners()).min())

    def to_dict(self) -> dict:
        return {"type": "box", "center": list(self.center), "dims": list(self.dims), "yaw": self.yaw}


@dataclass(frozen=True)
class CylinderShape:
    """Upright cylinder; ``center`` is the middle of its axis."""

    center: tuple[float, float, float]
    radius: float
    height: float

    kind = "cylinder"

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        o = origins - np.asarray(self.center)
        d = dirs
        h = self.height / 2
        a = d[:, 0] ** 2 + d[:, 1] ** 2
        b = 2 * (o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1])
        c = o[:, 0] ** 2 + o[:, 1] ** 2 - self.radius**2
        disc = b * b - 4 * a * c
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0))
            ts1 = (-b - sq) / (2 * a)
            ts2 = (-b + sq) / (2 * a)
            tz1 = (-h - o[:, 2]) / d[:, 2]
            tz2 = (h - o[:, 2]) / d[:, 2]
        vertical = a == 0
        in_disc = c <= 0
        ts1 = np.where(vertical, np.where(in_disc, -np.inf, np.inf), ts1)
        ts2 = np.where(vertical, np.where(in_disc, np.inf, -np.inf), ts2)
        flat = d[:, 2] == 0
        in_slab = np.abs(o[:, 2]) <= h
        tz_lo = np.where(flat, np.where(in_slab, -np.inf, np.inf), np.minimum(tz1, tz2))
        tz_hi = np.where(flat, np.where(in_slab, np.inf, -np.inf), np.maximum(tz1, tz2))
        t_near = np.maximum(ts1, tz_lo)
        t_far = np.minimum(ts2, tz_hi)
        hit = (vertical | (disc >= 0)) & (t_near <= t_far)
        return _first_positive(t_near, t_far, hit)

    def box(self) -> Box3D:
        return Box3D(self.center, (2 * self.radius, 2 * self.radius, self.height), 0.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.box().axis_aligned_bounds()

    def min_height_above(self, plane: Plane) -> float:
        n = np.asarray(plane.normal)
        bottom = np.asarray(self.center) - [0, 0, self.height / 2]
        return float(plane.signed_distance(bottom) - self.radius * math.hypot(n[0], n[1]))

    def to_dict(self) -> dict:
        return {"type": "cylinder", "center": list(self.center), "radius": self.radius,
                "height": self.height}


@dataclass(frozen=True)
class CompositeShape:
    parts: tuple

    kind = "composite"

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        return np.min([p.intersect(origins, dirs) for p in self.parts], axis=0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        b = [p.bounds() for p in self.parts]
        return np.min([x[0] for x in b], axis=0), np.max([x[1] for x in b], axis=0)

    def box(self) -> Box3D:
        lo, hi = self.bounds()
        return Box3D(tuple((lo + hi) / 2), tuple(hi - lo), 0.0)

    def min_height_above(self, plane: Plane) -> float:
        return min(p.min_height_above(plane) for p in self.parts)

    def to_dict(self) -> dict:
        return {"type": "composite", "parts": [p.to_dict() for p in self.parts]}


def shape_from_dict(d: dict):
    kind = d.get("type")
    if kind == "box":
        return BoxShape(tuple(map(float, d["center"])), tuple(map(float, d["dims"])),
                        float(d.get("yaw", 0.0)))
    if kind == "cylinder":
        return CylinderShape(tuple(map(float, d["center"])), float(d["radius"]), float(d["height"]))
    if kind == "composite":
        parts = tuple(shape_from_dict(p) for p in d["parts"])
        if not parts:
            raise ValueError("composite shape needs at least one part")
        return CompositeShape(parts)
    raise ValueError(f"unknown shape type {kind!r}")


def hull_box(shape) -> Box3D:
    """Axis-aligned hull of any shape, as a yaw-free box."""
    lo, hi = shape.bounds()
    return Box3D(tuple((lo + hi) / 2), tuple(hi - lo), 0.0)
