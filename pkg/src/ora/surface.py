"""Alpha-shape road surface over flattened road points, with containment queries.

The alpha shape here is the subset of Delaunay triangles whose circumradius
is at most ``alpha``: large alpha tends to the convex hull, alpha near zero
to no triangles at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .planefit import Plane
from .pointcloud import PointCloud, as_index_set

EDGE_EPS = 1e-12


def circumradii(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Circumradius of each triangle; ``inf`` for zero-area triangles."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(c - a, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    area2 = np.abs(cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = la * lb * lc / (2.0 * area2)
    return np.where(area2 > 0, r, np.inf)


@dataclass(frozen=True, eq=False)
class RoadSurface:
    vertices: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3), counter-clockwise
    alpha: float
    _index: "_TriangleGrid | None" = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.size:
            a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
            cw = _cross(a, b, c) < 0
            tris[cw] = tris[cw][:, [0, 2, 1]]
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "_index", _TriangleGrid(verts, tris) if tris.size else None)

    def area(self) -> float:
        if not self.triangles.size:
            return 0.0
        v = self.vertices
        t = self.triangles
        return float(np.sum(_cross(v[t[:, 0]], v[t[:, 1]], v[t[:, 2]])) / 2.0)

    def contains(self, p) -> bool:
        return bool(self.contains_many(np.asarray(p, dtype=np.float64).reshape(1, 2))[0])

    def contains_many(self, xy: np.ndarray) -> np.ndarray:
        """Vectorized containment, boundary inclusive."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        if self._index is None:
            return np.zeros(xy.shape[0], dtype=bool)
        return self._index.query(xy)

    def boundary_edges(self) -> np.ndarray:
        """Edges that belong to exactly one retained triangle, shape (e, 2)."""
        t = self.triangles
        if not t.size:
            return np.empty((0, 2), dtype=np.int64)
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(edges, axis=1)
        uniq, counts = np.unique(key, axis=0, return_counts=True)
        return uniq[counts == 1]


def _cross(a, b, c):
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


class _TriangleGrid:
    """Uniform bucket grid over triangle bounding boxes."""

    def __init__(self, verts: np.ndarray, tris: np.ndarray):
        self.a = verts[tris[:, 0]]
        self.b = verts[tris[:, 1]]
        self.c = verts[tris[:, 2]]
        corners = np.stack([self.a, self.b, self.c])
        lo = corners.min(axis=0)
        hi = corners.max(axis=0)
        self.origin = lo.min(axis=0)
        span = np.maximum(hi.max(axis=0) - self.origin, 1e-9)
        m = tris.shape[0]
        self.shape = np.maximum(1, np.minimum(2048, np.ceil(span / np.sqrt(span.prod() / m)))).astype(np.int64)
        self.cell = span / self.shape
        c0 = self._cell_of(lo)
        c1 = self._cell_of(hi)
        nx = c1[:, 0] - c0[:, 0] + 1
        ny = c1[:, 1] - c0[:, 1] + 1
        counts = nx * ny
        tri_id = np.repeat(np.arange(m), counts)
        # Enumerate every covered cell of every triangle.
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cx = c0[tri_id, 0] + offs % nx[tri_id]
        cy = c0[tri_id, 1] + offs // nx[tri_id]
        flat = cx * self.shape[1] + cy
        order = np.argsort(flat, kind="stable")
        self.tri_ids = tri_id[order]
        self.starts = np.searchsorted(flat[order], np.arange(self.shape.prod() + 1))

    def _cell_of(self, xy):
        idx = np.floor((xy - self.origin) / self.cell).astype(np.int64)
        return np.clip(idx, 0, self.shape - 1)

    def query(self, xy: np.ndarray) -> np.ndarray:
        n = xy.shape[0]
        out = np.zeros(n, dtype=bool)
        upper = self.origin + self.cell * self.shape
        pad = EDGE_EPS * 10
        in_box = np.all((xy >= self.origin - pad) & (xy <= upper + pad), axis=1)
        # A point sitting on a cell border is checked against both sides.
        for dx in (-pad, pad):
            for dy in (-pad, pad):
                q = np.flatnonzero(in_box & ~out)
                if not q.size:
                    return out
                cells = self._cell_of(xy[q] + np.array([dx, dy]))
                flat = cells[:, 0] * self.shape[1] + cells[:, 1]
                lo = self.starts[flat]
                cnt = self.starts[flat + 1] - lo
                pq = np.repeat(q, cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                tri = self.tri_ids[np.repeat(lo, cnt) + offs]
                p = xy[pq]
                hit = (
                    (_cross(self.a[tri], self.b[tri], p) >= -EDGE_EPS)
                    & (_cross(self.b[tri], self.c[tri], p) >= -EDGE_EPS)
                    & (_cross(self.c[tri], self.a[tri], p) >= -EDGE_EPS)
                )
                out[np.unique(pq[hit])] = True
        return out


def build_alpha_shape(points, alpha: float = 10.0) -> RoadSurface:
    """Delaunay triangles of ``points`` (n, 2) with circumradius <= ``alpha``."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise ValueError("degenerate point set")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise ValueError("degenerate point set") from exc
    simplices = tri.simplices.astype(np.int64)
    keep = circumradii(pts, simplices) <= alpha
    return RoadSurface(pts, simplices[keep], float(alpha))


def on_road_points(
    cloud: PointCloud,
    candidates,
    surface: RoadSurface,
    plane: Plane,
    height_band: tuple[float, float] = (0.2, 4.0),
) -> np.ndarray:
    """Candidates above the road surface footprint within the height band."""
    lo, hi = height_band
    if not lo < hi:
        raise ValueError("height_band must satisfy min_above < max_above")
    candidates = as_index_set(candidates)
    if not candidates.size:
        return candidates
    xyz = cloud.xyz[candidates]
    h = plane.signed_distance(xyz)
    band = (h >= lo) & (h <= hi)
    inside = np.zeros(candidates.size, dtype=bool)
    sel = np.flatnonzero(band)
    inside[sel] = surface.contains_many(xyz[sel, :2])
    return candidates[inside]


def save_surface_text(path, surface: RoadSurface) -> None:
    """Debug export: ``v x y`` lines followed by ``t i j k`` lines."""
    with open(path, "w", encoding="ascii") as fh:
        for x, y in surface.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for i, j, k in surface.triangles:
            fh.write(f"t {i} {j} {k}\n")


def load_surface_text(path, alpha: float = float("nan")) -> RoadSurface:
    verts, tris = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append((float(parts[1]), float(parts[2])))
        elif parts[0] == "t":
            tris.append((int(parts[1]), int(parts[2]), int(parts[3])))
        else:
            raise ValueError(f"{path}:{lineno}: unknown record {parts[0]!r}")
    return RoadSurface(np.array(verts).reshape(-1, 2), np.array(tris, dtype=np.int64).reshape(-1, 3), alpha)
