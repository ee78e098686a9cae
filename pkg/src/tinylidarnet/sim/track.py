"""Race tracks: occupancy grid + centerline, stored as ROS-style map bundles.

A bundle directory holds ``map.pgm`` (0 = occupied), ``map.yaml`` with
``resolution``, ``origin`` and ``occupied_thresh``, and ``centerline.csv``
with ``x_m,y_m`` rows.  ``origin`` is the world position of the lower-left
corner of the image, as in ROS map_server.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from PIL import Image
from scipy.spatial import cKDTree

BUNDLED_TRACKS = ("oval", "uturn")


@dataclass
class TrackBundle:
    """Occupancy grid indexed ``grid[iy, ix]`` with ``iy = 0`` at the bottom."""

    name: str
    grid: np.ndarray  # bool, True = occupied
    resolution: float
    origin: tuple[float, float]
    centerline: np.ndarray  # (n, 2) closed loop, last point != first
    _s: np.ndarray | None = field(default=None, repr=False)
    _tree: cKDTree | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.grid = np.ascontiguousarray(self.grid, dtype=np.bool_)
        self.centerline = np.asarray(self.centerline, dtype=np.float64)
        if len(self.centerline) >= 2 and np.allclose(self.centerline[0], self.centerline[-1]):
            self.centerline = self.centerline[:-1]

    # -- geometry helpers -------------------------------------------------

    @property
    def arclength(self) -> np.ndarray:
        """Cumulative arc length at each waypoint (0 at waypoint 0)."""
        if self._s is None:
            seg = np.linalg.norm(np.diff(self.centerline, axis=0), axis=1)
            self._s = np.concatenate([[0.0], np.cumsum(seg)])
        return self._s

    @property
    def length(self) -> float:
        closing = np.linalg.norm(self.centerline[0] - self.centerline[-1])
        return float(self.arclength[-1] + closing)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.centerline)
        return self._tree

    def heading_at(self, i: int) -> float:
        n = len(self.centerline)
        d = self.centerline[(i + 1) % n] - self.centerline[(i - 1) % n]
        return math.atan2(d[1], d[0])

    def world_to_cell(self, x, y):
        ix = np.floor((np.asarray(x) - self.origin[0]) / self.resolution).astype(np.int64)
        iy = np.floor((np.asarray(y) - self.origin[1]) / self.resolution).astype(np.int64)
        return ix, iy

    def occupied(self, x, y) -> np.ndarray:
        """Occupancy at world points; anything off the grid counts as free."""
        ix, iy = self.world_to_cell(x, y)
        h, w = self.grid.shape
        inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        out = np.zeros(np.shape(ix), dtype=bool)
        out[inside] = self.grid[iy[inside], ix[inside]]
        return out

    def reversed(self) -> "TrackBundle":
        """Same map, centerline traversed the other way round."""
        cl = np.concatenate([self.centerline[:1], self.centerline[:0:-1]])
        return TrackBundle(self.name + "-rev", self.grid, self.resolution, self.origin, cl)


# ---------------------------------------------------------------------------
# I/O


def save_track(track: TrackBundle, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    img = np.where(track.grid, 0, 254).astype(np.uint8)[::-1]
    Image.fromarray(img, mode="L").save(d / "map.pgm")
    meta = {
        "image": "map.pgm",
        "resolution": float(track.resolution),
        "origin": [float(track.origin[0]), float(track.origin[1]), 0.0],
        "occupied_thresh": 0.65,
        "free_thresh": 0.196,
        "negate": 0,
        "name": track.name,
    }
    with open(d / "map.yaml", "w") as f:
        yaml.safe_dump(meta, f, sort_keys=False)
    np.savetxt(d / "centerline.csv", track.centerline, fmt="%.4f", delimiter=",",
               header="x_m,y_m", comments="")
    return d


def load_track(directory) -> TrackBundle:
    d = Path(directory)
    with open(d / "map.yaml") as f:
        meta = yaml.safe_load(f)
    img = np.asarray(Image.open(d / meta.get("image", "map.pgm")).convert("L"), dtype=np.float64)
    occ_prob = (255.0 - img) / 255.0
    if meta.get("negate", 0):
        occ_prob = 1.0 - occ_prob
    grid = (occ_prob > float(meta.get("occupied_thresh", 0.65)))[::-1]
    centerline = np.loadtxt(d / "centerline.csv", delimiter=",", skiprows=1, ndmin=2)
    if len(centerline) < 3:
        raise ValueError(f"{d}: centerline needs at least 3 waypoints")
    origin = meta["origin"]
    return TrackBundle(meta.get("name", d.name), grid, float(meta["resolution"]),
                       (float(origin[0]), float(origin[1])), centerline)


def get_track(name_or_path) -> TrackBundle:
    """Load a bundled track by name, or a bundle directory by path."""
    if str(name_or_path) in BUNDLED_TRACKS:
        ref = resources.files("tinylidarnet") / "tracks" / str(name_or_path)
        with resources.as_file(ref) as p:
            return load_track(p)
    p = Path(name_or_path)
    if not (p / "map.yaml").exists():
        raise FileNotFoundError(f"no track bundle at {p} (expected map.yaml)")
    return load_track(p)


# ---------------------------------------------------------------------------
# construction


def turtle_path(segments, start=(0.0, 0.0), heading=0.0, spacing=0.05) -> np.ndarray:
    """Polyline from ("S", length) and ("A", radius, degrees) segments.

    Positive degrees turn left.
    """
    x, y = start
    th = heading
    pts = [(x, y)]
    for seg in segments:
        if seg[0] == "S":
            n = max(1, int(round(seg[1] / spacing)))
            step = seg[1] / n
            for _ in range(n):
                x += step * math.cos(th)
                y += step * math.sin(th)
                pts.append((x, y))
        elif seg[0] == "A":
            r, deg = seg[1], seg[2]
            total = math.radians(deg)
            sign = 1.0 if total > 0 else -1.0
            cx = x - sign * r * math.sin(th)
            cy = y + sign * r * math.cos(th)
            n = max(1, int(round(abs(total) * r / spacing)))
            phi0 = th - sign * math.pi / 2
            for k in range(1, n + 1):
                phi = phi0 + total * k / n
                pts.append((cx + r * math.cos(phi), cy + r * math.sin(phi)))
            th += total
            x, y = pts[-1]
        else:
            raise ValueError(f"unknown segment {seg!r}")
    return np.array(pts)


def rasterize(name, centerline, width, resolution=0.05, margin=1.0) -> TrackBundle:
    """Occupancy grid whose free space is a corridor of ``width`` around the centerline."""
    cl = np.asarray(centerline, dtype=np.float64)
    if np.linalg.norm(cl[0] - cl[-1]) < 1e-3:
        cl = cl[:-1]
    lo = cl.min(axis=0) - width / 2 - margin
    hi = cl.max(axis=0) + width / 2 + margin
    w = int(math.ceil((hi[0] - lo[0]) / resolution))
    h = int(math.ceil((hi[1] - lo[1]) / resolution))
    # densify so nearest-sample distance approximates distance to the polyline
    closed = np.vstack([cl, cl[:1]])
    dense = []
    for a, b in zip(closed[:-1], closed[1:]):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / (resolution / 4))))
        t = np.arange(n)[:, None] / n
        dense.append(a + t * (b - a))
    tree = cKDTree(np.vstack(dense))
    xs = lo[0] + (np.arange(w) + 0.5) * resolution
    ys = lo[1] + (np.arange(h) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    dist, _ = tree.query(np.column_stack([gx.ravel(), gy.ravel()]))
    grid = (dist > width / 2).reshape(h, w)
    return TrackBundle(name, grid, resolution, (float(lo[0]), float(lo[1])), cl)


def make_oval() -> TrackBundle:
    """Stadium: two 10 m straights joined by 2 m radius half circles."""
    path = turtle_path([("S", 10.0), ("A", 2.0, 180.0), ("S", 10.0), ("A", 2.0, 180.0)],
                       spacing=0.1)
    return rasterize("oval", path, width=2.0)


def make_uturn() -> TrackBundle:
    """Serpentine loop with tight hairpins in both turning directions."""
    segs = [
        ("S", 14.0),
        ("A", 2.0, 180.0),
        ("S", 5.0),
        ("A", 1.5, -180.0),
        ("S", 5.0),
        ("A", 2.0, 180.0),
        ("S", 14.0),
        ("A", 5.5, 180.0),
    ]
    return rasterize("uturn", turtle_path(segs, spacing=0.1), width=2.0)
