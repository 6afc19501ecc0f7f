"""Track geometry, 2D range sensing and collision tests.

A track is a pair of closed polylines (outer and inner boundary)
bounding an annular drivable region.  Range sensing is an exact
ray/segment intersection over all boundary segments; collision is a
per-beam comparison of measured range against the vehicle footprint
extent plus a safety margin, so the test is conservative and cheap.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LidarConfig:
    """Planar range sensor model.

    Beams are evenly spaced over ``fov`` radians, symmetric about the
    vehicle's heading, endpoints included: an ``n``-beam scan samples
    body angles ``-fov/2 + i * fov / (n - 1)``.  A dense scan with
    ``(n - 1) * k + 1`` beams therefore contains the ``n``-beam angles
    as every ``k``-th sample starting at index 0.
    """

    n_beams: int = 18
    fov: float = math.radians(270.0)
    max_range: float = 10.0
    noise_amplitude: float = 0.0

    def __post_init__(self):
        if self.n_beams < 1:
            raise ValueError("n_beams must be >= 1")
        if not 0.0 < self.fov <= 2.0 * math.pi:
            raise ValueError("fov must lie in (0, 2*pi]")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")
        if self.noise_amplitude < 0.0:
            raise ValueError("noise_amplitude must be >= 0")

    def beam_angles(self) -> np.ndarray:
        if self.n_beams == 1:
            return np.zeros(1)
        return np.linspace(-0.5 * self.fov, 0.5 * self.fov, self.n_beams)


@dataclass(frozen=True)
class FootprintConfig:
    """Rectangular vehicle footprint, centered on the state's (x, y)."""

    length: float = 0.5
    width: float = 0.3
    collision_margin: float = 0.02

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError("footprint dimensions must be positive")
        if self.collision_margin < 0.0:
            raise ValueError("collision_margin must be >= 0")

    def extent_along(self, body_angles) -> np.ndarray:
        """Distance from center to the rectangle edge along each body angle."""
        body_angles = np.asarray(body_angles, dtype=np.float64)
        hl = 0.5 * self.length
        hw = 0.5 * self.width
        with np.errstate(divide="ignore"):
            along = hl / np.abs(np.cos(body_angles))
            across = hw / np.abs(np.sin(body_angles))
        return np.minimum(along, across)

    def beam_thresholds(self, lidar: LidarConfig) -> np.ndarray:
        """Per-beam collision threshold: footprint extent plus margin."""
        return self.extent_along(lidar.beam_angles()) + self.collision_margin

    @property
    def max_reach(self) -> float:
        """Center-to-corner distance, an upper bound on any extent."""
        return math.hypot(0.5 * self.length, 0.5 * self.width)


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray
    beam_angles: np.ndarray
    max_range: float

    def min_range(self) -> float:
        return float(np.min(self.ranges))


def _as_xy(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("polyline must be an (N, 2) array with N >= 3")
    if not np.all(np.isfinite(pts)):
        raise ValueError("polyline contains non-finite coordinates")
    return pts


def _loop_segments(pts: np.ndarray) -> np.ndarray:
    """Closed-loop segments (S, 2, 2) from a vertex list."""
    nxt = np.roll(pts, -1, axis=0)
    return np.stack([pts, nxt], axis=1)


def point_in_polygon(points, polygon) -> np.ndarray:
    """Even-odd crossing test, vectorized over query points."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    poly = np.asarray(polygon, dtype=np.float64)
    px = poly[:, 0]
    py = poly[:, 1]
    qx = np.roll(px, -1)
    qy = np.roll(py, -1)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    straddles = (py[None, :] > y) != (qy[None, :] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = px[None, :] + (y - py[None, :]) / (qy[None, :] - py[None, :]) * (
            qx[None, :] - px[None, :])
    hits = straddles & (x < x_cross)
    return np.sum(hits, axis=1) % 2 == 1


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(p1, q1, p2, q2) -> np.ndarray:
    """Vectorized segment/segment intersection, touching counts."""
    p1 = np.asarray(p1, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    d1 = _orient(p2[..., 0], p2[..., 1], q2[..., 0], q2[..., 1], p1[..., 0], p1[..., 1])
    d2 = _orient(p2[..., 0], p2[..., 1], q2[..., 0], q2[..., 1], q1[..., 0], q1[..., 1])
    d3 = _orient(p1[..., 0], p1[..., 1], q1[..., 0], q1[..., 1], p2[..., 0], p2[..., 1])
    d4 = _orient(p1[..., 0], p1[..., 1], q1[..., 0], q1[..., 1], q2[..., 0], q2[..., 1])
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) \
        & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)

    def on_seg(ax, ay, bx, by, cx, cy, d):
        return (d == 0) \
            & (np.minimum(ax, bx) <= cx) & (cx <= np.maximum(ax, bx)) \
            & (np.minimum(ay, by) <= cy) & (cy <= np.maximum(ay, by))

    touch = on_seg(p2[..., 0], p2[..., 1], q2[..., 0], q2[..., 1], p1[..., 0], p1[..., 1], d1) \
        | on_seg(p2[..., 0], p2[..., 1], q2[..., 0], q2[..., 1], q1[..., 0], q1[..., 1], d2) \
        | on_seg(p1[..., 0], p1[..., 1], q1[..., 0], q1[..., 1], p2[..., 0], p2[..., 1], d3) \
        | on_seg(p1[..., 0], p1[..., 1], q1[..., 0], q1[..., 1], q2[..., 0], q2[..., 1], d4)
    return proper | touch


def _check_simple(pts: np.ndarray, label: str):
    segs = _loop_segments(pts)
    n = len(segs)
    ii, jj = np.triu_indices(n, k=2)
    # the first and last loop segments are adjacent through the seam
    keep = ~((ii == 0) & (jj == n - 1))
    ii = ii[keep]
    jj = jj[keep]
    bad = segments_intersect(segs[ii, 0], segs[ii, 1], segs[jj, 0], segs[jj, 1])
    if np.any(bad):
        raise ValueError(f"{label} boundary is self-intersecting")


@dataclass(eq=False)
class TrackGeometry:
    """Annular track bounded by two closed simple polylines.

    ``outer`` and ``inner`` are (N, 2) vertex arrays; the loop closes
    from the last vertex back to the first.  ``spawn_pose`` is the
    default (x, y, yaw) restart pose and must lie in the drivable
    region.
    """

    outer: np.ndarray
    inner: np.ndarray
    spawn_pose: tuple = (0.0, 0.0, 0.0)
    name: str = "custom"
    _segments: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.outer = _as_xy(self.outer)
        self.inner = _as_xy(self.inner)
        if len(self.spawn_pose) != 3:
            raise ValueError("spawn_pose must be (x, y, yaw)")
        self.spawn_pose = tuple(float(v) for v in self.spawn_pose)
        _check_simple(self.outer, "outer")
        _check_simple(self.inner, "inner")
        if not np.all(point_in_polygon(self.inner, self.outer)):
            raise ValueError("inner boundary must lie inside the outer boundary")
        if np.any(point_in_polygon(self.outer, self.inner)):
            raise ValueError("outer boundary must lie outside the inner boundary")
        if not self.contains_point(self.spawn_pose[0], self.spawn_pose[1]):
            raise ValueError("spawn_pose must lie in the drivable region")
        self._segments = np.concatenate(
            [_loop_segments(self.outer), _loop_segments(self.inner)], axis=0)

    def segment_array(self) -> np.ndarray:
        """All boundary segments as an (S, 2, 2) array."""
        return self._segments

    def contains_point(self, x, y) -> bool:
        p = np.array([[x, y]])
        return bool(point_in_polygon(p, self.outer)[0]
                    and not point_in_polygon(p, self.inner)[0])

    def bounds(self):
        lo = np.min(self.outer, axis=0)
        hi = np.max(self.outer, axis=0)
        return lo, hi


def annular_track(r_inner: float = 1.5, r_outer: float = 2.5,
                  n_vertices: int = 96, center=(0.0, 0.0)) -> TrackGeometry:
    """Regular annulus with a vertex of each loop at angle zero.

    The spawn pose sits on the centerline at angle zero, heading along
    the counter-clockwise tangent.
    """
    if not 0.0 < r_inner < r_outer:
        raise ValueError("need 0 < r_inner < r_outer")
    if n_vertices < 8:
        raise ValueError("n_vertices must be >= 8")
    cx, cy = center
    angles = 2.0 * math.pi * np.arange(n_vertices) / n_vertices
    outer = np.stack([cx + r_outer * np.cos(angles),
                      cy + r_outer * np.sin(angles)], axis=1)
    inner = np.stack([cx + r_inner * np.cos(angles),
                      cy + r_inner * np.sin(angles)], axis=1)
    r_mid = 0.5 * (r_inner + r_outer)
    spawn = (cx + r_mid, cy, math.pi / 2.0)
    return TrackGeometry(outer=outer, inner=inner, spawn_pose=spawn,
                         name=f"annulus_{r_inner}_{r_outer}_{n_vertices}")


def save_track(track: TrackGeometry, path):
    payload = {
        "outer": track.outer.tolist(),
        "inner": track.inner.tolist(),
        "spawn_pose": list(track.spawn_pose),
        "name": track.name,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_track(path) -> TrackGeometry:
    with open(path) as fh:
        payload = json.load(fh)
    return TrackGeometry(
        outer=np.asarray(payload["outer"], dtype=np.float64),
        inner=np.asarray(payload["inner"], dtype=np.float64),
        spawn_pose=tuple(payload.get("spawn_pose", (0.0, 0.0, 0.0))),
        name=payload.get("name", "custom"),
    )


def _pose_of(pose):
    if hasattr(pose, "x"):
        return float(pose.x), float(pose.y), float(pose.yaw)
    x, y, yaw = pose
    return float(x), float(y), float(yaw)


def raycast(pose, track: TrackGeometry, config: LidarConfig,
            rng=None) -> LidarScan:
    """Exact per-beam ranges from the pose to the nearest boundary.

    Rays that hit nothing within ``max_range`` report ``max_range``.
    With ``noise_amplitude > 0`` and an ``rng``, ranges get additive
    uniform noise and are clipped back to (0, max_range].
    """
    x, y, yaw = _pose_of(pose)
    body = config.beam_angles()
    world = yaw + body
    dx = np.cos(world)
    dy = np.sin(world)

    segs = track.segment_array()
    px = segs[:, 0, 0]
    py = segs[:, 0, 1]
    sx = segs[:, 1, 0] - px
    sy = segs[:, 1, 1] - py
    pox = px - x
    poy = py - y

    denom = dx[:, None] * sy[None, :] - dy[:, None] * sx[None, :]
    cross_po_s = pox * sy - poy * sx
    cross_po_d = pox[None, :] * dy[:, None] - poy[None, :] * dx[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_po_s[None, :] / denom
        u = cross_po_d / denom
    valid = (denom != 0.0) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(valid, t, np.inf)
    ranges = np.minimum(np.min(t, axis=1), config.max_range)

    if config.noise_amplitude > 0.0 and rng is not None:
        ranges = ranges + rng.uniform(-config.noise_amplitude,
                                      config.noise_amplitude, size=ranges.shape)
        ranges = np.clip(ranges, 1e-9, config.max_range)
    return LidarScan(ranges=ranges, beam_angles=body, max_range=config.max_range)


def collision_indicator(scan: LidarScan, footprint: FootprintConfig) -> int:
    """1 if any beam range reaches the footprint boundary plus margin.

    Equality counts as a collision, so the test errs on the safe side.
    """
    thresholds = footprint.extent_along(scan.beam_angles) + footprint.collision_margin
    return int(np.any(scan.ranges <= thresholds))


def footprint_polygon(pose, footprint: FootprintConfig) -> np.ndarray:
    """World-frame corner coordinates of the footprint rectangle."""
    x, y, yaw = _pose_of(pose)
    hl = 0.5 * footprint.length
    hw = 0.5 * footprint.width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c = math.cos(yaw)
    s = math.sin(yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def footprint_touches_boundary(pose, track: TrackGeometry,
                               footprint: FootprintConfig) -> bool:
    """True when the footprint rectangle reaches a track boundary.

    Catches both edge crossings and boundary vertices swallowed whole
    by the rectangle, which covers every contact case for the closed
    loops used here.
    """
    corners = footprint_polygon(pose, footprint)
    edges_p = corners
    edges_q = np.roll(corners, -1, axis=0)
    segs = track.segment_array()
    hit = segments_intersect(
        edges_p[:, None, :], edges_q[:, None, :],
        segs[None, :, 0, :], segs[None, :, 1, :])
    if np.any(hit):
        return True
    verts = segs[:, 0, :]
    return bool(np.any(point_in_polygon(verts, corners)))
