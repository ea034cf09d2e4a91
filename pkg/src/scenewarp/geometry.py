"""Low-level planar geometry on (N, 2) float arrays."""
from __future__ import annotations

import math

import numpy as np

COINCIDENT_TOL = 1e-9
BOUNDARY_TOL = 1e-9


def as_points(pts) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) point array, got shape {arr.shape}")
    return arr


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(theta, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


def segment_lengths(pts: np.ndarray) -> np.ndarray:
    return np.hypot(*np.diff(pts, axis=0).T)


def arc_length(pts: np.ndarray) -> float:
    return float(segment_lengths(pts).sum())


def densify(pts: np.ndarray, spacing: float, closed: bool = False) -> np.ndarray:
    """Insert evenly spaced points on every segment so no gap exceeds `spacing`.

    Original vertices are kept, so the result traces exactly the same curve.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pts = as_points(pts)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    if len(pts) < 2:
        return pts.copy()
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    # small slack keeps exact multiples (10 m at 1 m spacing) from gaining a piece
    pieces = np.maximum(1, np.ceil(lens / spacing - 1e-12).astype(int))
    owner = np.repeat(np.arange(len(seg)), pieces)
    step = np.arange(len(owner)) - np.repeat(np.cumsum(pieces) - pieces, pieces) + 1
    t = step / pieces[owner]
    body = pts[owner] + t[:, None] * seg[owner]
    ends = np.cumsum(pieces) - 1
    body[ends] = pts[1:]
    res = np.vstack([pts[:1], body])
    if closed:
        res = res[:-1]
    return res


def resample_uniform(pts: np.ndarray, spacing: float) -> np.ndarray:
    """Points at exact arc-length multiples of `spacing`, plus the final endpoint."""
    pts = as_points(pts)
    lens = segment_lengths(pts)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    total = cum[-1]
    if total == 0.0:
        return pts[:1].copy()
    s = np.arange(0.0, total, spacing)
    if total - s[-1] > COINCIDENT_TOL:
        s = np.append(s, total)
    else:
        s[-1] = total
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.column_stack([x, y])


def circumradius_many(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Vectorized circumradius R = |ab||bc||ca| / (4 * area); inf when collinear."""
    ab = np.hypot(*(b - a).T)
    bc = np.hypot(*(c - b).T)
    ca = np.hypot(*(a - c).T)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    twice_area = np.abs(cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = ab * bc * ca / (2.0 * twice_area)
    # relative collinearity guard: area tiny against the side lengths
    flat = twice_area <= 1e-12 * np.maximum(ab * bc, 1e-300)
    r[flat] = np.inf
    return r


def point_segment_distance(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the segments; shape (P,)."""
    p = points[:, None, :]
    a = seg_a[None, :, :]
    d = (seg_b - seg_a)[None, :, :]
    dd = np.einsum("ijk,ijk->ij", d, d)
    dd = np.where(dd == 0.0, 1.0, dd)
    t = np.clip(np.einsum("ijk,ijk->ij", p - a, d) / dd, 0.0, 1.0)
    proj = a + t[..., None] * d
    dist = np.hypot(*(p - proj).transpose(2, 0, 1))
    return dist.min(axis=1)


def points_in_ring(points: np.ndarray, ring: np.ndarray, boundary_tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Boolean membership of each point in a simple polygon ring (open or closed).

    Even-odd crossing test; points within `boundary_tol` of an edge count as inside.
    """
    points = as_points(points)
    ring = as_points(ring)
    if np.allclose(ring[0], ring[-1]):
        ring = ring[:-1]
    a = ring
    b = np.roll(ring, -1, axis=0)
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    ax, ay = a[:, 0][None, :], a[:, 1][None, :]
    bx, by = b[:, 0][None, :], b[:, 1][None, :]
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
    crossings = np.count_nonzero(straddle & (px < x_cross), axis=1)
    inside = (crossings % 2) == 1
    if boundary_tol > 0:
        # bounding-box prefilter keeps the O(P * E) distance pass for candidates only
        lo = ring.min(axis=0) - boundary_tol
        hi = ring.max(axis=0) + boundary_tol
        cand = ~inside & np.all((points >= lo) & (points <= hi), axis=1)
        if cand.any():
            near = point_segment_distance(points[cand], a, b) <= boundary_tol
            idx = np.flatnonzero(cand)
            inside[idx[near]] = True
    return inside


def points_in_region(points: np.ndarray, rings) -> np.ndarray:
    """Membership in the union of several rings."""
    points = as_points(points)
    inside = np.zeros(len(points), dtype=bool)
    for ring in rings:
        todo = ~inside
        if not todo.any():
            break
        inside[todo] = points_in_ring(points[todo], ring)
    return inside


def signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
