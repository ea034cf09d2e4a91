"""Parametric scene warps: smooth turn, double turn, ripple road.

Every warp maps a point (x, y) of a normalized scenario to (x, y + f(x - border)),
with f identically zero for negative arguments so nothing behind the border moves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from shapely.geometry import LinearRing

from . import geometry as geo
from .scene_model import RING_SPACING, Scenario, Scene

SMOOTH_TURN = "smooth_turn"
DOUBLE_TURN = "double_turn"
RIPPLE_ROAD = "ripple_road"
FAMILIES = (SMOOTH_TURN, DOUBLE_TURN, RIPPLE_ROAD)

DEFAULT_BORDER = 5.0
# lanes are densified finer than drivable rings so curvature estimates stay accurate
LANE_SPACING = 0.1
POWER_SCALE = 3000.0


class DegenerateWarp(ValueError):
    pass


@dataclass(frozen=True)
class SmoothTurnParams:
    length: float
    curvature: float
    exponent: float = 3.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("smooth turn length must be positive")
        if not self.exponent > 1:
            raise ValueError("smooth turn exponent must exceed 1")
        if not math.isfinite(self.curvature):
            raise ValueError("smooth turn curvature must be finite")

    def as_list(self) -> list:
        return [self.length, self.curvature, self.exponent]


@dataclass(frozen=True)
class DoubleTurnParams:
    inner: SmoothTurnParams
    gap: float

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError("double turn gap must be positive")

    def as_list(self) -> list:
        return self.inner.as_list() + [self.gap]


@dataclass(frozen=True)
class RippleParams:
    amplitude: float
    frequency: float

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("ripple frequency must be positive")
        if not math.isfinite(self.amplitude):
            raise ValueError("ripple amplitude must be finite")

    def as_list(self) -> list:
        return [self.amplitude, self.frequency]


Params = Union[SmoothTurnParams, DoubleTurnParams, RippleParams]
_PARAM_TYPES = {SMOOTH_TURN: SmoothTurnParams, DOUBLE_TURN: DoubleTurnParams, RIPPLE_ROAD: RippleParams}


@dataclass(frozen=True)
class TransformSpec:
    family: str
    params: Params
    border: float = DEFAULT_BORDER

    def __post_init__(self):
        if self.family not in _PARAM_TYPES:
            raise ValueError(f"unknown transform family {self.family!r}")
        if not isinstance(self.params, _PARAM_TYPES[self.family]):
            raise ValueError(f"{self.family} needs {_PARAM_TYPES[self.family].__name__}")
        if not math.isfinite(self.border):
            raise ValueError("border must be finite")

    def to_dict(self) -> dict:
        return {"family": self.family, "params": [float(v) for v in self.params.as_list()], "border": float(self.border)}

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return make_spec(d["family"], d["params"], d.get("border", DEFAULT_BORDER))


def make_spec(family: str, params, border: float = DEFAULT_BORDER) -> TransformSpec:
    """Build a spec from the flat parameter list used in result files."""
    p = [float(v) for v in params]
    if family == SMOOTH_TURN:
        if len(p) != 3:
            raise ValueError("smooth_turn takes (length, curvature, exponent)")
        return TransformSpec(family, SmoothTurnParams(*p), border)
    if family == DOUBLE_TURN:
        if len(p) != 4:
            raise ValueError("double_turn takes (length, curvature, exponent, gap)")
        return TransformSpec(family, DoubleTurnParams(SmoothTurnParams(*p[:3]), p[3]), border)
    if family == RIPPLE_ROAD:
        if len(p) != 2:
            raise ValueError("ripple_road takes (amplitude, frequency)")
        return TransformSpec(family, RippleParams(*p), border)
    raise ValueError(f"unknown transform family {family!r}")


def _smooth(p: SmoothTurnParams, z: np.ndarray) -> np.ndarray:
    a1, a2, a3 = p.length, p.curvature, p.exponent
    zc = np.clip(z, 0.0, a1)
    curve = a2 * zc**a3
    end_value = a2 * a1**a3
    end_slope = a3 * a2 * a1 ** (a3 - 1.0)
    out = np.where(z > a1, (z - a1) * end_slope + end_value, curve)
    return np.where(z < 0.0, 0.0, out)


def _ripple(p: RippleParams, z: np.ndarray) -> np.ndarray:
    out = p.amplitude * (1.0 - np.cos(2.0 * math.pi * p.frequency * z))
    return np.where(z < 0.0, 0.0, out)


def shape_function(spec: TransformSpec, z):
    """f evaluated at already-shifted coordinates z = x - border."""
    z = np.asarray(z, dtype=float)
    if spec.family == SMOOTH_TURN:
        out = _smooth(spec.params, z)
    elif spec.family == DOUBLE_TURN:
        inner = spec.params.inner
        out = _smooth(inner, z) - _smooth(inner, z - spec.params.gap)
    else:
        out = _ripple(spec.params, z)
    return out if out.ndim else float(out)


def eval_offset(spec: TransformSpec, x):
    """Lateral offset applied at longitudinal coordinate x (scalar or array)."""
    return shape_function(spec, np.asarray(x, dtype=float) - spec.border)


def power_of(spec: TransformSpec) -> float:
    if spec.family == SMOOTH_TURN:
        return abs(spec.params.curvature) * POWER_SCALE
    if spec.family == DOUBLE_TURN:
        return abs(spec.params.inner.curvature) * POWER_SCALE
    return abs(spec.params.amplitude)


def is_identity(spec: TransformSpec) -> bool:
    return power_of(spec) == 0.0


def warp_points(spec: TransformSpec, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    out = pts.copy()
    if len(pts):
        out[:, 1] = pts[:, 1] + eval_offset(spec, pts[:, 0])
    return out


def densify_scene(scene: Scene) -> Scene:
    """Dense copy of a scene, so the nonlinear warp bends edges instead of cutting them."""
    return Scene(
        tuple(geo.densify(l, LANE_SPACING) for l in scene.lanes),
        tuple(geo.densify(r, RING_SPACING, closed=True) for r in scene.drivable),
        scene.lane_width,
    )


def warp_scenario(scn: Scenario, spec: TransformSpec, densified: bool = False) -> Scenario:
    """Warp a normalized scenario. Pass densified=True if the scene is already dense."""
    if not densified:
        scn = Scenario(densify_scene(scn.scene), scn.history, scn.gt_future, scn.agents, scn.id)
    out = scn.map_points(lambda p: warp_points(spec, p))
    for i, ring in enumerate(out.scene.drivable):
        # the warp preserves x, so rings entirely behind the border cannot change shape
        if ring[:, 0].max() > spec.border and not LinearRing(ring).is_simple:
            raise DegenerateWarp(f"degenerate warp: drivable[{i}] self-intersects")
    return out


# ---------------------------------------------------------------------------
# raster scenes


@dataclass(frozen=True)
class RasterImage:
    """RGB raster; pixel (row i, col j) sits at world (origin + (j, i) * resolution)."""

    pixels: np.ndarray
    resolution: float
    origin: tuple = (0.0, 0.0)
    background: tuple = (0, 0, 0)

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must be an (H, W, 3) array")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def world_of(self, row, col):
        return self.origin[0] + col * self.resolution, self.origin[1] + row * self.resolution

    def pixel_of(self, x, y):
        return (
            np.rint((np.asarray(y) - self.origin[1]) / self.resolution).astype(int),
            np.rint((np.asarray(x) - self.origin[0]) / self.resolution).astype(int),
        )


def warp_raster(img: RasterImage, spec: TransformSpec) -> RasterImage:
    """Move every pixel's value to (x, y + f(x - b)) by inverse nearest-neighbor lookup."""
    h, w = img.height, img.width
    cols = np.arange(w)
    xs = img.origin[0] + cols * img.resolution
    shift = eval_offset(spec, xs)
    rows = np.arange(h)[:, None]
    out_y = img.origin[1] + rows * img.resolution
    src_rows = np.rint((out_y - shift[None, :] - img.origin[1]) / img.resolution).astype(int)
    valid = (src_rows >= 0) & (src_rows < h)
    out = np.empty_like(img.pixels)
    out[...] = np.asarray(img.background, dtype=img.pixels.dtype)
    rr, cc = np.nonzero(valid)
    out[rr, cc] = img.pixels[src_rows[rr, cc], cc]
    return RasterImage(out, img.resolution, img.origin, img.background)
