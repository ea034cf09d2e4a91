"""Static SVG figures: scenes with predictions, and HOR heatmaps.

Output is a pure function of the inputs so figures can be golden-file tested.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .metrics import PredictionSet
from .scene_model import Scenario


@dataclass(frozen=True)
class RenderStyle:
    background: str = "#ffffff"
    drivable_fill: str = "#d9d9d9"
    drivable_stroke: str = "#a6a6a6"
    lane: str = "#7f7f7f"
    history: str = "#1f77b4"
    prediction: str = "#d62728"
    ground_truth: str = "#2ca02c"
    agent: str = "#9467bd"
    lane_width: float = 0.6
    drivable_width: float = 0.5
    track_width: float = 2.0
    padding: float = 5.0  # meters around the bounding box
    scale: float = 4.0  # pixels per meter

    def __post_init__(self):
        for name in ("lane_width", "drivable_width", "track_width", "scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "RenderStyle":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown style keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_style(path) -> RenderStyle:
    return RenderStyle.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _num(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class Viewport:
    """Affine world-to-pixel map with the y axis flipped (north up)."""

    def __init__(self, lo, hi, padding: float, scale: float):
        self.lo = np.asarray(lo, dtype=float) - padding
        self.hi = np.asarray(hi, dtype=float) + padding
        self.scale = scale
        self.width = (self.hi[0] - self.lo[0]) * scale
        self.height = (self.hi[1] - self.lo[1]) * scale

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.column_stack([(pts[:, 0] - self.lo[0]) * self.scale, (self.hi[1] - pts[:, 1]) * self.scale])

    def inverse(self, px) -> np.ndarray:
        px = np.asarray(px, dtype=float).reshape(-1, 2)
        return np.column_stack([px[:, 0] / self.scale + self.lo[0], self.hi[1] - px[:, 1] / self.scale])


def _coords(px: np.ndarray) -> str:
    return " ".join(f"{_num(x)},{_num(y)}" for x, y in px)


def _polyline(px, color, width, cls, dash: Optional[str] = None) -> str:
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline class="{cls}" points="{_coords(px)}" fill="none" stroke="{color}" '
            f'stroke-width="{_num(width)}" stroke-linejoin="round"{extra}/>')


def scene_svg(scn: Scenario, preds: Optional[PredictionSet] = None, style: RenderStyle = RenderStyle()) -> str:
    chunks = [scn.scene.all_points(), scn.history.points] + [a.points for a in scn.agents]
    if scn.gt_future is not None:
        chunks.append(scn.gt_future.points)
    if preds is not None:
        chunks.extend(m.points for m in preds.modes)
    allpts = np.vstack(chunks)
    vp = Viewport(allpts.min(axis=0), allpts.max(axis=0), style.padding, style.scale)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(vp.width)}" height="{_num(vp.height)}" '
        f'viewBox="0 0 {_num(vp.width)} {_num(vp.height)}">',
        f'<desc>scenario {escape(scn.id)}; scale {_num(style.scale)} px/m; origin {_num(vp.lo[0])},{_num(vp.hi[1])}</desc>',
        f'<rect width="100%" height="100%" fill="{style.background}"/>',
        '<g id="drivable">',
    ]
    for ring in scn.scene.drivable:
        out.append(f'<polygon points="{_coords(vp(ring))}" fill="{style.drivable_fill}" '
                   f'stroke="{style.drivable_stroke}" stroke-width="{_num(style.drivable_width)}"/>')
    out.append('</g>\n<g id="lanes">')
    for lane in scn.scene.lanes:
        out.append(_polyline(vp(lane), style.lane, style.lane_width, "lane", dash="4,3"))
    out.append('</g>\n<g id="tracks">')
    for agent in scn.agents:
        out.append(_polyline(vp(agent.points), style.agent, style.track_width, "agent"))
    if scn.gt_future is not None:
        gt = np.vstack([scn.history.points[-1:], scn.gt_future.points])
        out.append(_polyline(vp(gt), style.ground_truth, style.track_width, "ground_truth"))
    out.append(_polyline(vp(scn.history.points), style.history, style.track_width, "history"))
    if preds is not None:
        for mode in preds.modes:
            pts = np.vstack([scn.history.points[-1:], mode.points])
            out.append(_polyline(vp(pts), style.prediction, style.track_width, "prediction"))
    out.append("</g>\n</svg>\n")
    return "\n".join(out)


def render_scene(scn: Scenario, preds: Optional[PredictionSet] = None, style: RenderStyle = RenderStyle(),
                 out=None) -> str:
    """Draw drivable area, lanes, history, ground truth and predictions; returns the SVG text."""
    svg = scene_svg(scn, preds, style)
    if out is not None:
        Path(out).write_text(svg, encoding="utf-8")
    return svg


CELL = 48
MARGIN = 90


def hor_color(h: float) -> str:
    """Linear green (0) to red (100) ramp."""
    t = min(max(float(h), 0.0), 100.0) / 100.0
    return f"rgb({int(round(255 * t))},{int(round(255 * (1 - t)))},0)"


def heatmap_svg(grid: Sequence[Sequence[float]], axes=None, title: str = "") -> str:
    rows = [list(r) for r in grid]
    if not rows or not rows[0]:
        raise ValueError("heatmap grid is empty")
    if any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("heatmap grid is ragged")
    nr, nc = len(rows), len(rows[0])
    if axes is None:
        axes = (("row", list(range(nr))), ("column", list(range(nc))))
    (rname, rvals), (cname, cvals) = axes
    if len(rvals) != nr or len(cvals) != nc:
        raise ValueError("axis values do not match the grid shape")
    w, h = MARGIN + nc * CELL + 10, MARGIN + nr * CELL + 10
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="100%" height="100%" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{w // 2}" y="14" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{MARGIN + nc * CELL // 2}" y="34" text-anchor="middle">{escape(str(cname))}</text>')
    out.append(f'<text x="12" y="{MARGIN + nr * CELL // 2}" text-anchor="middle" '
               f'transform="rotate(-90 12 {MARGIN + nr * CELL // 2})">{escape(str(rname))}</text>')
    for j, v in enumerate(cvals):
        out.append(f'<text class="col-label" x="{MARGIN + j * CELL + CELL // 2}" y="{MARGIN - 8}" '
                   f'text-anchor="middle">{escape(_label(v))}</text>')
    for i, v in enumerate(rvals):
        out.append(f'<text class="row-label" x="{MARGIN - 6}" y="{MARGIN + i * CELL + CELL // 2 + 4}" '
                   f'text-anchor="end">{escape(_label(v))}</text>')
    for i, row in enumerate(rows):
        for j, val in enumerate(row):
            x, y = MARGIN + j * CELL, MARGIN + i * CELL
            out.append(f'<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{hor_color(val)}" '
                       f'data-hor="{_label(val)}"/>')
            out.append(f'<text x="{x + CELL // 2}" y="{y + CELL // 2 + 4}" text-anchor="middle">{_label(val)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def _label(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):g}"


def render_heatmap(grid, axes=None, out=None, title: str = "") -> str:
    svg = heatmap_svg(grid, axes, title)
    if out is not None:
        Path(out).write_text(svg, encoding="utf-8")
    return svg
