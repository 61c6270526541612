"""SVG rendering of rollouts and sampled orientation fields (1 px = 0.1 m)."""

from __future__ import annotations

import math
import re
from xml.sax.saxutils import escape

import numpy as np

from .controller import compute_vehicle_control
from .core import ModelParams, Scene
from .simulator import Rollout

PX_PER_M = 10.0
MARGIN_M = 5.0
ARROW_LEN_PX = 8.0
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def field_samples(scene: Scene, i: int, p: ModelParams, spacing: float = 2.0, bounds=None) -> list[tuple]:
    """Reference orientation of vehicle ``i`` as if it stood at each grid point.

    Heading, speed and target of the vehicle are kept. Returns
    ``(x, y, ux, uy)`` with a unit ``(ux, uy)``; points where the field is
    degenerate are left out.
    """
    ego = scene.vehicles[i]
    if bounds is None:
        bounds = _bounds(np.array([[ego.x, ego.y], [ego.x_tar, ego.y_tar]]), scene.obstacle_array())
    x0, y0, x1, y1 = bounds
    out = []
    vehicles = list(scene.vehicles)
    for x in np.arange(x0, x1 + 1e-9, spacing):
        for y in np.arange(y0, y1 + 1e-9, spacing):
            vehicles[i] = ego.replace(x=float(x), y=float(y))
            sc = Scene(tuple(vehicles), scene.obstacles, scene.t)
            _, diag, _ = compute_vehicle_control(sc, i, 1.0, p)
            if diag.degenerate:
                continue
            out.append((float(x), float(y), diag.u_hat[0], diag.u_hat[1]))
    return out


def _bounds(points: np.ndarray, obstacles: np.ndarray) -> tuple[float, float, float, float]:
    xs, ys = list(points[:, 0]), list(points[:, 1])
    for o in obstacles:
        xs += [o[0] - o[2], o[0] + o[2]]
        ys += [o[1] - o[2], o[1] + o[2]]
    if not xs:
        return (-MARGIN_M, -MARGIN_M, MARGIN_M, MARGIN_M)
    return (min(xs) - MARGIN_M, min(ys) - MARGIN_M, max(xs) + MARGIN_M, max(ys) + MARGIN_M)


def render_svg(r: Rollout, field_vehicle: int | None = None, field_step: int = 0, spacing: float = 2.0) -> str:
    """Paths, start (circle) and target (square) markers, obstacles and optional field arrows."""
    pts = r.states[..., :2].reshape(-1, 2)
    if r.n_vehicles:
        pts = np.vstack([pts, r.states[0, :, 4:6]])
    x0, y0, x1, y1 = _bounds(pts, r.obstacles)
    w, h = (x1 - x0) * PX_PER_M, (y1 - y0) * PX_PER_M

    def px(x: float, y: float) -> tuple[float, float]:
        return (x - x0) * PX_PER_M, (y1 - y) * PX_PER_M

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" viewBox="0 0 {w:.1f} {h:.1f}">',
        f'<rect width="{w:.1f}" height="{h:.1f}" fill="white"/>',
    ]
    for o in r.obstacles:
        cx, cy = px(o[0], o[1])
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{o[2] * PX_PER_M:.2f}" fill="#888" stroke="black"/>')
    if field_vehicle is not None:
        for x, y, ux, uy in field_samples(r.scene(field_step), field_vehicle, r.params, spacing, (x0, y0, x1, y1)):
            ax, ay = px(x, y)
            bx, by = ax + ux * ARROW_LEN_PX, ay - uy * ARROW_LEN_PX
            parts.append(
                f'<line class="arrow" x1="{ax:.3f}" y1="{ay:.3f}" x2="{bx:.3f}" y2="{by:.3f}" stroke="#aaa"/>'
            )
    r_px = r.params.r_veh * PX_PER_M
    for i in range(r.n_vehicles):
        color = COLORS[i % len(COLORS)]
        path = " ".join("{:.2f},{:.2f}".format(*px(x, y)) for x, y in r.states[: r.terminated_at + 1, i, :2])
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}"/>')
        sx, sy = px(*r.states[0, i, :2])
        tx, ty = px(*r.states[0, i, 4:6])
        parts.append(f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="{r_px:.2f}" fill="none" stroke="{color}"/>')
        parts.append(
            f'<rect x="{tx - r_px:.2f}" y="{ty - r_px:.2f}" width="{2 * r_px:.2f}" height="{2 * r_px:.2f}" '
            f'fill="none" stroke="{color}" stroke-dasharray="4 2"/>'
        )
        parts.append(f'<text x="{sx:.2f}" y="{sy:.2f}" font-size="10">{escape(str(i))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def arrow_lengths(svg: str) -> list[float]:
    """Lengths in pixels of the field arrows in an SVG produced by :func:`render_svg`."""
    out = []
    for m in re.finditer(r'class="arrow" x1="([^"]+)" y1="([^"]+)" x2="([^"]+)" y2="([^"]+)"', svg):
        a, b, c, d = map(float, m.groups())
        out.append(math.hypot(c - a, d - b))
    return out


__all__ = ["ARROW_LEN_PX", "PX_PER_M", "arrow_lengths", "field_samples", "render_svg"]
