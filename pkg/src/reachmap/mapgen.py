"""Difficulty maps: grid the workspace, evaluate a model, render CSV / SVG.

A map is a model evaluated at the centers of a square grid clipped to the
semicircular workspace, either on one horizontal slice (z fixed) or layered
through the full height.  For tree models the per-cell leaf id is kept, which
lets :func:`extract_regions` group cells into equal-difficulty regions and
report whether each region is spatially connected: a single difficulty level
realised as disjoint pockets is exactly what makes these maps useful for
varying practice locations.

Rendering is deliberately plain: one SVG rect per cell, a diverging palette
centered at zero (positive = slower than the control baseline), and fixed
numeric formatting so equal maps produce byte-identical documents.
"""

from __future__ import annotations

import io
import math
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .causal_tree import DifficultyEstimate
from .domain import TaskFeatures, Workspace, features_from_xyz
from .errors import (
    InvalidResolution,
    NoLeafIds,
    NotASlice,
    SliceOutOfRange,
)
from .evaluation import DifficultyPredictor


@dataclass(frozen=True)
class Grid:
    """Workspace cell centers in (z, y, x) ascending order, with their spacing."""

    points: tuple[TaskFeatures, ...]
    resolution: float
    z_slice: Optional[float]
    workspace: Workspace

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]


def build_grid(
    ws: Workspace, resolution: float, z_slice: Optional[float] = None
) -> Grid:
    """Cell centers spaced ``resolution`` apart, clipped to x^2 + y^2 <= r^2.

    Centers sit at -r + res/2 + i*res laterally and res/2 + j*res forward.
    With ``z_slice`` given, all cells share that height; otherwise layers are
    stacked at res/2 + k*res for every center strictly below the height.
    """
    if not (0.0 < resolution < ws.radius) or not math.isfinite(resolution):
        raise InvalidResolution(
            f"resolution must be in (0, {ws.radius}), got {resolution}"
        )
    if z_slice is not None and not 0.0 <= z_slice <= ws.height:
        raise SliceOutOfRange(
            f"z_slice must be in [0, {ws.height}], got {z_slice}"
        )

    r = ws.radius
    xs = []
    i = 0
    while True:
        x = -r + resolution / 2 + i * resolution
        if x >= r:
            break
        xs.append(x)
        i += 1
    ys = []
    j = 0
    while True:
        y = resolution / 2 + j * resolution
        if y >= r:
            break
        ys.append(y)
        j += 1
    if z_slice is not None:
        zs = [float(z_slice)]
    else:
        zs = []
        k = 0
        while True:
            z = resolution / 2 + k * resolution
            if z >= ws.height:
                break
            zs.append(z)
            k += 1

    points = []
    for z in zs:
        for y in ys:
            for x in xs:
                if x * x + y * y <= r * r:
                    points.append(features_from_xyz(x, y, z))
    return Grid(tuple(points), float(resolution), z_slice, ws)


@dataclass(frozen=True)
class DifficultyMap:
    """Model predictions over a grid, in grid order."""

    points: tuple[TaskFeatures, ...]
    estimates: tuple[DifficultyEstimate, ...]
    resolution: float
    z_slice: Optional[float]

    def __len__(self) -> int:
        return len(self.points)

    def cells(self):
        return zip(self.points, self.estimates)

    def tau_values(self) -> np.ndarray:
        return np.array([e.tau_hat for e in self.estimates], dtype=np.float64)

    def has_leaf_ids(self) -> bool:
        return all(e.leaf_id is not None for e in self.estimates)


def difficulty_map(model: DifficultyPredictor, grid: Grid) -> DifficultyMap:
    """Evaluate the model at every cell center; no resampling or smoothing."""
    estimates = tuple(model.predict(p) for p in grid.points)
    return DifficultyMap(grid.points, estimates, grid.resolution, grid.z_slice)


@dataclass(frozen=True)
class Region:
    """All grid cells sharing one leaf: indices into the map's grid order."""

    leaf_id: int
    tau_hat: float
    cells: tuple[int, ...]
    connected: bool


def _lattice_coords(m: DifficultyMap) -> list[tuple[int, int, int]]:
    # Cell centers sit on a half-integer lattice of the resolution; doubling
    # makes them integers, so neighbours differ by exactly 2 along one axis.
    coords = []
    for p in m.points:
        qx = round(2.0 * p.x / m.resolution)
        qy = round(2.0 * p.y / m.resolution)
        qz = 0 if m.z_slice is not None else round(2.0 * p.z / m.resolution)
        coords.append((qx, qy, qz))
    return coords


def extract_regions(m: DifficultyMap) -> list[Region]:
    """Group cells by leaf id and flag whether each group is 4-connected.

    Connectivity is within a slice: two cells are neighbours when they share
    a z layer and touch along x or y.  Regions come back sorted by descending
    |tau|, then leaf id.  Raises NoLeafIds for maps from models that do not
    assign leaves (ensembles, T-learners).
    """
    if len(m) == 0:
        return []
    if not m.has_leaf_ids():
        raise NoLeafIds("map was built from a model without leaf assignments")

    coords = _lattice_coords(m)
    by_leaf: dict[int, list[int]] = defaultdict(list)
    for i, est in enumerate(m.estimates):
        by_leaf[est.leaf_id].append(i)

    regions = []
    for leaf_id, cell_indices in by_leaf.items():
        cell_set = {coords[i]: i for i in cell_indices}
        remaining = set(cell_set)
        components = 0
        while remaining:
            components += 1
            queue = deque([next(iter(remaining))])
            remaining.discard(queue[0])
            while queue:
                qx, qy, qz = queue.popleft()
                for nb in (
                    (qx - 2, qy, qz),
                    (qx + 2, qy, qz),
                    (qx, qy - 2, qz),
                    (qx, qy + 2, qz),
                ):
                    if nb in remaining:
                        remaining.discard(nb)
                        queue.append(nb)
        regions.append(
            Region(
                leaf_id=leaf_id,
                tau_hat=m.estimates[cell_indices[0]].tau_hat,
                cells=tuple(cell_indices),
                connected=components == 1,
            )
        )
    regions.sort(key=lambda reg: (-abs(reg.tau_hat), reg.leaf_id))
    return regions


# --- rendering ---------------------------------------------------------------


@dataclass(frozen=True)
class DivergingPalette:
    """Three-anchor diverging colour scale, linear in tau, centered at 0."""

    negative: tuple[int, int, int] = (33, 102, 172)
    center: tuple[int, int, int] = (247, 247, 247)
    positive: tuple[int, int, int] = (178, 24, 43)

    def color(self, t: float) -> str:
        """Hex colour for t in [-1, 1]; t = 0 is the center anchor."""
        t = max(-1.0, min(1.0, t))
        lo, hi = (self.center, self.positive) if t >= 0 else (self.center, self.negative)
        u = abs(t)
        rgb = tuple(round(a + (b - a) * u) for a, b in zip(lo, hi))
        return "#{:02x}{:02x}{:02x}".format(*rgb)


_PX_PER_M = 1000.0
_MARGIN = 70.0
_LEGEND_H = 70.0


def render_svg_slice(
    m: DifficultyMap, palette: DivergingPalette = DivergingPalette()
) -> bytes:
    """Render one z slice as an SVG heatmap; byte-deterministic per input.

    One rect per cell; the colour scale is symmetric around 0 out to the
    largest |tau| in the map, with a three-swatch legend and axis labels in
    meters.  Raises NotASlice for layered maps.
    """
    if m.z_slice is None:
        raise NotASlice("SVG rendering needs a map built on one z slice")
    if len(m) == 0:
        raise NotASlice("cannot render an empty map")

    tau = m.tau_values()
    vmax = float(np.max(np.abs(tau)))
    scale_max = vmax if vmax > 0 else 1.0

    res = m.resolution
    min_x = min(p.x for p in m.points) - res / 2
    max_x = max(p.x for p in m.points) + res / 2
    max_y = max(p.y for p in m.points) + res / 2
    plot_w = (max_x - min_x) * _PX_PER_M
    plot_h = max_y * _PX_PER_M
    width = plot_w + 2 * _MARGIN
    height = plot_h + 2 * _MARGIN + _LEGEND_H

    def sx(x_m: float) -> float:
        return _MARGIN + (x_m - min_x) * _PX_PER_M

    def sy(y_m: float) -> float:
        return _MARGIN + (max_y - y_m) * _PX_PER_M

    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.1f} {height:.1f}">\n'
    )
    out.write(f"<title>personalized difficulty, z = {m.z_slice:.3f} m</title>\n")
    out.write(f'<rect x="0" y="0" width="{width:.1f}" height="{height:.1f}" fill="white"/>\n')
    out.write(
        f'<text x="{width / 2:.1f}" y="{_MARGIN / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">'
        f"estimated difficulty tau_hat (s), z = {m.z_slice:.3f} m</text>\n"
    )

    cell_px = res * _PX_PER_M
    for p, est in m.cells():
        color = palette.color(est.tau_hat / scale_max)
        out.write(
            f'<rect x="{sx(p.x - res / 2):.2f}" y="{sy(p.y + res / 2):.2f}" '
            f'width="{cell_px:.2f}" height="{cell_px:.2f}" fill="{color}">'
            f"<title>x={p.x:.3f} y={p.y:.3f} tau={est.tau_hat:.4f}</title></rect>\n"
        )

    # axes
    axis_y = sy(0.0)
    out.write(
        f'<line x1="{sx(min_x):.2f}" y1="{axis_y:.2f}" x2="{sx(max_x):.2f}" '
        f'y2="{axis_y:.2f}" stroke="black" stroke-width="1"/>\n'
    )
    out.write(
        f'<text x="{width / 2:.1f}" y="{axis_y + 35:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">x (m)</text>\n'
    )
    out.write(
        f'<text x="{_MARGIN - 45:.1f}" y="{sy(max_y / 2):.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 {_MARGIN - 45:.1f} {sy(max_y / 2):.1f})">y (m)</text>\n'
    )
    for x_tick in (min_x, 0.0, max_x):
        out.write(
            f'<text x="{sx(x_tick):.2f}" y="{axis_y + 18:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{x_tick:.2f}</text>\n'
        )

    # legend: min / 0 / max swatches
    ly = height - _LEGEND_H + 10
    swatch = 24.0
    entries = [(-scale_max, palette.color(-1.0)), (0.0, palette.color(0.0)), (scale_max, palette.color(1.0))]
    for idx, (value, color) in enumerate(entries):
        lx = _MARGIN + idx * 130.0
        out.write(
            f'<rect x="{lx:.1f}" y="{ly:.1f}" width="{swatch:.1f}" height="{swatch:.1f}" '
            f'fill="{color}" stroke="black" stroke-width="0.5"/>\n'
        )
        out.write(
            f'<text x="{lx + swatch + 6:.1f}" y="{ly + 17:.1f}" '
            f'font-family="sans-serif" font-size="12">{value:+.3f} s</text>\n'
        )
    out.write("</svg>\n")
    return out.getvalue().encode("utf-8")


MAP_CSV_HEADER = "x_m,y_m,z_m,dist_m,tau_hat_s,leaf_id"


def export_map_csv(m: DifficultyMap) -> bytes:
    """Map as CSV in grid order; floats at 9 decimals, leaf_id blank when absent."""
    lines = [MAP_CSV_HEADER]
    for p, est in m.cells():
        leaf = "" if est.leaf_id is None else str(est.leaf_id)
        lines.append(
            f"{p.x:.9f},{p.y:.9f},{p.z:.9f},{p.dist:.9f},{est.tau_hat:.9f},{leaf}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")
