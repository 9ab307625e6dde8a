"""Static top-down SVG of global trajectories."""

from __future__ import annotations

import colorsys
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .errors import StateError
from .io import fmt, load_tracks
from .model import TrackRow

PX_PER_UNIT = 40.0
MARGIN = 40.0
LEGEND_WIDTH = 120.0


def id_color(global_id: int) -> str:
    """Deterministic, well-spread color per id (golden-ratio hue walk)."""
    hue = (global_id * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.85)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def to_svg_xy(x: float, y: float) -> Tuple[float, float]:
    return MARGIN + x * PX_PER_UNIT, MARGIN + y * PX_PER_UNIT


def trajectories(rows: Sequence[TrackRow]) -> Dict[int, List[Tuple[float, float]]]:
    """Per global id, the mean map point over cameras at each frame, in frame order."""
    acc: Dict[int, Dict[int, List[Tuple[float, float]]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        acc[r.global_id][r.frame].append(r.world)
    out = {}
    for gid in sorted(acc):
        pts = []
        for frame in sorted(acc[gid]):
            ps = acc[gid][frame]
            pts.append((sum(p[0] for p in ps) / len(ps), sum(p[1] for p in ps) / len(ps)))
        out[gid] = pts
    return out


def svg_document(rows: Sequence[TrackRow], map_size: Tuple[float, float]) -> str:
    width, height = map_size
    if any(r.xworld != r.xworld or r.yworld != r.yworld for r in rows):
        raise StateError("tracks lack world coordinates")
    w_px = 2 * MARGIN + width * PX_PER_UNIT + LEGEND_WIDTH
    h_px = 2 * MARGIN + height * PX_PER_UNIT
    x0, y0 = to_svg_xy(0, 0)
    x1, y1 = to_svg_xy(width, height)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fmt(w_px)}" height="{fmt(h_px)}">',
        f'<rect x="{fmt(x0)}" y="{fmt(y0)}" width="{fmt(x1 - x0)}" height="{fmt(y1 - y0)}" fill="none" stroke="#888"/>',
        f'<g id="axes" stroke="#000"><line x1="{fmt(x0)}" y1="{fmt(y0)}" x2="{fmt(x1)}" y2="{fmt(y0)}"/>'
        f'<line x1="{fmt(x0)}" y1="{fmt(y0)}" x2="{fmt(x0)}" y2="{fmt(y1)}"/></g>',
        f'<text x="{fmt(x1)}" y="{fmt(y0 - 8)}" text-anchor="end" font-size="12">x</text>',
        f'<text x="{fmt(x0 - 8)}" y="{fmt(y1)}" font-size="12">y</text>',
    ]
    tracks = trajectories(rows)
    for gid, pts in tracks.items():
        coords = [to_svg_xy(*p) for p in pts]
        d = "M " + " L ".join(f"{fmt(x)} {fmt(y)}" for x, y in coords)
        out.append(f'<path id="track-{gid}" d="{d}" fill="none" stroke="{id_color(gid)}" stroke-width="2"/>')
    lx = x1 + 20
    out.append(f'<g id="legend" font-size="12"><text x="{fmt(lx)}" y="{fmt(y0)}">global id</text>')
    for i, gid in enumerate(tracks, start=1):
        ly = y0 + 16 * i
        out.append(
            f'<rect x="{fmt(lx)}" y="{fmt(ly - 9)}" width="10" height="10" fill="{id_color(gid)}"/>'
            f'<text x="{fmt(lx + 16)}" y="{fmt(ly)}">{gid}</text>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _check_world_columns(path: Path) -> None:
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        n = len(line.split())
        if n == 7:
            raise StateError(f"{path}:{lineno}: track row has no world coordinates")


def render_topdown(tracks_path, map_size: Tuple[float, float], out_path) -> Path:
    """Write an SVG with one polyline per global id; output bytes depend only on the inputs."""
    path = Path(tracks_path)
    if path.exists():
        _check_world_columns(path)
    rows = load_tracks(path)
    out = Path(out_path)
    out.write_text(svg_document(rows, map_size))
    return out
