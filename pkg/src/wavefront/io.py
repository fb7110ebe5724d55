"""Snapshot serialization, CSV series emission, and SVG rendering.

Snapshots are JSON (schema version 1) with floats written as shortest
round-trip decimals, so parse(emit(front)) reproduces every numeric field
bit for bit.  Sample positions are stored only for live directions; dead
directions carry their death time and everything else is recomputed on
demand from the pure evaluation map.

Renders are static SVG: flat surfaces in their rectangular viewport, the
disk in its bounding square with the rim drawn, the cube as a cross net
(L F R B in a row, U above F, D below F).  Identical fronts produce
identical bytes.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .frontier import ArcInterval, Front, FrontComponent, PropagationParams
from .metrics import DensityReport
from .lattice import LatticeCount
from .surfaces import (
    FACE_NAMES,
    CubeSurface,
    DiskBilliard,
    KleinBottle,
    RectBilliard,
    Torus,
    format_point,
    format_surface,
    parse_point,
    parse_surface,
)

SNAPSHOT_VERSION = 1

_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


class SnapshotError(ValueError):
    """Snapshot document malformed or violating the schema."""


# ---------------------------------------------------------------------------
# snapshots


def _sample_entry(front: Front, i: int):
    if isinstance(front.surface, CubeSurface):
        coords = [
            FACE_NAMES[int(front.face[i])],
            float(front.pos[i, 0]),
            float(front.pos[i, 1]),
        ]
    else:
        coords = [float(front.pos[i, 0]), float(front.pos[i, 1])]
    return [float(front.thetas[i]), coords, bool(front.alive[i])]


def emit_snapshot(front: Front) -> bytes:
    """Serialize a front to JSON bytes (schema version 1)."""
    front.ensure_evaluated()
    comps = []
    for comp in sorted(front.components, key=lambda c: c.interval.theta_lo):
        samples = []
        for start, stop in comp.segments:
            samples.extend(_sample_entry(front, i) for i in range(start, stop))
        comps.append(
            {
                "interval": [comp.interval.theta_lo, comp.interval.theta_hi],
                "split_time": comp.split_time,
                "samples": samples,
            }
        )
    doc = {
        "version": SNAPSHOT_VERSION,
        "surface": format_surface(front.surface),
        "source": format_point(front.surface, front.source),
        "t": front.t,
        "arc": [front.arc.theta_lo, front.arc.theta_hi],
        "params": {
            "h_max": front.params.h_max,
            "theta_min": front.params.theta_min,
            "delta_t_check": front.params.delta_t_check,
            "sample_budget": front.params.sample_budget,
        },
        "components": comps,
        "dead_directions": [list(pair) for pair in front.dead_directions],
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _require_keys(obj: dict, keys: tuple, where: str):
    unknown = set(obj) - set(keys)
    if unknown:
        raise SnapshotError(f"unknown key {sorted(unknown)[0]!r} in {where}")
    missing = set(keys) - set(obj)
    if missing:
        raise SnapshotError(f"missing key {sorted(missing)[0]!r} in {where}")


def parse_snapshot(data: bytes) -> Front:
    """Reconstruct a front from snapshot bytes.

    Unknown keys are rejected.  Derived arrays (lifted covers, sheets, dead
    sample positions) are left to lazy recomputation, which is exact
    because evaluation is pure.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise SnapshotError(
            f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise SnapshotError("snapshot must be a JSON object")
    _require_keys(
        doc,
        (
            "version", "surface", "source", "t", "arc", "params",
            "components", "dead_directions",
        ),
        "snapshot",
    )
    if doc["version"] != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {doc['version']!r}")

    surface = parse_surface(doc["surface"])
    source = parse_point(surface, doc["source"])
    _require_keys(
        doc["params"],
        ("h_max", "theta_min", "delta_t_check", "sample_budget"),
        "params",
    )
    params = PropagationParams(**doc["params"])
    arc = ArcInterval(float(doc["arc"][0]), float(doc["arc"][1]))
    t = float(doc["t"])
    cube = isinstance(surface, CubeSurface)

    entries = []  # [theta, pos, face, alive, death_time, component index]
    for ci, comp in enumerate(doc["components"]):
        _require_keys(comp, ("interval", "split_time", "samples"), "component")
        for sample in comp["samples"]:
            theta, coords, alive = sample
            if cube:
                if len(coords) != 3 or coords[0] not in FACE_NAMES:
                    raise SnapshotError(f"bad cube coordinates {coords!r}")
                face = FACE_NAMES.index(coords[0])
                xy = (float(coords[1]), float(coords[2]))
            else:
                if len(coords) != 2:
                    raise SnapshotError(f"bad coordinates {coords!r}")
                face = 0
                xy = (float(coords[0]), float(coords[1]))
            entries.append([float(theta), xy, face, bool(alive), math.inf, ci])
    by_theta = {e[0]: e for e in entries}
    if len(by_theta) != len(entries):
        raise SnapshotError("duplicate sample direction")
    for theta, death in doc["dead_directions"]:
        entry = by_theta.get(float(theta))
        if entry is None:
            entries.append(
                [float(theta), (math.nan, math.nan), 0, False, float(death), -1]
            )
        elif entry[3]:
            raise SnapshotError("live sample listed among dead directions")
        else:
            entry[4] = float(death)
    for entry in entries:
        if not entry[3] and not math.isfinite(entry[4]):
            raise SnapshotError("dead sample without a death time")
    if not entries:
        raise SnapshotError("snapshot has no samples")
    entries.sort(key=lambda e: e[0])

    n = len(entries)
    thetas = np.array([e[0] for e in entries])
    pos = np.array([e[1] for e in entries])
    face = np.array([e[2] for e in entries], dtype=np.int64) if cube else None
    alive = np.array([e[3] for e in entries], dtype=bool)
    death = np.array([e[4] for e in entries])
    owner = [e[5] for e in entries]

    components = []
    for ci, comp in enumerate(doc["components"]):
        idx = [i for i in range(n) if owner[i] == ci]
        if not idx:
            raise SnapshotError("component with no samples")
        runs = []
        run_start = idx[0]
        prev = idx[0]
        for i in idx[1:]:
            if i != prev + 1:
                runs.append((run_start, prev + 1))
                run_start = i
            prev = i
        runs.append((run_start, prev + 1))
        interval = ArcInterval(float(comp["interval"][0]), float(comp["interval"][1]))
        if len(runs) == 2 and interval.theta_hi > arc.theta_hi:
            runs = [runs[1], runs[0]]  # wrap-around: high-theta run first
        elif len(runs) > 1:
            raise SnapshotError("component samples are not contiguous")
        child = FrontComponent(
            interval=interval,
            split_time=float(comp["split_time"]),
            segments=tuple(runs),
        )
        child._theta_first = float(thetas[runs[0][0]])
        child._theta_last = float(thetas[runs[-1][1] - 1])
        components.append(child)

    return Front(
        surface=surface,
        source=source,
        t=t,
        arc=arc,
        params=params,
        thetas=thetas,
        pos=pos,
        alive=alive,
        death_time=death,
        components=components,
        cover=None,
        refl=None,
        group=None,
        face=face,
        sheet=None,
    )


# ---------------------------------------------------------------------------
# CSV series


def emit_series(rows, params: dict | None = None) -> bytes:
    """CSV for a homogeneous list of DensityReport or LatticeCount rows.

    An optional leading '#' comment embeds the parameters that produced
    the series, so the file is self-describing.
    """
    if not rows:
        raise SnapshotError("empty series")
    kinds = {type(r) for r in rows}
    if len(kinds) != 1:
        raise SnapshotError("mixed row types in series")
    lines = []
    if params:
        body = " ".join(f"{k}={v}" for k, v in params.items())
        lines.append(f"# {body}")
    kind = kinds.pop()
    if kind is DensityReport:
        lines.append("t,covering_radius,cells_hit_fraction,length,components")
        for r in rows:
            frac = r.cells_hit / r.cells_total
            lines.append(
                f"{r.t!r},{r.covering_radius!r},{frac!r},{r.length!r},"
                f"{r.n_components}"
            )
    elif kind is LatticeCount:
        lines.append("t,h,N_t,annulus_count,expected_area,E_t,gauss_bound")
        for r in rows:
            area = 2.0 * math.pi * r.t * r.h
            gbound = math.sqrt(2.0) * 2.0 * math.pi * r.t
            lines.append(
                f"{r.t!r},{r.h!r},{r.N_t},{r.annulus_count},{area!r},"
                f"{r.E_t!r},{gbound!r}"
            )
    else:
        raise SnapshotError(f"cannot serialize rows of type {kind.__name__}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# SVG rendering

_NET_SLOT = {"L": (0, 1), "F": (1, 1), "R": (2, 1), "B": (3, 1),
             "U": (1, 2), "D": (1, 0)}


def _net_xy(surface: CubeSurface, face_idx: np.ndarray, pos: np.ndarray):
    """Cross-net plane coordinates of cube chart points."""
    s = surface.side
    out = np.empty_like(pos)
    for f, name in enumerate(FACE_NAMES):
        col, row = _NET_SLOT[name]
        m = face_idx == f
        out[m, 0] = col * s + pos[m, 0]
        out[m, 1] = row * s + pos[m, 1]
    return out


def _viewport(surface):
    if isinstance(surface, Torus):
        return surface.alpha, surface.beta
    if isinstance(surface, KleinBottle):
        return 1.0, 1.0
    if isinstance(surface, RectBilliard):
        return surface.a, surface.b
    if isinstance(surface, DiskBilliard):
        return 2.0 * surface.radius, 2.0 * surface.radius
    return 4.0 * surface.side, 3.0 * surface.side


def _plane_points(front: Front, indices: np.ndarray):
    """Viewport coordinates (y up) for the given sample indices."""
    surface = front.surface
    pts = front.pos[indices]
    if isinstance(surface, CubeSurface):
        return _net_xy(surface, front.face[indices], pts)
    if isinstance(surface, DiskBilliard):
        return pts + surface.radius
    return pts


def _seam_breaks(surface, plane: np.ndarray) -> np.ndarray:
    """Mask of segments that cross an identification seam (drawn as gaps)."""
    d = np.abs(np.diff(plane, axis=0))
    if isinstance(surface, Torus):
        return (d[:, 0] > 0.5 * surface.alpha) | (d[:, 1] > 0.5 * surface.beta)
    if isinstance(surface, KleinBottle):
        return (d[:, 0] > 0.5) | (d[:, 1] > 0.5)
    if isinstance(surface, CubeSurface):
        return np.hypot(d[:, 0], d[:, 1]) > 0.45 * surface.side
    return np.zeros(plane.shape[0] - 1, dtype=bool)


def _path_data(plane: np.ndarray, breaks: np.ndarray, height: float) -> str:
    parts = []
    pen_up = True
    for i in range(plane.shape[0]):
        x, y = float(plane[i, 0]), height - float(plane[i, 1])
        parts.append(f"{'M' if pen_up else 'L'}{x!r} {y!r}")
        pen_up = i < breaks.shape[0] and bool(breaks[i])
    return "".join(parts)


def render_svg(
    front: Front, width_px: int = 1600, color_by_component: bool = True
) -> bytes:
    """Render a front as SVG bytes, one path per component.

    Identification seams and the gaps between components are pen-up moves,
    so torn fronts are never visually joined.  The source is marked with a
    dot.  Output bytes are a pure function of the front.
    """
    front.ensure_evaluated()
    surface = front.surface
    w, h = _viewport(surface)
    height_px = max(1, round(width_px * h / w))
    sw = 1.2 * w / width_px
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" '
        f'height="{height_px}" viewBox="0 0 {w!r} {h!r}">',
        f"<!-- surface={format_surface(surface)} "
        f"source={format_point(surface, front.source)} t={front.t!r} "
        f"h_max={front.params.h_max!r} theta_min={front.params.theta_min!r} "
        f"delta_t_check={front.params.delta_t_check!r} "
        f"sample_budget={front.params.sample_budget} -->",
        f'<rect width="{w!r}" height="{h!r}" fill="white"/>',
    ]
    outline = f'fill="none" stroke="#cccccc" stroke-width="{sw!r}"'
    if isinstance(surface, DiskBilliard):
        r = surface.radius
        lines.append(f'<circle cx="{r!r}" cy="{r!r}" r="{r!r}" {outline}/>')
    elif isinstance(surface, CubeSurface):
        s = surface.side
        for name, (col, row) in _NET_SLOT.items():
            x, y = col * s, h - (row + 1) * s
            lines.append(
                f'<rect x="{x!r}" y="{y!r}" width="{s!r}" height="{s!r}" '
                f"{outline}/>"
            )
    else:
        lines.append(f'<rect width="{w!r}" height="{h!r}" {outline}/>')

    for k, comp in enumerate(front.components):
        idx = comp.sample_indices
        if idx.size == 0:
            continue
        plane = _plane_points(front, idx)
        color = _PALETTE[k % len(_PALETTE)] if color_by_component else _PALETTE[0]
        if idx.size == 1:
            x, y = float(plane[0, 0]), h - float(plane[0, 1])
            lines.append(
                f'<circle cx="{x!r}" cy="{y!r}" r="{(2 * sw)!r}" fill="{color}"/>'
            )
            continue
        breaks = _seam_breaks(surface, plane)
        lines.append(
            f'<path d="{_path_data(plane, breaks, h)}" fill="none" '
            f'stroke="{color}" stroke-width="{sw!r}" stroke-linejoin="round"/>'
        )

    if isinstance(surface, CubeSurface):
        sp = np.array([[FACE_NAMES.index(front.source.face),
                        front.source.u, front.source.v]])
        spt = _net_xy(surface, sp[:, 0].astype(np.int64), sp[:, 1:3].astype(float))
    elif isinstance(surface, DiskBilliard):
        spt = np.array([[front.source[0] + surface.radius,
                         front.source[1] + surface.radius]])
    else:
        spt = np.array([[front.source[0], front.source[1]]])
    lines.append(
        f'<circle cx="{float(spt[0, 0])!r}" cy="{(h - float(spt[0, 1]))!r}" '
        f'r="{(3 * sw)!r}" fill="#000000"/>'
    )
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")
