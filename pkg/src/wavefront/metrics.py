"""Density and growth measurements for propagated fronts.

Three views of how a front fills its surface:

* ``density_report`` lays an eps-grid over the surface and reports cell
  occupancy together with the covering radius (the distance from the worst
  cell center to the nearest front sample).
* ``estimate_tau`` scans checkpoint times for the first time after which
  every ball of a given radius stays hit, the coverage time of a source.
* ``length_growth_curve`` records front length over a time grid and fits
  the asymptotic slope.

Distances are geodesic: wrap images on the torus and Klein bottle, straight
chords inside the convex billiards, unfolded face charts on the cube (cube
distances beyond the double-unfolding radius are realizable-path upper
bounds, so reported covering radii remain valid upper bounds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .frontier import (
    Front,
    PropagationParams,
    component_count,
    default_params,
    front_length,
    init_front,
    propagate,
)
from .surfaces import (
    CubeSurface,
    DiskBilliard,
    KleinBottle,
    PreconditionError,
    RectBilliard,
    Torus,
    cube_develop_step,
    point_images,
)

NOT_ACHIEVED = "not achieved by t_max"


@dataclass(frozen=True)
class DensityReport:
    """Grid occupancy and covering radius of one front at one time."""

    t: float
    eps: float
    cells_total: int
    cells_hit: int
    covering_radius: float
    length: float
    n_components: int


@dataclass(frozen=True)
class TauEstimate:
    """Coverage time scan result.

    ``tau`` is the smallest checkpoint from which every ball stayed hit at
    all later checkpoints up to ``t_max``, or the string ``NOT_ACHIEVED``.
    Persistence is only checked on the sampled checkpoint grid; nothing is
    extrapolated past ``t_max``.  ``first_full_cover_time`` is the first
    checkpoint with every ball hit (``inf`` if that never happens).
    """

    r: float
    tau: object
    t_max: float
    delta_t: float
    first_full_cover_time: float


@dataclass(frozen=True)
class GrowthCurve:
    """Front length over a time grid plus the fitted asymptotic slope."""

    points: tuple
    slope: float


# ---------------------------------------------------------------------------
# nearest-sample geodesic distance queries


def _grid_axis(extent: float, eps: float):
    """Cell count and size for one axis: uniform cells no wider than eps."""
    n = max(1, math.ceil(extent / eps - 1e-9))
    return n, extent / n


class _NearestFront:
    """KD-tree wrapper answering min geodesic distance to live samples."""

    def __init__(self, front: Front):
        front.ensure_evaluated()
        self.surface = front.surface
        live = front.alive
        pts = front.pos[live]
        if isinstance(self.surface, CubeSurface):
            side = self.surface.side
            faces = front.face[live]
            self._trees = []
            for f in range(6):
                clouds = [pts[faces == f]]
                for e in range(4):
                    g, rot1, c1 = cube_develop_step(f, e)
                    clouds.append(pts[faces == g] @ rot1.T + c1 * side)
                    for e2 in range(4):
                        g2, rot2, c2 = cube_develop_step(g, e2)
                        if g2 == f:
                            continue
                        rot12 = rot1 @ rot2
                        c12 = rot1 @ (c2 * side) + c1 * side
                        clouds.append(pts[faces == g2] @ rot12.T + c12)
                cloud = np.concatenate(clouds, axis=0)
                self._trees.append(cKDTree(cloud) if cloud.shape[0] else None)
            self._tree = None
        else:
            self._tree = cKDTree(pts) if pts.shape[0] else None

    def query(self, pts: np.ndarray, faces: np.ndarray | None = None):
        """Min distance from each query point to the front's live samples.

        For the cube, ``faces`` gives the chart of each query point and the
        result can exceed the true geodesic distance only beyond one face
        width (double-unfolding trust radius).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if isinstance(self.surface, CubeSurface):
            out = np.full(pts.shape[0], np.inf)
            for f in range(6):
                m = faces == f
                if m.any() and self._trees[f] is not None:
                    out[m] = self._trees[f].query(pts[m])[0]
            return out
        if self._tree is None:
            return np.full(pts.shape[0], np.inf)
        if isinstance(self.surface, (Torus, KleinBottle)):
            imgs = point_images(self.surface, pts)
            d = self._tree.query(imgs.reshape(-1, 2))[0]
            return d.reshape(imgs.shape[0], pts.shape[0]).min(axis=0)
        return self._tree.query(pts)[0]


# ---------------------------------------------------------------------------
# occupancy grids


def _live_pairs(front: Front):
    """Index pairs (i, i+1) of adjacent live samples within components."""
    first = []
    for comp in front.components:
        for start, stop in comp.segments:
            if stop - start >= 2:
                first.append(np.arange(start, stop - 1))
    if not first:
        return np.empty(0, dtype=int)
    return np.concatenate(first)


def _mark_chart_cells(pa, pb, lo, sx, sy):
    """Cells touched by short segments pa->pb in one planar chart.

    Returns a list of (i, j) integer index arrays (possibly outside the
    grid; the caller wraps or clamps them).  Segments are shorter than a
    cell side, so each touches at most one extra cell beyond its endpoint
    cells: the cell at the corner cut when the segment crosses both a
    vertical and a horizontal grid line.
    """
    ia = np.floor((pa[:, 0] - lo[0]) / sx).astype(np.int64)
    ja = np.floor((pa[:, 1] - lo[1]) / sy).astype(np.int64)
    ib = np.floor((pb[:, 0] - lo[0]) / sx).astype(np.int64)
    jb = np.floor((pb[:, 1] - lo[1]) / sy).astype(np.int64)
    cells = [(ia, ja), (ib, jb)]
    diag = (ia != ib) & (ja != jb)
    if diag.any():
        xa, ya = pa[diag, 0] - lo[0], pa[diag, 1] - lo[1]
        xb, yb = pb[diag, 0] - lo[0], pb[diag, 1] - lo[1]
        tx = (sx * np.maximum(ia[diag], ib[diag]) - xa) / (xb - xa)
        ty = (sy * np.maximum(ja[diag], jb[diag]) - ya) / (yb - ya)
        d = np.nonzero(diag)[0]
        through_b_col = d[tx <= ty]
        through_a_col = d[ty <= tx]
        cells.append((ib[through_b_col], ja[through_b_col]))
        cells.append((ia[through_a_col], jb[through_a_col]))
    return cells


def _occupancy_flat(front: Front, eps: float):
    """Occupancy and covering-radius centers for the flat 2D surfaces."""
    surface = front.surface
    if isinstance(surface, (Torus, RectBilliard)):
        ext = (surface.alpha, surface.beta) if isinstance(surface, Torus) else (
            surface.a,
            surface.b,
        )
    else:
        ext = (1.0, 1.0)
    wrap = isinstance(surface, (Torus, KleinBottle))
    klein = isinstance(surface, KleinBottle)
    nx, sx = _grid_axis(ext[0], eps)
    ny, sy = _grid_axis(ext[1], eps)
    hit = np.zeros((nx, ny), dtype=bool)

    def reduce_ij(i, j):
        if klein:
            m = np.floor_divide(j, ny)
            j = j - m * ny
            i = np.where(m % 2 == 1, -1 - i, i)
            return i % nx, j
        if wrap:
            return i % nx, j % ny
        return np.clip(i, 0, nx - 1), np.clip(j, 0, ny - 1)

    pos = front.pos
    li = np.nonzero(front.alive)[0]
    i0 = np.floor(pos[li, 0] / sx).astype(np.int64)
    j0 = np.floor(pos[li, 1] / sy).astype(np.int64)
    i0, j0 = reduce_ij(i0, j0)
    hit[i0, j0] = True

    pairs = _live_pairs(front)
    if pairs.size:
        pa = pos[pairs]
        pb = pos[pairs + 1]
        if wrap:
            disp = pb - pa
            if klein:
                imgs = point_images(surface, pb)
                d2 = ((imgs - pa[None, :, :]) ** 2).sum(axis=2)
                pb = imgs[np.argmin(d2, axis=0), np.arange(pairs.size)]
            else:
                disp[:, 0] -= ext[0] * np.round(disp[:, 0] / ext[0])
                disp[:, 1] -= ext[1] * np.round(disp[:, 1] / ext[1])
                pb = pa + disp
        for i, j in _mark_chart_cells(pa, pb, (0.0, 0.0), sx, sy):
            i, j = reduce_ij(i, j)
            hit[i, j] = True

    cx = (np.arange(nx) + 0.5) * sx
    cy = (np.arange(ny) + 0.5) * sy
    centers = np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1).reshape(-1, 2)
    return nx * ny, int(hit.sum()), centers, None


def _occupancy_disk(front: Front, eps: float):
    radius = front.surface.radius
    n, s = _grid_axis(2.0 * radius, eps)
    lo = -radius
    hit = np.zeros((n, n), dtype=bool)

    pos = front.pos
    li = np.nonzero(front.alive)[0]
    i0 = np.clip(np.floor((pos[li, 0] - lo) / s).astype(np.int64), 0, n - 1)
    j0 = np.clip(np.floor((pos[li, 1] - lo) / s).astype(np.int64), 0, n - 1)
    hit[i0, j0] = True

    pairs = _live_pairs(front)
    if pairs.size:
        for i, j in _mark_chart_cells(pos[pairs], pos[pairs + 1], (lo, lo), s, s):
            hit[np.clip(i, 0, n - 1), np.clip(j, 0, n - 1)] = True

    edges = lo + s * np.arange(n + 1)
    lo_e, hi_e = edges[:-1], edges[1:]
    # nearest point of each cell box to the origin decides intersection;
    # farthest corner decides full containment
    near_ax = np.maximum(np.maximum(lo_e, -hi_e), 0.0)
    far_ax = np.maximum(np.abs(lo_e), np.abs(hi_e))
    near2 = near_ax[:, None] ** 2 + near_ax[None, :] ** 2
    far2 = far_ax[:, None] ** 2 + far_ax[None, :] ** 2
    intersects = near2 < radius**2
    interior = far2 <= radius**2 * (1.0 + 1e-12)

    c = lo + s * (np.arange(n) + 0.5)
    centers = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
    return int(intersects.sum()), int(hit.sum()), centers[interior], None


def _occupancy_cube(front: Front, eps: float):
    side = front.surface.side
    n, s = _grid_axis(side, eps)
    hit = np.zeros((6, n, n), dtype=bool)

    pos, faces = front.pos, front.face
    li = np.nonzero(front.alive)[0]
    iu = np.clip(np.floor(pos[li, 0] / s).astype(np.int64), 0, n - 1)
    iv = np.clip(np.floor(pos[li, 1] / s).astype(np.int64), 0, n - 1)
    hit[faces[li], iu, iv] = True

    pairs = _live_pairs(front)
    # only same-face pairs draw a chart segment; the few pairs straddling
    # an edge already mark both endpoint cells above
    pairs = pairs[faces[pairs] == faces[pairs + 1]]
    if pairs.size:
        f = faces[pairs]

        def clip(a):
            return np.clip(a, 0, n - 1)

        ia = np.floor(pos[pairs, 0] / s).astype(np.int64)
        ja = np.floor(pos[pairs, 1] / s).astype(np.int64)
        ib = np.floor(pos[pairs + 1, 0] / s).astype(np.int64)
        jb = np.floor(pos[pairs + 1, 1] / s).astype(np.int64)
        hit[f, clip(ia), clip(ja)] = True
        hit[f, clip(ib), clip(jb)] = True
        diag = (ia != ib) & (ja != jb)
        if diag.any():
            xa, ya = pos[pairs[diag], 0], pos[pairs[diag], 1]
            xb, yb = pos[pairs[diag] + 1, 0], pos[pairs[diag] + 1, 1]
            tx = (s * np.maximum(ia[diag], ib[diag]) - xa) / (xb - xa)
            ty = (s * np.maximum(ja[diag], jb[diag]) - ya) / (yb - ya)
            fd = f[diag]
            m1 = tx <= ty
            m2 = ty <= tx
            hit[fd[m1], clip(ib[diag][m1]), clip(ja[diag][m1])] = True
            hit[fd[m2], clip(ia[diag][m2]), clip(jb[diag][m2])] = True

    c = s * (np.arange(n) + 0.5)
    grid = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
    centers = np.tile(grid, (6, 1))
    center_faces = np.repeat(np.arange(6), n * n)
    return 6 * n * n, int(hit.sum()), centers, center_faces


def density_report(front: Front, eps: float) -> DensityReport:
    """Occupancy and covering radius of a front on an eps-grid.

    The grid tiles the fundamental domain (each face for the cube, the
    bounding box for the disk) with uniform cells no wider than eps.  A
    cell is hit when a live sample lands in it or a front segment crosses
    it.  The covering radius is the max over cell centers (cells fully
    inside the disk; all cells elsewhere) of the distance to the nearest
    live sample.
    """
    if eps < 4.0 * front.params.h_max:
        raise PreconditionError(
            "eps must be at least 4*h_max for a meaningful occupancy grid"
        )
    front.ensure_evaluated()
    if isinstance(front.surface, CubeSurface):
        total, nhit, centers, center_faces = _occupancy_cube(front, eps)
    elif isinstance(front.surface, DiskBilliard):
        total, nhit, centers, center_faces = _occupancy_disk(front, eps)
    else:
        total, nhit, centers, center_faces = _occupancy_flat(front, eps)

    if front.alive.any() and centers.shape[0]:
        dist = _NearestFront(front).query(centers, center_faces)
        covering = float(dist.max())
    else:
        covering = math.inf
    return DensityReport(
        t=front.t,
        eps=eps,
        cells_total=total,
        cells_hit=nhit,
        covering_radius=covering,
        length=front_length(front),
        n_components=component_count(front),
    )


# ---------------------------------------------------------------------------
# coverage time


def _ball_centers(surface, spacing: float):
    """Grid of ball centers at most ``spacing`` apart covering the surface.

    Every surface point lies within spacing/sqrt(2) of some center, so
    hitting every ball of radius r/2 at these centers (spacing = r/2)
    implies hitting every ball of radius r anywhere.
    """
    if isinstance(surface, CubeSurface):
        n, s = _grid_axis(surface.side, spacing)
        c = s * (np.arange(n) + 0.5)
        grid = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
        return np.tile(grid, (6, 1)), np.repeat(np.arange(6), n * n)
    if isinstance(surface, DiskBilliard):
        radius = surface.radius
        n, s = _grid_axis(2.0 * radius, spacing)
        edges = -radius + s * np.arange(n + 1)
        near_ax = np.maximum(np.maximum(edges[:-1], -edges[1:]), 0.0)
        keep = (near_ax[:, None] ** 2 + near_ax[None, :] ** 2) < radius**2
        c = -radius + s * (np.arange(n) + 0.5)
        centers = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
        return centers[keep], None
    if isinstance(surface, Torus):
        ext = (surface.alpha, surface.beta)
    elif isinstance(surface, RectBilliard):
        ext = (surface.a, surface.b)
    else:
        ext = (1.0, 1.0)
    nx, sx = _grid_axis(ext[0], spacing)
    ny, sy = _grid_axis(ext[1], spacing)
    cx = sx * (np.arange(nx) + 0.5)
    cy = sy * (np.arange(ny) + 0.5)
    return (
        np.stack(np.meshgrid(cx, cy, indexing="ij"), axis=-1).reshape(-1, 2),
        None,
    )


def estimate_tau(
    surface,
    source,
    r: float,
    t_max: float,
    delta_t: float,
    params: PropagationParams | None = None,
) -> TauEstimate:
    """Scan checkpoints k*delta_t for persistent full coverage by balls.

    A ball of radius r/2 around each grid center (spacing r/2) must contain
    a live sample; that conservatively implies every radius-r ball on the
    surface is hit.  tau is the earliest checkpoint such that coverage
    holds there and at every later checkpoint through t_max.
    """
    if params is None:
        params = default_params(surface)
    if not r > 2.0 * params.h_max:
        raise PreconditionError("ball radius must exceed 2*h_max")
    if not delta_t > 0:
        raise PreconditionError("delta_t must be positive")
    centers, center_faces = _ball_centers(surface, 0.5 * r)

    times = []
    k = 0
    while k * delta_t <= t_max * (1.0 + 1e-12):
        times.append(k * delta_t)
        k += 1

    front = init_front(surface, source, params=params)
    covered = []
    for tt in times:
        front = propagate(front, tt)
        dist = _NearestFront(front).query(centers, center_faces)
        covered.append(bool(np.all(dist <= 0.5 * r)))

    first_full = next(
        (times[i] for i, c in enumerate(covered) if c), math.inf
    )
    tau = NOT_ACHIEVED
    for i in range(len(times) - 1, -1, -1):
        if not covered[i]:
            break
        tau = times[i]
    return TauEstimate(
        r=r,
        tau=tau,
        t_max=t_max,
        delta_t=delta_t,
        first_full_cover_time=first_full,
    )


# ---------------------------------------------------------------------------
# length growth


def length_growth_curve(
    surface,
    source,
    t_list,
    params: PropagationParams | None = None,
) -> GrowthCurve:
    """Front length at each time in t_list plus the upper-half OLS slope.

    The slope is fit by ordinary least squares through the points with
    t >= median(t_list); the early transient is excluded so the fit
    reflects the asymptotic growth rate.
    """
    t_list = [float(t) for t in t_list]
    if len(t_list) < 2:
        raise PreconditionError("need at least two times to fit a slope")
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise PreconditionError("t_list must be strictly increasing")
    front = init_front(surface, source, params=params)
    points = []
    for tt in t_list:
        front = propagate(front, tt)
        points.append((tt, front_length(front)))
    med = float(np.median(t_list))
    upper = [(t, length) for t, length in points if t >= med]
    ts = np.array([p[0] for p in upper])
    ls = np.array([p[1] for p in upper])
    slope = float(np.polyfit(ts, ls, 1)[0])
    return GrowthCurve(points=tuple(points), slope=slope)
