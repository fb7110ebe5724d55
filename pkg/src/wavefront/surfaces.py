"""Flat surface models and exact evaluation of their exponential maps.

Five models are supported: a rectangular torus R^2/(aZ x bZ), the flat Klein
bottle (unit square with a glide identification), a rectangular billiard
table, a circular billiard table, and the boundary surface of a cube.  All of
them are flat away from at most finitely many cone points, so a unit-speed
geodesic lifts to a straight line in a suitable cover.  Positions at an
arbitrary time are therefore computed in closed form (torus, Klein bottle,
rectangle, disk) or by walking face crossings of the straight development
(cube).  There is no time stepping and no accumulated integration error, and
every evaluation is a pure function of (source, direction, time).

Conventions:

* Planar surface points are (x, y) pairs inside the fundamental domain.
* Cube points are ``CubePoint(face, u, v)`` with ``face`` one of U, D, F, B,
  L, R and in-face chart coordinates (u, v) in [0, side]^2.  Charts are
  oriented so that e_u x e_v is the outward normal.
* Directions are angles theta measured in the source chart; evaluation
  accepts any angle in [0, 2*pi] (the closed upper end makes a full circle
  of directions expressible with an inclusive endpoint).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Budget for face-crossing / reflection events in a single evaluation.
EVENT_BUDGET = 10**7

# A cube ray passing closer than this (times side) to a vertex is discarded.
CORNER_TOL = 1e-9


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class NumericalFailureError(RuntimeError):
    """A computation exceeded its resolution or event budget."""


# ---------------------------------------------------------------------------
# surface models


@dataclass(frozen=True)
class Torus:
    """Flat torus R^2 / (alpha*Z x beta*Z)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise PreconditionError("torus side lengths must be positive")


@dataclass(frozen=True)
class KleinBottle:
    """Flat Klein bottle: unit square, (x, y+1) ~ (1-x, y), (x+1, y) ~ (x, y).

    The glide group is generated by a:(x,y)->(x+1,y) and b:(x,y)->(1-x,y+1);
    the orientation double cover is the 1 x 2 torus.
    """


@dataclass(frozen=True)
class RectBilliard:
    """Rectangular billiard table [0, a] x [0, b] with mirror reflection."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise PreconditionError("billiard side lengths must be positive")


@dataclass(frozen=True)
class DiskBilliard:
    """Circular billiard table of the given radius, centred at the origin."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise PreconditionError("disk radius must be positive")


@dataclass(frozen=True)
class CubeSurface:
    """Boundary surface of a cube with the given side length."""

    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise PreconditionError("cube side must be positive")


SurfaceModel = Torus | KleinBottle | RectBilliard | DiskBilliard | CubeSurface


@dataclass(frozen=True)
class CubePoint:
    """A point on the cube surface: face name plus chart coordinates."""

    face: str
    u: float
    v: float


@dataclass(frozen=True)
class CoverPoint:
    """Development-plane image of an evaluated geodesic endpoint.

    ``x`` and ``y`` are coordinates in the development plane (the source
    chart unrolled along the geodesic).  ``group_elem`` indexes the cube
    rotation carried by the development (0, the identity, elsewhere) and
    ``reflection_count`` counts rim reflections on the disk (0 elsewhere).
    """

    x: float
    y: float
    group_elem: int = 0
    reflection_count: int = 0


def min_extent(surface: SurfaceModel) -> float:
    """Smallest linear extent of the fundamental domain (sets length scales)."""
    if isinstance(surface, Torus):
        return min(surface.alpha, surface.beta)
    if isinstance(surface, KleinBottle):
        return 1.0
    if isinstance(surface, RectBilliard):
        return min(surface.a, surface.b)
    if isinstance(surface, DiskBilliard):
        return surface.radius
    if isinstance(surface, CubeSurface):
        return surface.side
    raise PreconditionError(f"unknown surface model {surface!r}")


# ---------------------------------------------------------------------------
# descriptor grammar:  torus:a,b | klein | rect:a,b | disk:r | cube:s


def parse_surface(text: str) -> SurfaceModel:
    """Parse a surface descriptor such as ``torus:1,1`` or ``cube:1``."""
    text = text.strip()
    head, sep, tail = text.partition(":")
    args: list[float] = []
    if sep:
        try:
            args = [float(part) for part in tail.split(",")]
        except ValueError:
            raise PreconditionError(f"bad surface parameters in {text!r}") from None
    if head == "klein":
        if args:
            raise PreconditionError("klein takes no parameters")
        return KleinBottle()
    if head == "torus":
        if len(args) != 2:
            raise PreconditionError("torus needs two parameters: torus:alpha,beta")
        return Torus(args[0], args[1])
    if head == "rect":
        if len(args) != 2:
            raise PreconditionError("rect needs two parameters: rect:a,b")
        return RectBilliard(args[0], args[1])
    if head == "disk":
        if len(args) != 1:
            raise PreconditionError("disk needs one parameter: disk:radius")
        return DiskBilliard(args[0])
    if head == "cube":
        if len(args) != 1:
            raise PreconditionError("cube needs one parameter: cube:side")
        return CubeSurface(args[0])
    raise PreconditionError(f"unknown surface kind {head!r}")


def _num(x: float) -> str:
    # shortest decimal that round-trips; integers render without the dot
    return repr(int(x)) if float(x).is_integer() and abs(x) < 1e16 else repr(float(x))


def format_surface(surface: SurfaceModel) -> str:
    if isinstance(surface, Torus):
        return f"torus:{_num(surface.alpha)},{_num(surface.beta)}"
    if isinstance(surface, KleinBottle):
        return "klein"
    if isinstance(surface, RectBilliard):
        return f"rect:{_num(surface.a)},{_num(surface.b)}"
    if isinstance(surface, DiskBilliard):
        return f"disk:{_num(surface.radius)}"
    if isinstance(surface, CubeSurface):
        return f"cube:{_num(surface.side)}"
    raise PreconditionError(f"unknown surface model {surface!r}")


def parse_point(surface: SurfaceModel, text: str):
    """Parse ``x,y`` (planar surfaces) or ``FACE/u/v`` (cube)."""
    text = text.strip()
    if isinstance(surface, CubeSurface):
        parts = text.split("/")
        if len(parts) != 3 or parts[0] not in FACE_NAMES:
            raise PreconditionError(f"cube points look like U/0.5/0.5, got {text!r}")
        try:
            point = CubePoint(parts[0], float(parts[1]), float(parts[2]))
        except ValueError:
            raise PreconditionError(f"bad cube coordinates in {text!r}") from None
        return validate_point(surface, point)
    parts = text.split(",")
    if len(parts) != 2:
        raise PreconditionError(f"planar points look like x,y, got {text!r}")
    try:
        point = (float(parts[0]), float(parts[1]))
    except ValueError:
        raise PreconditionError(f"bad coordinates in {text!r}") from None
    return validate_point(surface, point)


def format_point(surface: SurfaceModel, point) -> str:
    if isinstance(surface, CubeSurface):
        return f"{point.face}/{repr(float(point.u))}/{repr(float(point.v))}"
    return f"{repr(float(point[0]))},{repr(float(point[1]))}"


def validate_point(surface: SurfaceModel, point, forbid_vertex: bool = False):
    """Check a point lies in the fundamental domain; return it unchanged.

    ``forbid_vertex`` additionally rejects cube points within the corner
    tolerance of a vertex (required for geodesic sources, whose direction
    field is undefined at cone points).
    """
    if isinstance(surface, CubeSurface):
        if not isinstance(point, CubePoint):
            raise PreconditionError("cube surfaces need CubePoint sources")
        if point.face not in FACE_NAMES:
            raise PreconditionError(f"unknown cube face {point.face!r}")
        s = surface.side
        if not (0.0 <= point.u <= s and 0.0 <= point.v <= s):
            raise PreconditionError("cube chart coordinates out of range")
        if forbid_vertex:
            delta = CORNER_TOL * s
            corner = min(
                math.hypot(point.u - cu, point.v - cv)
                for cu in (0.0, s)
                for cv in (0.0, s)
            )
            if corner <= delta:
                raise PreconditionError("source sits on a cube vertex")
        return point
    try:
        x, y = float(point[0]), float(point[1])
    except (TypeError, ValueError, IndexError):
        raise PreconditionError(f"bad planar point {point!r}") from None
    if isinstance(surface, Torus):
        if not (0.0 <= x <= surface.alpha and 0.0 <= y <= surface.beta):
            raise PreconditionError("torus point outside fundamental domain")
    elif isinstance(surface, KleinBottle):
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise PreconditionError("Klein bottle point outside unit square")
    elif isinstance(surface, RectBilliard):
        if not (0.0 <= x <= surface.a and 0.0 <= y <= surface.b):
            raise PreconditionError("billiard point outside the table")
    elif isinstance(surface, DiskBilliard):
        if x * x + y * y > surface.radius**2 * (1.0 + 1e-12):
            raise PreconditionError("point outside the disk")
    else:
        raise PreconditionError(f"unknown surface model {surface!r}")
    return (x, y)


# ---------------------------------------------------------------------------
# cube charts, transitions and the order-24 rotation group
#
# Face charts are isometric embeddings of [0, side]^2 into the unit cube
# [0,1]^3 (scaled by side at evaluation time).  The chart data below is
# chosen so that the cross-shaped net L F R B with U above F and D below F
# unfolds with matching edges and no extra rotations.

FACE_NAMES = ("U", "D", "F", "B", "L", "R")
FACE_INDEX = {name: i for i, name in enumerate(FACE_NAMES)}

# face -> (origin, e_u, e_v) in cube corner coordinates, side = 1
_CHART_DATA = {
    "U": ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    "D": ((0, 1, 0), (1, 0, 0), (0, -1, 0)),
    "F": ((0, 0, 0), (1, 0, 0), (0, 0, 1)),
    "B": ((1, 1, 0), (-1, 0, 0), (0, 0, 1)),
    "L": ((0, 1, 0), (0, -1, 0), (0, 0, 1)),
    "R": ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
}

_CHART_O = np.array([_CHART_DATA[f][0] for f in FACE_NAMES], dtype=np.int64)
_CHART_EU = np.array([_CHART_DATA[f][1] for f in FACE_NAMES], dtype=np.int64)
_CHART_EV = np.array([_CHART_DATA[f][2] for f in FACE_NAMES], dtype=np.int64)
_CHART_N = np.cross(_CHART_EU, _CHART_EV)  # outward normals

# planar rotations by k*90 degrees, counter-clockwise
_ROT2 = [
    np.array([[1, 0], [0, 1]], dtype=np.int64),
    np.array([[0, -1], [1, 0]], dtype=np.int64),
    np.array([[-1, 0], [0, -1]], dtype=np.int64),
    np.array([[0, 1], [-1, 0]], dtype=np.int64),
]
_ROT2_COS = np.array([1, 0, -1, 0], dtype=np.int64)
_ROT2_SIN = np.array([0, 1, 0, -1], dtype=np.int64)

# edge id -> chart endpoints (unit side) and outward chart normal
# 0: u=0, 1: u=1, 2: v=0, 3: v=1
_EDGE_PTS = {
    0: ((0, 0), (0, 1)),
    1: ((1, 0), (1, 1)),
    2: ((0, 0), (1, 0)),
    3: ((0, 1), (1, 1)),
}
_EDGE_OUT = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}


def _chart_to_3d(face_idx: int, p) -> np.ndarray:
    return _CHART_O[face_idx] + p[0] * _CHART_EU[face_idx] + p[1] * _CHART_EV[face_idx]


def _chart_from_3d(face_idx: int, q) -> np.ndarray:
    d = np.asarray(q) - _CHART_O[face_idx]
    return np.array([d @ _CHART_EU[face_idx], d @ _CHART_EV[face_idx]])


def _face_corners_3d(face_idx: int) -> set[tuple[int, int, int]]:
    return {
        tuple(int(c) for c in _chart_to_3d(face_idx, p))
        for p in ((0, 0), (0, 1), (1, 0), (1, 1))
    }


def _build_transitions():
    """Derive the (face, edge) -> (next face, rotation, shift) table.

    The transition is the unique orientation-preserving planar isometry that
    matches the two chart parametrisations of the shared cube edge.  It is a
    quarter-turn rotation plus an integer shift because all charts are grid
    aligned.
    """
    nxt = np.zeros((6, 4), dtype=np.int64)
    rot = np.zeros((6, 4), dtype=np.int64)
    shift = np.zeros((6, 4, 2), dtype=np.int64)
    corners = [_face_corners_3d(i) for i in range(6)]
    for f in range(6):
        for e in range(4):
            p1, p2 = (np.array(p) for p in _EDGE_PTS[e])
            q1_3d = tuple(int(c) for c in _chart_to_3d(f, p1))
            q2_3d = tuple(int(c) for c in _chart_to_3d(f, p2))
            (f2,) = [
                g
                for g in range(6)
                if g != f and q1_3d in corners[g] and q2_3d in corners[g]
            ]
            q1 = _chart_from_3d(f2, q1_3d)
            q2 = _chart_from_3d(f2, q2_3d)
            dp = p2 - p1
            dq = q2 - q1
            (k,) = [k for k in range(4) if np.array_equal(_ROT2[k] @ dp, dq)]
            c = q1 - _ROT2[k] @ p1
            # a step across the edge must land inside the neighbour chart
            probe = (p1 + p2) / 2.0 + 0.25 * np.array(_EDGE_OUT[e])
            image = _ROT2[k] @ probe + c
            assert 0.0 < image[0] < 1.0 and 0.0 < image[1] < 1.0, (f, e)
            nxt[f, e] = f2
            rot[f, e] = k
            shift[f, e] = c
    return nxt, rot, shift


_NEXT_FACE, _TRANS_ROT, _TRANS_SHIFT = _build_transitions()


def _build_rotation_group():
    """All 24 integer rotation matrices of the cube, canonically ordered."""
    mats = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        for signs in (
            (sx, sy, sz) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)
        ):
            m = np.zeros((3, 3), dtype=np.int64)
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if round(np.linalg.det(m)) == 1:
                mats.append(m)
    # reverse lexicographic ravel order puts the identity at index 0
    mats.sort(key=lambda m: tuple(m.ravel()), reverse=True)
    index = {tuple(m.ravel()): i for i, m in enumerate(mats)}
    assert len(mats) == 24
    assert np.array_equal(mats[0], np.eye(3, dtype=np.int64))
    mul = np.zeros((24, 24), dtype=np.int64)
    inv = np.zeros(24, dtype=np.int64)
    for i, a in enumerate(mats):
        for j, b in enumerate(mats):
            mul[i, j] = index[tuple((a @ b).ravel())]
        inv[i] = index[tuple(a.T.ravel())]
    return mats, index, mul, inv


_CUBE_ROTS, _CUBE_ROT_INDEX, _MUL24, _INV24 = _build_rotation_group()

CUBE_ROTATION_COUNT = 24


def cube_rotation_matrix(idx: int) -> np.ndarray:
    """The 3x3 integer matrix of cube rotation ``idx`` (a copy)."""
    if not 0 <= idx < 24:
        raise PreconditionError("cube rotation index out of range")
    return _CUBE_ROTS[idx].copy()


def _build_frame_index():
    """Map (face, development rotation) to the cube rotation of the frame.

    A developed chart with in-plane rotation r realises the 3D frame
    [e_u', e_v', n] = [A @ R(-r) | n]; the group element carried by a ray is
    frame(face, r) composed with the inverse of the source frame.
    """
    table = np.zeros((6, 4), dtype=np.int64)
    for f in range(6):
        a = np.stack([_CHART_EU[f], _CHART_EV[f]], axis=1)  # 3x2
        for r in range(4):
            m = np.zeros((3, 3), dtype=np.int64)
            m[:, :2] = a @ _ROT2[(-r) % 4]
            m[:, 2] = _CHART_N[f]
            table[f, r] = _CUBE_ROT_INDEX[tuple(m.ravel())]
    return table


_FRAME_IDX = _build_frame_index()

_HASH_PRIME = np.uint64(1099511628211)
_HASH_SEED = np.uint64(14695981039346656037)


# ---------------------------------------------------------------------------
# batched geodesic evaluation


@dataclass
class GeodesicBatch:
    """Struct-of-arrays result of evaluating many directions at one time.

    ``pos`` holds fundamental-domain coordinates ((u, v) for the cube, whose
    face lives in ``face``).  ``cover`` holds development-plane coordinates;
    for the disk the development is the identity, so cover equals pos.
    ``sheet`` identifies the development sheet of each cube ray (a rolling
    hash of the face sequence plus its length); rays on a common sheet have
    directly comparable cover coordinates.
    """

    pos: np.ndarray
    cover: np.ndarray
    alive: np.ndarray
    death_time: np.ndarray
    refl: np.ndarray
    group: np.ndarray
    face: np.ndarray | None = None
    sheet: np.ndarray | None = None

    def __len__(self) -> int:
        return self.pos.shape[0]

    def take(self, idx) -> "GeodesicBatch":
        return GeodesicBatch(
            pos=self.pos[idx],
            cover=self.cover[idx],
            alive=self.alive[idx],
            death_time=self.death_time[idx],
            refl=self.refl[idx],
            group=self.group[idx],
            face=None if self.face is None else self.face[idx],
            sheet=None if self.sheet is None else self.sheet[idx],
        )

    def insert(self, positions, other: "GeodesicBatch") -> "GeodesicBatch":
        return GeodesicBatch(
            pos=np.insert(self.pos, positions, other.pos, axis=0),
            cover=np.insert(self.cover, positions, other.cover, axis=0),
            alive=np.insert(self.alive, positions, other.alive),
            death_time=np.insert(self.death_time, positions, other.death_time),
            refl=np.insert(self.refl, positions, other.refl),
            group=np.insert(self.group, positions, other.group),
            face=None
            if self.face is None
            else np.insert(self.face, positions, other.face),
            sheet=None
            if self.sheet is None
            else np.insert(self.sheet, positions, other.sheet, axis=0),
        )


def _empty_planar_batch(pos, cover, refl=None) -> GeodesicBatch:
    n = pos.shape[0]
    return GeodesicBatch(
        pos=pos,
        cover=cover,
        alive=np.ones(n, dtype=bool),
        death_time=np.full(n, np.inf),
        refl=np.zeros(n, dtype=np.int64) if refl is None else refl,
        group=np.zeros(n, dtype=np.int64),
    )


def _fold(w: np.ndarray, length: float) -> np.ndarray:
    # tent map with period 2*length: identity on [0, L], mirrored on [L, 2L]
    r = np.mod(w, 2.0 * length)
    return length - np.abs(r - length)


def _reduce_klein(x_lift: np.ndarray, y_lift: np.ndarray):
    # quotient by <a, b>: strip off b^m (glide, so odd m flips x), then a^k
    m = np.floor(y_lift)
    y = y_lift - m
    odd = np.mod(m, 2.0) == 1.0
    x = np.mod(np.where(odd, 1.0 - x_lift, x_lift), 1.0)
    return x, y


def _eval_torus(surface: Torus, source, thetas, t):
    x = source[0] + t * np.cos(thetas)
    y = source[1] + t * np.sin(thetas)
    cover = np.stack([x, y], axis=1)
    pos = np.stack([np.mod(x, surface.alpha), np.mod(y, surface.beta)], axis=1)
    return _empty_planar_batch(pos, cover)


def _eval_klein(surface: KleinBottle, source, thetas, t):
    x = source[0] + t * np.cos(thetas)
    y = source[1] + t * np.sin(thetas)
    cover = np.stack([x, y], axis=1)
    px, py = _reduce_klein(x, y)
    return _empty_planar_batch(np.stack([px, py], axis=1), cover)


def _eval_rect(surface: RectBilliard, source, thetas, t):
    x = source[0] + t * np.cos(thetas)
    y = source[1] + t * np.sin(thetas)
    cover = np.stack([x, y], axis=1)
    pos = np.stack([_fold(x, surface.a), _fold(y, surface.b)], axis=1)
    return _empty_planar_batch(pos, cover)


def _eval_disk(surface: DiskBilliard, source, thetas, t):
    """Closed-form circle billiard flow.

    The disk billiard is integrable: after the first rim hit, consecutive
    bounce points advance by a fixed central angle, so the state after n
    reflections is a single rotation.  This keeps evaluation O(1) per
    direction and bitwise deterministic for any batch size.
    """
    radius = surface.radius
    px, py = float(source[0]), float(source[1])
    dx = np.cos(thetas)
    dy = np.sin(thetas)
    pd = px * dx + py * dy
    disc = radius * radius - (px * px + py * py) + pd * pd
    s0 = np.sqrt(np.maximum(disc, 0.0)) - pd

    no_bounce = t <= s0
    # first rim hit and the reflected direction
    qx = px + s0 * dx
    qy = py + s0 * dy
    ndot = np.maximum((qx * dx + qy * dy) / radius, 0.0)  # cos(incidence)
    d1x = dx - 2.0 * ndot * qx / radius
    d1y = dy - 2.0 * ndot * qy / radius
    ell = qx * d1y - qy * d1x  # conserved angular momentum
    chord = 2.0 * radius * ndot
    t1 = np.maximum(t - s0, 0.0)

    tangent = chord <= 0.0
    safe_chord = np.where(tangent, 1.0, chord)
    n = np.floor(t1 / safe_chord)
    resid = t1 - n * safe_chord
    phi = np.arccos(np.clip(ndot, 0.0, 1.0))
    step = np.where(ell >= 0.0, 1.0, -1.0) * (math.pi - 2.0 * phi)
    ang = n * step
    c = np.cos(ang)
    s = np.sin(ang)
    bx = c * qx - s * qy
    by = s * qx + c * qy
    ex = c * d1x - s * d1y
    ey = s * d1x + c * d1y
    x = bx + resid * ex
    y = by + resid * ey

    # degenerate tangent launch from the rim: slide along the boundary
    if np.any(tangent & ~no_bounce):
        slide = np.where(ell >= 0.0, 1.0, -1.0) * t1 / radius
        sx = np.cos(slide) * qx - np.sin(slide) * qy
        sy = np.sin(slide) * qx + np.cos(slide) * qy
        x = np.where(tangent, sx, x)
        y = np.where(tangent, sy, y)

    x = np.where(no_bounce, px + t * dx, x)
    y = np.where(no_bounce, py + t * dy, y)
    refl = np.where(no_bounce, 0, n.astype(np.int64) + 1)
    pos = np.stack([x, y], axis=1)
    return _empty_planar_batch(pos, pos.copy(), refl=refl)


def _eval_cube(surface: CubeSurface, source: CubePoint, thetas, t):
    """Walk face crossings of the straight development, all rays at once.

    Each loop iteration advances every still-active ray across one face.
    Per ray the walk tracks the chart position/direction, the in-plane
    development rotation r and shift (giving cover coordinates), and a
    rolling hash of the face sequence (the development sheet).  Rays whose
    exit point falls within the corner tolerance of a vertex die there.
    """
    side = surface.side
    delta = CORNER_TOL * side
    n = thetas.shape[0]

    face = np.full(n, FACE_INDEX[source.face], dtype=np.int64)
    pu = np.full(n, float(source.u))
    pv = np.full(n, float(source.v))
    du = np.cos(thetas)
    dv = np.sin(thetas)
    rot = np.zeros(n, dtype=np.int64)
    tvu = np.zeros(n)
    tvv = np.zeros(n)
    trem = np.full(n, float(t))
    tgone = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    death = np.full(n, np.inf)
    hh = np.full(n, _HASH_SEED, dtype=np.uint64)
    hh = (hh * _HASH_PRIME) ^ np.uint64(FACE_INDEX[source.face] + 1)
    hl = np.ones(n, dtype=np.int64)
    active = trem > 0.0

    events = 0
    while np.any(active):
        events += 1
        if events > EVENT_BUDGET:
            raise NumericalFailureError(
                f"cube tracing exceeded {EVENT_BUDGET} face crossings per ray"
            )
        idx = np.nonzero(active)[0]
        fu, fv = pu[idx], pv[idx]
        gu, gv = du[idx], dv[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            su = np.where(gu > 0, (side - fu) / gu, np.where(gu < 0, -fu / gu, np.inf))
            sv = np.where(gv > 0, (side - fv) / gv, np.where(gv < 0, -fv / gv, np.inf))
        s_exit = np.minimum(su, sv)
        cross_u = su <= sv

        rem = trem[idx]
        done = rem <= s_exit
        if np.any(done):
            j = idx[done]
            pu[j] = pu[j] + rem[done] * du[j]
            pv[j] = pv[j] + rem[done] * dv[j]
            tgone[j] += rem[done]
            trem[j] = 0.0
            active[j] = False

        move = ~done
        if not np.any(move):
            continue
        j = idx[move]
        s = s_exit[move]
        cu = cross_u[move]
        # exit point, with the crossed coordinate snapped onto the wall
        peu = np.where(cu, np.where(du[j] > 0, side, 0.0), pu[j] + s * du[j])
        pev = np.where(cu, pv[j] + s * dv[j], np.where(dv[j] > 0, side, 0.0))
        along = np.where(cu, pev, peu)

        hit_corner = (along < delta) | (along > side - delta)
        if np.any(hit_corner):
            k = j[hit_corner]
            pu[k] = peu[hit_corner]
            pv[k] = pev[hit_corner]
            death[k] = tgone[k] + s[hit_corner]
            tgone[k] = death[k]
            trem[k] = 0.0
            alive[k] = False
            active[k] = False

        go = ~hit_corner
        if not np.any(go):
            continue
        j = j[go]
        s = s[go]
        peu, pev = peu[go], pev[go]
        cu = cu[go]
        edge = np.where(cu, np.where(du[j] > 0, 1, 0), np.where(dv[j] > 0, 3, 2))

        f2 = _NEXT_FACE[face[j], edge]
        rt = _TRANS_ROT[face[j], edge]
        cshift = _TRANS_SHIFT[face[j], edge] * side
        c, sn = _ROT2_COS[rt], _ROT2_SIN[rt]
        npu = np.clip(c * peu - sn * pev + cshift[:, 0], 0.0, side)
        npv = np.clip(sn * peu + c * pev + cshift[:, 1], 0.0, side)
        ndu = c * du[j] - sn * dv[j]
        ndv = sn * du[j] + c * dv[j]
        nrot = np.mod(rot[j] - rt, 4)
        rc, rs = _ROT2_COS[nrot], _ROT2_SIN[nrot]
        tvu[j] = tvu[j] - (rc * cshift[:, 0] - rs * cshift[:, 1])
        tvv[j] = tvv[j] - (rs * cshift[:, 0] + rc * cshift[:, 1])
        pu[j], pv[j] = npu, npv
        du[j], dv[j] = ndu, ndv
        rot[j] = nrot
        face[j] = f2
        hh[j] = (hh[j] * _HASH_PRIME) ^ (f2 + 1).astype(np.uint64)
        hl[j] += 1
        tgone[j] += s
        trem[j] -= s

    rc, rs = _ROT2_COS[rot], _ROT2_SIN[rot]
    cover = np.stack([rc * pu - rs * pv + tvu, rs * pu + rc * pv + tvv], axis=1)
    inv0 = _INV24[_FRAME_IDX[FACE_INDEX[source.face], 0]]
    group = _MUL24[_FRAME_IDX[face, rot], inv0]
    sheet = np.stack([hh, hl.astype(np.uint64)], axis=1)
    return GeodesicBatch(
        pos=np.stack([pu, pv], axis=1),
        cover=cover,
        alive=alive,
        death_time=death,
        refl=np.zeros(n, dtype=np.int64),
        group=group,
        face=face,
        sheet=sheet,
    )


def evaluate_batch(surface: SurfaceModel, source, thetas, t: float) -> GeodesicBatch:
    """Evaluate unit-speed geodesics from ``source`` for an array of angles.

    Pure in (source, thetas, t): identical inputs give bitwise identical
    outputs regardless of how directions are batched, which is what makes
    adaptive refinement reproducible.
    """
    thetas = np.ascontiguousarray(thetas, dtype=np.float64)
    if t < 0:
        raise PreconditionError("time must be nonnegative")
    if isinstance(surface, Torus):
        return _eval_torus(surface, source, thetas, t)
    if isinstance(surface, KleinBottle):
        return _eval_klein(surface, source, thetas, t)
    if isinstance(surface, RectBilliard):
        return _eval_rect(surface, source, thetas, t)
    if isinstance(surface, DiskBilliard):
        return _eval_disk(surface, source, thetas, t)
    if isinstance(surface, CubeSurface):
        return _eval_cube(surface, source, thetas, t)
    raise PreconditionError(f"unknown surface model {surface!r}")


# ---------------------------------------------------------------------------
# scalar API


def exp_point(surface: SurfaceModel, source, theta: float, t: float):
    """Evaluate one geodesic: returns (surface point, CoverPoint, alive).

    ``theta`` is accepted on the closed interval [0, 2*pi] so that a full
    circle of directions, sampled inclusively, stays within the contract.
    """
    if not 0.0 <= theta <= TWO_PI:
        raise PreconditionError("direction angle must lie in [0, 2*pi]")
    if t < 0:
        raise PreconditionError("time must be nonnegative")
    source = validate_point(surface, source, forbid_vertex=True)
    batch = evaluate_batch(surface, source, np.array([theta]), t)
    cover = CoverPoint(
        x=float(batch.cover[0, 0]),
        y=float(batch.cover[0, 1]),
        group_elem=int(batch.group[0]),
        reflection_count=int(batch.refl[0]),
    )
    if isinstance(surface, CubeSurface):
        point = CubePoint(
            FACE_NAMES[int(batch.face[0])], float(batch.pos[0, 0]), float(batch.pos[0, 1])
        )
    else:
        point = (float(batch.pos[0, 0]), float(batch.pos[0, 1]))
    return point, cover, bool(batch.alive[0])


def trace_cube_ray(side: float, source: CubePoint, theta: float, t: float):
    """Trace a single cube ray; returns (point, face_history, group_elem, alive).

    ``face_history`` is the ordered tuple of faces entered, starting with the
    source face.  ``group_elem`` indexes the rotation mapping the source face
    frame to the final face frame through the development (one of the 24
    orientation-preserving cube rotations).
    """
    surface = CubeSurface(side)
    source = validate_point(surface, source, forbid_vertex=True)
    if t < 0:
        raise PreconditionError("time must be nonnegative")
    delta = CORNER_TOL * side
    face = FACE_INDEX[source.face]
    pu, pv = float(source.u), float(source.v)
    du, dv = math.cos(theta), math.sin(theta)
    rot = 0
    tvu = tvv = 0.0
    trem = float(t)
    tgone = 0.0
    history = [face]
    alive = True

    events = 0
    while trem > 0.0:
        events += 1
        if events > EVENT_BUDGET:
            raise NumericalFailureError(
                f"cube tracing exceeded {EVENT_BUDGET} face crossings per ray"
            )
        su = (side - pu) / du if du > 0 else (-pu / du if du < 0 else math.inf)
        sv = (side - pv) / dv if dv > 0 else (-pv / dv if dv < 0 else math.inf)
        s_exit = min(su, sv)
        if trem <= s_exit:
            pu += trem * du
            pv += trem * dv
            tgone += trem
            trem = 0.0
            break
        cross_u = su <= sv
        if cross_u:
            peu = side if du > 0 else 0.0
            pev = pv + s_exit * dv
            along = pev
        else:
            pev = side if dv > 0 else 0.0
            peu = pu + s_exit * du
            along = peu
        if along < delta or along > side - delta:
            pu, pv = peu, pev
            tgone += s_exit
            trem = 0.0
            alive = False
            break
        edge = (1 if du > 0 else 0) if cross_u else (3 if dv > 0 else 2)
        f2 = int(_NEXT_FACE[face, edge])
        rt = int(_TRANS_ROT[face, edge])
        cx, cy = (_TRANS_SHIFT[face, edge] * side).tolist()
        c, sn = int(_ROT2_COS[rt]), int(_ROT2_SIN[rt])
        pu2 = min(max(c * peu - sn * pev + cx, 0.0), side)
        pv2 = min(max(sn * peu + c * pev + cy, 0.0), side)
        du, dv = c * du - sn * dv, sn * du + c * dv
        rot2 = (rot - rt) % 4
        rc, rs = int(_ROT2_COS[rot2]), int(_ROT2_SIN[rot2])
        tvu -= rc * cx - rs * cy
        tvv -= rs * cx + rc * cy
        pu, pv, face, rot = pu2, pv2, f2, rot2
        history.append(face)
        tgone += s_exit
        trem -= s_exit

    inv0 = int(_INV24[_FRAME_IDX[FACE_INDEX[source.face], 0]])
    group = int(_MUL24[_FRAME_IDX[face, rot], inv0])
    point = CubePoint(FACE_NAMES[face], pu, pv)
    return point, tuple(FACE_NAMES[f] for f in history), group, alive


# ---------------------------------------------------------------------------
# geodesic distance


def point_images(surface: SurfaceModel, pts: np.ndarray) -> np.ndarray:
    """Orbit images of points needed for exact nearest-distance queries.

    Returns an array of shape (k, n, 2): for each of the n points, its k
    relevant images in the plane of the fundamental domain.  Planar chord
    distance to the nearest image equals geodesic distance for the torus and
    Klein bottle; the rectangular billiard and disk need no images because
    the straight chord inside the (convex) domain is already a geodesic.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if isinstance(surface, Torus):
        out = []
        for i in (-1.0, 0.0, 1.0):
            for j in (-1.0, 0.0, 1.0):
                out.append(pts + np.array([i * surface.alpha, j * surface.beta]))
        return np.stack(out)
    if isinstance(surface, KleinBottle):
        out = []
        for j in (-1.0, 0.0, 1.0):
            flipped = j in (-1.0, 1.0)
            base_x = 1.0 - pts[:, 0] if flipped else pts[:, 0]
            for i in (-1.0, 0.0, 1.0):
                out.append(np.stack([base_x + i, pts[:, 1] + j], axis=1))
        return np.stack(out)
    if isinstance(surface, (RectBilliard, DiskBilliard)):
        return pts[None, :, :]
    raise PreconditionError("point_images applies to planar surfaces only")


def nearest_image(surface: SurfaceModel, base, other):
    """Image of ``other`` nearest to ``base`` in the domain plane."""
    imgs = point_images(surface, np.asarray([other], dtype=np.float64))[:, 0, :]
    b = np.asarray(base, dtype=np.float64)
    k = int(np.argmin(np.hypot(imgs[:, 0] - b[0], imgs[:, 1] - b[1])))
    return imgs[k]


def cube_develop_step(face_from: int, edge: int):
    """Affine development of the neighbour across ``edge`` into this chart.

    Returns (next_face, R, c) with R a 2x2 integer rotation and c a shift in
    side units: a point q in the neighbour chart sits at R @ q + c in the
    plane of ``face_from``'s chart.  (This is the inverse of the crossing
    transition used by the tracer.)
    """
    f2 = int(_NEXT_FACE[face_from, edge])
    rt = int(_TRANS_ROT[face_from, edge])
    c = _TRANS_SHIFT[face_from, edge]
    rinv = _ROT2[(-rt) % 4]
    return f2, rinv, -(rinv @ c)


def _gate_path_length(p0, gates, p1, side: float) -> float:
    """Shortest broken path p0 -> gates... -> p1 with each stop on its gate.

    Gates are segments (a, b).  If the straight segment crosses every gate in
    order the straight length is returned; otherwise a few rounds of
    coordinate descent (each stop projected onto its segment) give an upper
    bound that corresponds to a realisable path on the surface.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    d = p1 - p0
    straight_ok = True
    prev_s = 0.0
    for a, b in gates:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        g = b - a
        denom = d[0] * g[1] - d[1] * g[0]
        if abs(denom) < 1e-15 * side:
            straight_ok = False
            break
        w = a - p0
        s = (w[0] * g[1] - w[1] * g[0]) / denom  # param along p0->p1
        u = (w[0] * d[1] - w[1] * d[0]) / denom  # param along the gate
        if not (prev_s - 1e-12 <= s <= 1.0 + 1e-12 and -1e-12 <= u <= 1.0 + 1e-12):
            straight_ok = False
            break
        prev_s = s
    if straight_ok:
        return float(np.hypot(d[0], d[1]))

    stops = [np.asarray((np.asarray(a) + np.asarray(b)) / 2.0) for a, b in gates]
    pts = [p0] + stops + [p1]
    for _ in range(48):
        shift = 0.0
        for i, (a, b) in enumerate(gates, start=1):
            a = np.asarray(a, dtype=np.float64)
            g = np.asarray(b, dtype=np.float64) - a
            gg = float(g @ g)
            lo, hi = pts[i - 1], pts[i + 1]
            seg = hi - lo
            denom = seg[0] * g[1] - seg[1] * g[0]
            if abs(denom) > 1e-15 * side:
                w = a - lo
                u = (w[0] * seg[1] - w[1] * seg[0]) / denom
            else:
                u = float((((lo + hi) / 2.0) - a) @ g) / gg if gg > 0 else 0.0
            u = min(max(u, 0.0), 1.0)
            new = a + u * g
            shift = max(shift, float(np.hypot(*(new - pts[i]))))
            pts[i] = new
        if shift < 1e-13 * side:
            break
    total = 0.0
    for i in range(len(pts) - 1):
        total += float(np.hypot(*(pts[i + 1] - pts[i])))
    return total


def cube_geodesic_distance(side: float, q1: CubePoint, q2: CubePoint):
    """Geodesic distance on the cube via single and double edge unfoldings.

    Returns (distance, trusted): the minimum over the same-face chord and
    all developments of q2's face across one or two edges of q1's face
    chain.  ``trusted`` is True when the value is below ``side``, the radius
    within which this chain family contains a genuine shortest path; larger
    values are honest upper bounds (every candidate corresponds to a
    realisable path) but a shortest path could cross more than two edges.
    """
    f1 = FACE_INDEX[q1.face]
    f2 = FACE_INDEX[q2.face]
    p1 = np.array([q1.u, q1.v], dtype=np.float64)
    p2 = np.array([q2.u, q2.v], dtype=np.float64)
    best = math.inf
    if f1 == f2:
        best = float(np.hypot(*(p2 - p1)))

    edge_seg = {
        e: (np.array(_EDGE_PTS[e][0], dtype=np.float64) * side,
            np.array(_EDGE_PTS[e][1], dtype=np.float64) * side)
        for e in range(4)
    }
    for e in range(4):
        m, r1, c1 = cube_develop_step(f1, e)
        gate1 = edge_seg[e]
        if m == f2:
            img = r1 @ p2 + c1 * side
            best = min(best, _gate_path_length(p1, [gate1], img, side))
        for e2 in range(4):
            m2, r2, c2 = cube_develop_step(m, e2)
            if m2 == f1 or m2 == m:
                continue
            if m2 != f2:
                continue
            # develop the middle gate and the far point into f1's plane
            g2a = r1 @ (np.array(_EDGE_PTS[e2][0], dtype=np.float64) * side) + c1 * side
            g2b = r1 @ (np.array(_EDGE_PTS[e2][1], dtype=np.float64) * side) + c1 * side
            img = r1 @ (r2 @ p2 + c2 * side) + c1 * side
            best = min(best, _gate_path_length(p1, [gate1, (g2a, g2b)], img, side))
    return best, best < side


def surface_distance(surface: SurfaceModel, q1, q2) -> float:
    """Exact geodesic distance between two valid surface points.

    Torus and Klein bottle distances minimise over deck-group images;
    rectangle and disk distances are straight chords (the tables are
    convex); cube distances minimise over one- and two-edge unfoldings,
    which is exact below one side length (see ``cube_geodesic_distance``).
    """
    q1 = validate_point(surface, q1)
    q2 = validate_point(surface, q2)
    if isinstance(surface, CubeSurface):
        # evaluate both orders: unfolding rounds each direction differently
        # in the last ulp, and the metric must be exactly symmetric
        return min(
            cube_geodesic_distance(surface.side, q1, q2)[0],
            cube_geodesic_distance(surface.side, q2, q1)[0],
        )
    if isinstance(surface, (RectBilliard, DiskBilliard)):
        return float(math.hypot(q2[0] - q1[0], q2[1] - q1[1]))

    def one_way(a, b):
        imgs = point_images(surface, np.asarray([b], dtype=np.float64))[:, 0, :]
        return float(np.min(np.hypot(imgs[:, 0] - a[0], imgs[:, 1] - a[1])))

    return min(one_way(q1, q2), one_way(q2, q1))
