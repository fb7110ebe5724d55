"""Wave front propagation: adaptive direction sampling and split tracking.

A front is the set of geodesic endpoints exp_P(t * v(theta)) for theta in a
direction arc.  It is represented by an ordered set of sampled directions,
refined by bisection until adjacent surface images are within ``h_max`` of
each other.  Because evaluation is exact at any time (see ``surfaces``),
propagation re-evaluates samples rather than stepping them, so results are
pure functions of (surface, source, arc, parameters, target time).

On the cube the flow is discontinuous at vertex-hitting directions: the
front tears there.  Tears are detected by comparing the development-sheet
identity (face-history hash) of adjacent samples and bisecting divergent
pairs until a dead witness direction is found (or the gap closes to
``theta_min``).  Components are maximal direction runs whose image has
stayed connected; each split is timed by the death time of the ray that
witnessed it, so split times are exact rather than quantized.

Torus, Klein bottle, rectangle and disk flows are continuous in the
direction, so their fronts are always a single component; only the cube
tears, at the directions that run into a vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .surfaces import (
    TWO_PI,
    CubePoint,
    CubeSurface,
    DiskBilliard,
    FACE_NAMES,
    GeodesicBatch,
    NumericalFailureError,
    PreconditionError,
    SurfaceModel,
    evaluate_batch,
    min_extent,
    surface_distance,
    validate_point,
)

_FULL_TOL = 1e-12


@dataclass(frozen=True)
class ArcInterval:
    """Closed interval of initial directions [theta_lo, theta_hi]."""

    theta_lo: float
    theta_hi: float

    def __post_init__(self):
        if not self.theta_lo <= self.theta_hi:
            raise PreconditionError("arc needs theta_lo <= theta_hi")
        if self.theta_hi - self.theta_lo > TWO_PI + _FULL_TOL:
            raise PreconditionError("arc wider than a full circle")

    @property
    def width(self) -> float:
        return self.theta_hi - self.theta_lo

    @property
    def is_full_circle(self) -> bool:
        return abs(self.width - TWO_PI) <= _FULL_TOL


FULL_CIRCLE = ArcInterval(0.0, TWO_PI)


@dataclass(frozen=True)
class PropagationParams:
    """Resolution and budget knobs for front propagation.

    h_max: target spatial resolution between adjacent samples.
    theta_min: smallest direction gap bisection may produce.
    delta_t_check: time spacing for coverage-time scans and series
        emission; propagation itself evaluates directly at the target
        time and times splits by ray death, so it needs no checkpoints.
    sample_budget: hard cap on samples per front.
    """

    h_max: float
    theta_min: float = 1e-12
    delta_t_check: float = 0.5
    sample_budget: int = 2**22

    def __post_init__(self):
        if not (
            self.h_max > 0
            and self.theta_min > 0
            and self.delta_t_check > 0
            and self.sample_budget > 0
        ):
            raise PreconditionError("propagation parameters must be positive")


def default_params(surface: SurfaceModel) -> PropagationParams:
    """Default parameters scaled to the surface size."""
    dt = 0.1 * surface.side if isinstance(surface, CubeSurface) else 0.5
    return PropagationParams(h_max=0.005 * min_extent(surface), delta_t_check=dt)


@dataclass(frozen=True)
class FrontSample:
    theta: float
    pos: object
    cover: object
    alive: bool
    death_time: float = math.inf


@dataclass
class FrontComponent:
    """A maximal direction run whose image has stayed connected.

    ``interval`` spans the run; wrap-around components (live across the
    theta = 0 seam of a full-circle arc) use theta_hi > 2*pi.  ``segments``
    are index ranges into the front's global sample arrays (two ranges for
    a wrap-around component, otherwise one).
    """

    interval: ArcInterval
    split_time: float
    segments: tuple
    _front: "Front" = field(default=None, repr=False, compare=False)

    @property
    def live_sample_count(self) -> int:
        return sum(stop - start for start, stop in self.segments)

    @property
    def sample_indices(self) -> np.ndarray:
        return np.concatenate(
            [np.arange(start, stop) for start, stop in self.segments]
        )

    @property
    def samples(self) -> list:
        f = self._front
        f.ensure_evaluated()
        return [f.sample_at(i) for i in self.sample_indices]


@dataclass
class Front:
    """A propagated wave front.

    Sample arrays are ordered by theta and include dead directions; the
    components index into them.  ``cover`` and the other derived arrays may
    be absent on fronts read back from snapshots and are recomputed on
    demand (evaluation is pure, so recomputation is exact).
    """

    surface: SurfaceModel
    source: object
    t: float
    arc: ArcInterval
    params: PropagationParams
    thetas: np.ndarray
    pos: np.ndarray
    alive: np.ndarray
    death_time: np.ndarray
    components: list
    cover: np.ndarray | None = None
    refl: np.ndarray | None = None
    group: np.ndarray | None = None
    face: np.ndarray | None = None
    sheet: np.ndarray | None = None

    def __post_init__(self):
        for comp in self.components:
            comp._front = self

    @property
    def sample_count(self) -> int:
        return self.thetas.shape[0]

    @property
    def dead_directions(self) -> list:
        idx = np.nonzero(~self.alive)[0]
        return [(float(self.thetas[i]), float(self.death_time[i])) for i in idx]

    def ensure_evaluated(self) -> None:
        """Recompute derived arrays (cover, sheets, ...) if absent."""
        if self.cover is not None:
            return
        batch = evaluate_batch(self.surface, self.source, self.thetas, self.t)
        self.pos = batch.pos
        self.alive = batch.alive
        self.death_time = batch.death_time
        self.cover = batch.cover
        self.refl = batch.refl
        self.group = batch.group
        self.face = batch.face
        self.sheet = batch.sheet

    def point_at(self, i: int):
        if isinstance(self.surface, CubeSurface):
            return CubePoint(
                FACE_NAMES[int(self.face[i])],
                float(self.pos[i, 0]),
                float(self.pos[i, 1]),
            )
        return (float(self.pos[i, 0]), float(self.pos[i, 1]))

    def sample_at(self, i: int) -> FrontSample:
        from .surfaces import CoverPoint

        self.ensure_evaluated()
        cover = CoverPoint(
            x=float(self.cover[i, 0]),
            y=float(self.cover[i, 1]),
            group_elem=int(self.group[i]),
            reflection_count=int(self.refl[i]),
        )
        return FrontSample(
            theta=float(self.thetas[i]),
            pos=self.point_at(i),
            cover=cover,
            alive=bool(self.alive[i]),
            death_time=float(self.death_time[i]),
        )


# ---------------------------------------------------------------------------
# construction and propagation


def init_front(
    surface: SurfaceModel,
    source,
    arc: ArcInterval = FULL_CIRCLE,
    n0: int = 1024,
    params: PropagationParams | None = None,
) -> Front:
    """Front at t = 0: one component, n0 equally spaced samples over the arc.

    The spacing is inclusive of both arc endpoints; on a full circle the
    first and last samples are the same direction, which closes the polyline.
    """
    if n0 < 4:
        raise PreconditionError("need at least 4 initial samples")
    source = validate_point(surface, source, forbid_vertex=True)
    if params is None:
        params = default_params(surface)
    if params.theta_min >= arc.width:
        raise PreconditionError("theta_min must be smaller than the arc width")
    thetas = np.linspace(arc.theta_lo, arc.theta_hi, n0)
    batch = evaluate_batch(surface, source, thetas, 0.0)
    comp = FrontComponent(interval=arc, split_time=0.0, segments=((0, n0),))
    return _make_front(surface, source, 0.0, arc, params, thetas, batch, [comp])


def _make_front(surface, source, t, arc, params, thetas, batch, components) -> Front:
    return Front(
        surface=surface,
        source=source,
        t=t,
        arc=arc,
        params=params,
        thetas=thetas,
        pos=batch.pos,
        alive=batch.alive,
        death_time=batch.death_time,
        components=components,
        cover=batch.cover,
        refl=batch.refl,
        group=batch.group,
        face=batch.face,
        sheet=batch.sheet,
    )


def _pair_sheet_match(batch: GeodesicBatch) -> np.ndarray:
    if batch.sheet is None:
        return np.ones(max(len(batch) - 1, 0), dtype=bool)
    return (batch.sheet[:-1, 0] == batch.sheet[1:, 0]) & (
        batch.sheet[:-1, 1] == batch.sheet[1:, 1]
    )


def _refine(surface, source, tt, thetas, batch, params):
    """Bisect direction gaps until every adjacent live pair is resolved.

    A pair needs bisection when its development chord exceeds h_max (the
    chord bounds the surface distance, and unlike the surface distance it
    cannot alias to a small value when the images wrap close together),
    when its sheets diverge on the cube (bisection then brackets the tear,
    normally ending in a dead witness direction), or across a disk
    reflection-count change (the front has a corner there that chords can
    cut).  Midpoints are exact dyadic averages, so the refined direction
    set is independent of the order in which gaps are processed.
    """
    h = params.h_max
    radius = surface.radius if isinstance(surface, DiskBilliard) else None
    while True:
        alive2 = batch.alive[:-1] & batch.alive[1:]
        gap = np.diff(thetas)
        chord = np.hypot(np.diff(batch.cover[:, 0]), np.diff(batch.cover[:, 1]))
        same = _pair_sheet_match(batch)
        need = ((same & (chord > h)) | ~same) & alive2
        if radius is not None:
            kink = (batch.refl[:-1] != batch.refl[1:]) & (
                (tt + 2.0 * radius) * gap > h
            )
            need |= kink & alive2
        # pairs flanking a dead direction: bisect toward the tear so the
        # component's samples extend all the way to the vanished direction
        need |= batch.alive[:-1] ^ batch.alive[1:]
        need &= gap > params.theta_min
        idx = np.nonzero(need)[0]
        if idx.size == 0:
            return thetas, batch
        if thetas.size + idx.size > params.sample_budget:
            j = int(idx[0])
            raise NumericalFailureError(
                f"sample budget {params.sample_budget} exceeded while refining "
                f"near theta in [{float(thetas[j])!r}, {float(thetas[j + 1])!r}] "
                f"at t={float(tt)!r}"
            )
        mids = 0.5 * (thetas[idx] + thetas[idx + 1])
        mid_batch = evaluate_batch(surface, source, mids, tt)
        thetas = np.insert(thetas, idx + 1, mids)
        batch = batch.insert(idx + 1, mid_batch)


def _unwitnessed_tears(thetas, batch, params, surface):
    """Live adjacent pairs severed without a dead sample between them.

    These are gaps bisected down to theta_min whose images stay farther
    apart than h_max: the tear is declared between the two samples even
    though no witness direction died.  (Cross-sheet pairs whose images are
    within h_max are left connected: the histories diverged but the curve
    shows no gap.)
    """
    alive2 = batch.alive[:-1] & batch.alive[1:]
    gap = np.diff(thetas)
    suspect = alive2 & (gap <= params.theta_min)
    if batch.sheet is not None:
        chord_big = ~_pair_sheet_match(batch)
    else:
        chord_big = np.hypot(
            np.diff(batch.cover[:, 0]), np.diff(batch.cover[:, 1])
        ) > params.h_max
    out = []
    for i in np.nonzero(suspect & chord_big)[0]:
        p1 = _pos_tuple(surface, batch, int(i))
        p2 = _pos_tuple(surface, batch, int(i) + 1)
        if surface_distance(surface, p1, p2) > params.h_max:
            out.append(int(i))
    return out


def _pos_tuple(surface, batch, i):
    if isinstance(surface, CubeSurface):
        return CubePoint(
            FACE_NAMES[int(batch.face[i])],
            float(batch.pos[i, 0]),
            float(batch.pos[i, 1]),
        )
    return (float(batch.pos[i, 0]), float(batch.pos[i, 1]))


def _assemble_components(
    surface, arc, tt, thetas, batch, params, parents
) -> list:
    """Group samples into components and carry split times forward.

    Components are maximal runs of live samples not severed by a dead
    direction or an unwitnessed tear.  On a full-circle arc the first and
    last runs wrap together (theta = 0 and 2*pi are the same direction).
    Each run inherits the split time of the parent component containing it;
    runs flanked by a boundary that did not exist in the parent take the
    boundary's time (the witness's death time when there is one, the
    checkpoint time otherwise).
    """
    n = thetas.shape[0]
    alive = batch.alive
    sever = ~alive[:-1] | ~alive[1:]
    tear_pairs = set(_unwitnessed_tears(thetas, batch, params, surface))
    for i in tear_pairs:
        sever[i] = True

    runs = []
    start = None
    for i in range(n):
        if alive[i] and start is None:
            start = i
        if start is not None:
            end_here = (i == n - 1) or sever[i] or not alive[i]
            if not alive[i]:
                runs.append((start, i))
                start = None
            elif end_here:
                runs.append((start, i + 1))
                start = None
    runs = [(s, e) for s, e in runs if e > s]

    wrapped = (
        arc.is_full_circle
        and len(runs) >= 2
        and runs[0][0] == 0
        and runs[-1][1] == n
        and alive[0]
        and alive[-1]
    )

    def boundary_time(run_start, run_stop):
        """Times of the tear/death boundaries flanking a run (None = arc end)."""
        left = right = None
        if run_start > 0:
            if (run_start - 1) in tear_pairs:
                left = tt
            else:
                left = float(batch.death_time[run_start - 1])
        if run_stop < n:
            if (run_stop - 1) in tear_pairs:
                right = tt
            else:
                right = float(batch.death_time[run_stop])
        return left, right

    comps = []
    enumerated = list(range(len(runs)))
    if wrapped:
        enumerated = enumerated[1:-1]
    for k in enumerated:
        s, e = runs[k]
        left, right = boundary_time(s, e)
        comps.append(
            _child_component(
                tt, parents,
                theta_first=float(thetas[s]),
                theta_last=float(thetas[e - 1]),
                interval=ArcInterval(float(thetas[s]), float(thetas[e - 1])),
                segments=((s, e),),
                left_time=left,
                right_time=right,
            )
        )
    if wrapped:
        s2, e2 = runs[-1]
        s1, e1 = runs[0]
        left, _ = boundary_time(s2, e2)
        _, right = boundary_time(s1, e1)
        comps.append(
            _child_component(
                tt, parents,
                theta_first=float(thetas[s2]),
                theta_last=float(thetas[e1 - 1]),
                interval=ArcInterval(float(thetas[s2]), float(thetas[e1 - 1]) + TWO_PI),
                segments=((s2, e2), (s1, e1)),
                left_time=left,
                right_time=right,
            )
        )
    comps.sort(key=lambda c: c.interval.theta_lo)
    return comps


def _child_component(
    tt, parents, theta_first, theta_last, interval, segments, left_time, right_time
):
    parent = _find_parent(parents, theta_first)
    split = parent.split_time if parent is not None else 0.0
    if parent is not None:
        old_lo = getattr(parent, "_theta_first", None)
        old_hi = getattr(parent, "_theta_last", None)
        for flank_time, old_edge, own_edge in (
            (left_time, old_lo, theta_first),
            (right_time, old_hi, theta_last),
        ):
            if flank_time is None or own_edge == old_edge:
                continue  # arc endpoint, or the boundary predates this step
            split = max(split, flank_time)
    comp = FrontComponent(interval=interval, split_time=split, segments=segments)
    comp._theta_first = theta_first
    comp._theta_last = theta_last
    return comp


def _find_parent(parents, theta):
    if not parents:
        return None
    best, best_gap = None, math.inf
    for p in parents:
        lo, hi = p.interval.theta_lo, p.interval.theta_hi
        for shift in (0.0, TWO_PI, -TWO_PI):
            th = theta + shift
            if lo <= th <= hi:
                return p
            gap = min(abs(th - lo), abs(th - hi))
            if gap < best_gap:
                best, best_gap = p, gap
    return best


def propagate(front: Front, t_target: float) -> Front:
    """Advance a front to a later time; returns a new Front.

    Evaluation is stateless, so the front jumps straight to the target
    time.  Nothing is lost in between: every corner passage since t = 0 is
    recorded in the cumulative face-history sheets compared during
    refinement, and each tear is timed by the death time of its bisection
    witness (the exact moment that direction's ray hit the vertex), which
    is sharper than any checkpoint spacing.  The flat surfaces have
    direction-continuous flows and never split at all.
    """
    if t_target < front.t:
        raise PreconditionError("cannot propagate backwards in time")
    surface, source, params = front.surface, front.source, front.params
    tt = t_target

    thetas = front.thetas
    batch = evaluate_batch(surface, source, thetas, tt)
    thetas, batch = _refine(surface, source, tt, thetas, batch, params)
    if isinstance(surface, CubeSurface):
        components = _assemble_components(
            surface, front.arc, tt, thetas, batch, params, front.components
        )
    else:
        components = [
            FrontComponent(
                interval=front.arc,
                split_time=0.0,
                segments=((0, thetas.shape[0]),),
            )
        ]
    return _make_front(
        surface, source, tt, front.arc, params, thetas, batch, components
    )


# ---------------------------------------------------------------------------
# measurements


def _segment_length(front: Front, start: int, stop: int) -> float:
    cov = front.cover[start:stop]
    if stop - start < 2:
        return 0.0
    dx = np.diff(cov[:, 0])
    dy = np.diff(cov[:, 1])
    chords = np.hypot(dx, dy)
    if front.sheet is not None:
        sh = front.sheet[start:stop]
        same = (sh[:-1, 0] == sh[1:, 0]) & (sh[:-1, 1] == sh[1:, 1])
        if not np.all(same):
            # rare connected cross-sheet pair: measure it on the surface
            total = float(chords[same].sum())
            for i in np.nonzero(~same)[0]:
                p1 = front.point_at(start + int(i))
                p2 = front.point_at(start + int(i) + 1)
                total += surface_distance(front.surface, p1, p2)
            return total
    return float(chords.sum())


def _bridge_length(front: Front, i: int, j: int) -> float:
    """Arc contribution between sample i and sample j (wrap seam)."""
    if front.sheet is not None and not (
        front.sheet[i, 0] == front.sheet[j, 0]
        and front.sheet[i, 1] == front.sheet[j, 1]
    ):
        return surface_distance(front.surface, front.point_at(i), front.point_at(j))
    return float(
        math.hypot(
            front.cover[j, 0] - front.cover[i, 0],
            front.cover[j, 1] - front.cover[i, 1],
        )
    )


def component_lengths(front: Front) -> list:
    """Immersed polyline length of each component, in component order."""
    front.ensure_evaluated()
    out = []
    for comp in front.components:
        total = 0.0
        for start, stop in comp.segments:
            total += _segment_length(front, start, stop)
        if len(comp.segments) == 2:
            (s2, e2), (s1, e1) = comp.segments
            total += _bridge_length(front, e2 - 1, s1)
        out.append(total)
    return out


def front_length(front: Front) -> float:
    """Total immersed front length (sum over components, with multiplicity)."""
    return float(sum(component_lengths(front)))


def component_count(front: Front) -> int:
    """Number of components carrying at least two live samples."""
    return sum(1 for c in front.components if c.live_sample_count >= 2)
