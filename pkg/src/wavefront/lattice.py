"""Integer-lattice counting oracle for the unit torus.

Counts lattice points in disks and annuli (the Gauss circle problem) and
verifies, by direct numeric evaluation, the rectangle construction that
proves fronts on the unit torus become 3/sqrt(t)-dense: a circle of radius
t around a lattice-aligned source projects, modulo the unit square, to a
curve whose slope, column height and covering radius are all controlled.

Everything here is arithmetic on integers plus closed-form geometry; the
module deliberately shares no code with the front simulator so the two can
check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .surfaces import NumericalFailureError, PreconditionError

COUNT_BUDGET_RADIUS = 1.0e4


@dataclass(frozen=True)
class LatticeCount:
    """Counts for one radius/shell pair with the area predictions."""

    t: float
    h: float
    N_t: int
    annulus_count: int
    E_t: float


@dataclass(frozen=True)
class RectCheckReport:
    """Numeric verification of the density rectangle at one time.

    The region sits over [a, b] = [-2*sqrt(t), -sqrt(2t)] where the circle
    graph f(x) = sqrt(t^2 - x^2) has small slope and rises by about 1, so
    its projection modulo the unit square sweeps every column.
    """

    t: float
    a: float
    b: float
    height: float
    slope_max: float
    projected_covering_radius: float
    passed: bool


def _count_radius(sq: float) -> int:
    """Lattice points with m^2 + n^2 <= sq, by exact per-row counting.

    Comparisons are integer-vs-float, which Python evaluates exactly, so
    the result is the true count for the given squared radius.
    """
    m_max = math.isqrt(max(0, math.floor(sq)))
    while (m_max + 1) ** 2 <= sq:
        m_max += 1
    total = 0
    for m in range(-m_max, m_max + 1):
        rem = sq - m * m
        n = math.isqrt(max(0, math.floor(rem)))
        while (n + 1) ** 2 <= rem:
            n += 1
        while n > 0 and n**2 > rem:
            n -= 1
        total += 2 * n + 1
    return total


def gauss_count(t: float) -> int:
    """Number of integer points (m, n) with m^2 + n^2 <= t^2."""
    if t < 0:
        raise PreconditionError("radius must be nonnegative")
    if t > COUNT_BUDGET_RADIUS:
        raise NumericalFailureError(
            f"radius {t} exceeds the enumeration budget {COUNT_BUDGET_RADIUS:g}"
        )
    return _count_radius(t * t)


def annulus_count(t: float, h: float):
    """Count in the shell t < |x| <= t+h alongside the area 2*pi*t*h."""
    if t <= 0 or h < 0:
        raise PreconditionError("need t > 0 and h >= 0")
    if t + h > COUNT_BUDGET_RADIUS:
        raise NumericalFailureError(
            f"outer radius {t + h} exceeds the enumeration budget"
        )
    count = _count_radius((t + h) * (t + h)) - _count_radius(t * t)
    return count, 2.0 * math.pi * t * h


def error_term(t: float) -> float:
    """Deviation E(t) = N_t - pi*t^2 of the count from the disk area.

    The classical envelope |E(t)| <= sqrt(2)*2*pi*t is enforced; it holds
    for every t >= 0.11 or so (below that the single origin point already
    outweighs the tiny area) and a violation in range means a counting bug.
    """
    if t <= 0:
        raise PreconditionError("radius must be positive")
    e = gauss_count(t) - math.pi * t * t
    if abs(e) > math.sqrt(2.0) * 2.0 * math.pi * t:
        raise NumericalFailureError(
            f"lattice error term {e} violates the sqrt(2)*2*pi*t envelope at t={t}"
        )
    return e


def lattice_count(t: float, h: float) -> LatticeCount:
    """Bundle N_t, the shell count and E_t for one (t, h) pair."""
    count, _ = annulus_count(t, h)
    n_t = gauss_count(t)
    return LatticeCount(
        t=t, h=h, N_t=n_t, annulus_count=count, E_t=n_t - math.pi * t * t
    )


def wavefront_return_oracle(t: float, h: float) -> float:
    """Predicted min distance from the radius-t torus front to its source.

    The front from (0,0) on the unit torus lifts to the circle |x| = t, so
    its distance to the source is min over lattice points L of ||L| - t|.
    The shell width h is the scale at which the companion annulus count
    certifies returns; the minimum itself depends only on t.
    """
    if t <= 0 or h <= 0:
        raise PreconditionError("need t > 0 and h > 0")
    best = t  # the origin
    m_hi = math.ceil(t + best)
    for m in range(0, m_hi + 1):
        rem = t * t - m * m
        if rem <= 0:
            cands = (0,)
        else:
            n0 = math.isqrt(math.floor(rem))
            cands = (n0 - 1, n0, n0 + 1, n0 + 2)
        for n in cands:
            if n < 0:
                continue
            d = abs(math.hypot(m, n) - t)
            if d < best:
                best = d
    return best


def theorem1_rectangle_check(t: float, h_max: float = 0.005) -> RectCheckReport:
    """Verify the three quantitative steps of the density rectangle at t.

    (i) the circle graph f(x) = sqrt(t^2 - x^2) has slope at most 3/sqrt(t)
    over [a, b] = [-2*sqrt(t), -sqrt(2t)]; (ii) it rises by 1 + O(1/sqrt(t))
    across that window; (iii) sampled at arc spacing <= h_max and projected
    modulo the unit square it is 3/sqrt(t)-dense.  All three are evaluated
    numerically; ``passed`` is their conjunction.
    """
    if not t > 36.0 / 5.0:
        raise PreconditionError("rectangle argument needs t > 36/5")
    if h_max <= 0:
        raise PreconditionError("h_max must be positive")
    a = -2.0 * math.sqrt(t)
    b = -math.sqrt(2.0 * t)
    bound = 3.0 / math.sqrt(t)

    def f(x):
        return np.sqrt(t * t - x * x)

    slope_max = 2.0 / math.sqrt(t - 4.0)  # |f'| peaks at x = a
    height = float(f(np.array(b)) - f(np.array(a)))

    dx = h_max / math.sqrt(1.0 + slope_max * slope_max)
    n = int(math.ceil((b - a) / dx)) + 1
    xs = np.linspace(a, b, n)
    pts = np.stack([xs, f(xs)], axis=1)
    proj = np.mod(pts, 1.0)

    # geodesic distances on the unit torus via the 3x3 translate block
    tree = cKDTree(proj)
    m = max(2, int(math.ceil(1.0 / h_max)))
    c = (np.arange(m) + 0.5) / m
    centers = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
    shifts = [(i, j) for i in (-1.0, 0.0, 1.0) for j in (-1.0, 0.0, 1.0)]
    dmin = np.full(centers.shape[0], np.inf)
    for sx, sy in shifts:
        d = tree.query(centers + np.array([sx, sy]))[0]
        dmin = np.minimum(dmin, d)
    # min-distance is 1-Lipschitz, so the sup over the torus is at most the
    # max over cell centers plus the cell circumradius: a true upper bound
    covering = float(dmin.max()) + math.sqrt(2.0) / (2.0 * m)

    passed = (
        slope_max <= bound
        and abs(height - 1.0) <= bound
        and covering <= bound
    )
    return RectCheckReport(
        t=t,
        a=a,
        b=b,
        height=height,
        slope_max=slope_max,
        projected_covering_radius=covering,
        passed=passed,
    )
