"""Front propagation, refinement, splitting and length accounting.

Component counts on the cube come from the planar unfolding picture: from
a face center the four nearest vertices sit at intrinsic distance sqrt(.5),
so the circle of directions tears into 4 arcs once t passes that radius
and stays 4-torn until the next vertex ring (beyond t = 1.5).
"""

import math

import numpy as np
import pytest

from wavefront import (
    ArcInterval,
    CubePoint,
    CubeSurface,
    DiskBilliard,
    KleinBottle,
    NumericalFailureError,
    PreconditionError,
    PropagationParams,
    RectBilliard,
    Torus,
    component_count,
    component_lengths,
    front_length,
    init_front,
    propagate,
    surface_distance,
)
from wavefront.frontier import FULL_CIRCLE

TWO_PI = 2.0 * math.pi


def test_init_front_time_zero():
    f = init_front(Torus(1.0, 1.0), (0.0, 0.0), n0=8)
    assert f.t == 0.0
    assert f.sample_count == 8
    assert len(f.components) == 1
    assert np.allclose(f.pos, 0.0)


def test_init_front_equal_spacing_on_arc():
    f = init_front(Torus(1.0, 1.0), (0.5, 0.5), arc=ArcInterval(0.0, math.pi), n0=4)
    assert np.allclose(f.thetas, [0.0, math.pi / 3, 2 * math.pi / 3, math.pi])


def test_init_front_rejects_bad_input():
    with pytest.raises(PreconditionError):
        init_front(Torus(1.0, 1.0), (0.0, 0.0), n0=3)
    with pytest.raises(PreconditionError):
        init_front(CubeSurface(1.0), CubePoint("U", 0.0, 0.0))


def test_propagate_backwards_rejected():
    f = propagate(init_front(Torus(1.0, 1.0), (0.2, 0.3)), 2.0)
    with pytest.raises(PreconditionError):
        propagate(f, 1.0)


def test_small_circle_before_wrap():
    # below the injectivity radius the front is the round circle of radius t
    tor = Torus(1.0, 1.0)
    f = propagate(init_front(tor, (0.5, 0.5)), 0.25)
    assert component_count(f) == 1
    for i in np.nonzero(f.alive)[0][::50]:
        d = surface_distance(tor, (0.5, 0.5), (f.pos[i, 0], f.pos[i, 1]))
        assert d == pytest.approx(0.25, abs=1e-9)


def test_resolution_contract_on_torus():
    tor = Torus(1.0, 1.0)
    f = propagate(init_front(tor, (0.37, 0.61)), 10.0)
    gaps = np.diff(f.cover, axis=0)
    chord = np.hypot(gaps[:, 0], gaps[:, 1])
    assert float(chord.max()) <= f.params.h_max + 1e-12


def test_theta_order_strictly_increasing():
    f = propagate(init_front(KleinBottle(), (0.25, 0.5)), 8.0)
    assert np.all(np.diff(f.thetas) > 0)


def test_front_length_examples():
    tor = Torus(1.0, 1.0)
    f = propagate(
        init_front(tor, (0.0, 0.0), params=PropagationParams(h_max=0.01)), 10.0
    )
    assert front_length(f) == pytest.approx(TWO_PI * 10, rel=1e-3)
    assert front_length(f) <= TWO_PI * 10  # inscribed polyline never exceeds

    disk = DiskBilliard(1.0)
    g = propagate(init_front(disk, (0.0, 0.0)), 1.0)
    assert front_length(g) == pytest.approx(TWO_PI, rel=1e-3)

    assert front_length(init_front(tor, (0.2, 0.2))) == 0.0


def test_disk_center_collapses_at_diameter():
    # radial Wiederkehr: at t = 2R every direction is back at the center
    f = propagate(init_front(DiskBilliard(1.0), (0.0, 0.0)), 2.0)
    assert component_count(f) == 1
    assert float(np.abs(f.pos).max()) <= f.params.h_max


def test_flat_length_law_ratio():
    for surface, src in [
        (Torus(1.0, 1.0), (0.2, 0.3)),
        (KleinBottle(), (0.25, 0.5)),
        (RectBilliard(1.0, 1.0), (0.3, 0.7)),
    ]:
        f = propagate(init_front(surface, src), 10.0)
        ratio = front_length(f) / (TWO_PI * 10.0)
        assert 0.999 <= ratio <= 1.0, surface


def test_length_grows_under_refinement():
    tor = Torus(1.0, 1.0)
    coarse = propagate(
        init_front(tor, (0.1, 0.2), params=PropagationParams(h_max=0.02)), 10.0
    )
    fine = propagate(
        init_front(tor, (0.1, 0.2), params=PropagationParams(h_max=0.01)), 10.0
    )
    assert front_length(fine) >= front_length(coarse)


def test_single_component_on_continuous_surfaces():
    for surface, src in [
        (Torus(2.0, 1.0), (0.2, 0.3)),
        (KleinBottle(), (0.7, 0.1)),
        (RectBilliard(1.0, 1.0), (0.3, 0.7)),
        (DiskBilliard(1.0), (0.5, 0.0)),
    ]:
        f = propagate(init_front(surface, src), 7.0)
        assert component_count(f) == 1, surface


def test_cube_component_counts_face_center():
    cube = CubeSurface(1.0)
    src = CubePoint("F", 0.5, 0.5)
    counts = []
    for t in (0.25, 0.5, 0.75, 1.0, 1.25, 1.5):
        counts.append(component_count(propagate(init_front(cube, src), t)))
    assert counts == [1, 1, 4, 4, 4, 4]


def test_cube_split_times_are_corner_distances():
    # face-center tears happen exactly when the front reaches the four
    # nearest vertices, at distance sqrt(0.5)
    f = propagate(init_front(CubeSurface(1.0), CubePoint("F", 0.5, 0.5)), 1.0)
    for comp in f.components:
        if comp.live_sample_count >= 2:
            assert comp.split_time == pytest.approx(math.sqrt(0.5), abs=1e-9)


def test_cube_two_hop_matches_direct():
    cube = CubeSurface(1.0)
    src = CubePoint("F", 0.5, 0.5)
    direct = propagate(init_front(cube, src), 1.0)
    hopped = propagate(propagate(init_front(cube, src), 0.5), 1.0)
    assert component_count(direct) == component_count(hopped) == 4
    assert front_length(hopped) == pytest.approx(front_length(direct), rel=1e-6)


def test_cube_dead_directions():
    f = propagate(init_front(CubeSurface(1.0), CubePoint("F", 0.5, 0.5)), 1.0)
    dead = f.dead_directions
    assert len(dead) >= 4
    for theta, death in dead:
        assert 0.0 <= theta <= TWO_PI
        assert 0.0 < death <= 1.0
    # dead directions are excluded from every component
    dead_idx = set(np.nonzero(~f.alive)[0].tolist())
    for comp in f.components:
        assert dead_idx.isdisjoint(comp.sample_indices.tolist())


def test_component_intervals_tile_the_arc():
    f = propagate(init_front(CubeSurface(1.0), CubePoint("F", 0.23, 0.61)), 2.0)
    comps = sorted(f.components, key=lambda c: c.interval.theta_lo)
    for a, b in zip(comps, comps[1:]):
        assert a.interval.theta_hi <= b.interval.theta_lo + 1e-12
    los = [c.interval.theta_lo for c in comps]
    assert los[0] >= 0.0
    assert max(c.interval.theta_hi for c in comps) <= 2.0 * TWO_PI


def test_component_lengths_sum_to_front_length():
    f = propagate(init_front(CubeSurface(1.0), CubePoint("F", 0.5, 0.5)), 1.2)
    parts = component_lengths(f)
    assert len(parts) == len(f.components)
    assert sum(parts) == pytest.approx(front_length(f), abs=1e-12)


def test_arc_restricted_front():
    tor = Torus(1.0, 1.0)
    arc = ArcInterval(0.0, math.pi)
    f = propagate(init_front(tor, (0.2, 0.3), arc=arc), 5.0)
    assert f.arc == arc
    assert f.thetas[0] == 0.0 and f.thetas[-1] == math.pi
    # a half arc carries half the immersed length
    assert front_length(f) == pytest.approx(math.pi * 5.0, rel=1e-3)


def test_propagation_is_deterministic():
    cube = CubeSurface(1.0)
    src = CubePoint("F", 0.23, 0.61)
    f1 = propagate(init_front(cube, src), 3.0)
    f2 = propagate(init_front(cube, src), 3.0)
    assert np.array_equal(f1.thetas, f2.thetas)
    assert np.array_equal(f1.pos, f2.pos)
    assert np.array_equal(f1.death_time, f2.death_time)
    assert [c.interval for c in f1.components] == [c.interval for c in f2.components]


def test_sample_budget_enforced():
    params = PropagationParams(h_max=0.005, sample_budget=10_000)
    f = init_front(Torus(1.0, 1.0), (0.2, 0.3), params=params)
    with pytest.raises(NumericalFailureError):
        propagate(f, 50.0)


def test_full_circle_constant():
    assert FULL_CIRCLE.theta_lo == 0.0
    assert FULL_CIRCLE.theta_hi == TWO_PI
    with pytest.raises(PreconditionError):
        ArcInterval(1.0, 0.5)
