"""Surface models and exponential maps.

Expected values are hand-derived from the definitions: straight lines mod
the lattice (torus), mod the glide group (Klein bottle), tent-folded
lines (rectangle), specular segments (disk), and planar unfoldings
(cube).  A renormalized event stepper provides the independent check for
the disk.
"""

import math

import numpy as np
import pytest

from wavefront import (
    CubePoint,
    CubeSurface,
    DiskBilliard,
    KleinBottle,
    PreconditionError,
    RectBilliard,
    Torus,
    exp_point,
    format_surface,
    parse_surface,
    surface_distance,
    trace_cube_ray,
)
from wavefront.surfaces import (
    evaluate_batch,
    format_point,
    nearest_image,
    parse_point,
    point_images,
)


# --- descriptors -----------------------------------------------------------


def test_surface_descriptor_round_trip():
    for text in ("torus:1,1", "torus:2,0.5", "klein", "rect:1,1",
                 "rect:3,2", "disk:1", "disk:0.25", "cube:1", "cube:2"):
        surface = parse_surface(text)
        assert parse_surface(format_surface(surface)) == surface


def test_surface_descriptor_rejects_garbage():
    for text in ("bogus:1", "torus", "torus:1", "torus:0,1", "disk:-1",
                 "cube:0", "rect:1,1,1", "klein:1"):
        with pytest.raises((PreconditionError, ValueError)):
            parse_surface(text)


def test_point_descriptor_round_trip():
    tor = Torus(1.0, 1.0)
    assert parse_point(tor, "0.25,0.75") == (0.25, 0.75)
    assert parse_point(tor, format_point(tor, (0.1, 0.9))) == (0.1, 0.9)
    cube = CubeSurface(1.0)
    p = parse_point(cube, "F/0.25/0.5")
    assert p == CubePoint("F", 0.25, 0.5)
    assert parse_point(cube, format_point(cube, p)) == p


def test_point_descriptor_rejects_garbage():
    cube = CubeSurface(1.0)
    for text in ("X/0.5/0.5", "F/0.5", "F/2/0.5", "0.5,0.5"):
        with pytest.raises((PreconditionError, ValueError)):
            parse_point(cube, text)
    with pytest.raises((PreconditionError, ValueError)):
        parse_point(DiskBilliard(1.0), "2,0")


# --- exponential map, closed forms ----------------------------------------


def test_torus_straight_line_mod_lattice():
    point, cover, alive = exp_point(Torus(1.0, 1.0), (0.0, 0.0), math.pi / 2, 2.5)
    assert alive
    assert point[0] == pytest.approx(0.0, abs=1e-12)
    assert point[1] == pytest.approx(0.5, abs=1e-12)


def test_torus_periodicity_along_axis():
    tor = Torus(1.5, 1.0)
    p1, _, _ = exp_point(tor, (0.2, 0.3), 0.0, 0.7)
    p2, _, _ = exp_point(tor, (0.2, 0.3), 0.0, 0.7 + 1.5)
    assert p1[0] == pytest.approx(p2[0], abs=1e-12)
    assert p1[1] == pytest.approx(p2[1], abs=1e-12)


def test_rect_tent_fold():
    rect = RectBilliard(1.0, 1.0)
    # lift x = 1.5 folds to 0.5
    point, _, _ = exp_point(rect, (0.0, 0.3), 0.0, 1.5)
    assert point[0] == pytest.approx(0.5, abs=1e-12)
    assert point[1] == pytest.approx(0.3, abs=1e-12)
    # lift y = 3.7 folds to 0.3
    point, _, _ = exp_point(rect, (0.2, 0.7), math.pi / 2, 3.0)
    assert point[0] == pytest.approx(0.2, abs=1e-12)
    assert point[1] == pytest.approx(0.3, abs=1e-12)


def test_rect_containment():
    rect = RectBilliard(1.0, 2.0)
    rng = np.random.default_rng(7)
    thetas = rng.uniform(0, 2 * math.pi, 200)
    batch = evaluate_batch(rect, (0.3, 0.4), thetas, 17.3)
    assert np.all(batch.pos[:, 0] >= 0) and np.all(batch.pos[:, 0] <= 1)
    assert np.all(batch.pos[:, 1] >= 0) and np.all(batch.pos[:, 1] <= 2)


def test_klein_glide_identification():
    # lift of (0.25, 0) along theta=pi/2 for t=1.25 is (0.25, 1.25);
    # one glide application sends it to (0.75, 0.25)
    point, _, alive = exp_point(KleinBottle(), (0.25, 0.0), math.pi / 2, 1.25)
    assert alive
    assert point[0] == pytest.approx(0.75, abs=1e-12)
    assert point[1] == pytest.approx(0.25, abs=1e-12)


def test_disk_radial_wiederkehr():
    # a radial ray reflects at the rim and returns to the center at t = 2R
    for theta in (0.0, 1.0, 2.5):
        point, cover, alive = exp_point(DiskBilliard(1.0), (0.0, 0.0), theta, 2.0)
        assert alive
        assert math.hypot(point[0], point[1]) == pytest.approx(0.0, abs=1e-9)
        assert cover.reflection_count == 1


def test_exp_at_time_zero_is_identity():
    cases = [
        (Torus(1.0, 1.0), (0.2, 0.3)),
        (KleinBottle(), (0.9, 0.1)),
        (RectBilliard(2.0, 1.0), (1.5, 0.5)),
        (DiskBilliard(1.0), (0.3, -0.4)),
    ]
    for surface, p in cases:
        point, _, _ = exp_point(surface, p, 1.234, 0.0)
        assert point[0] == pytest.approx(p[0], abs=1e-15)
        assert point[1] == pytest.approx(p[1], abs=1e-15)
    cp = CubePoint("F", 0.25, 0.5)
    point, _, _ = exp_point(CubeSurface(1.0), cp, 1.234, 0.0)
    assert point.face == "F" and point.u == 0.25 and point.v == 0.5


def test_unit_speed_away_from_events():
    # |d/dt exp| = 1 by central finite differences in the covering plane
    cases = [
        (Torus(1.0, 1.0), (0.2, 0.3)),
        (KleinBottle(), (0.25, 0.5)),
        (RectBilliard(1.0, 1.0), (0.3, 0.7)),
        (DiskBilliard(1.0), (0.3, 0.0)),
    ]
    dt = 1e-6
    for surface, p in cases:
        for theta in (0.123, 2.456, 4.0):
            t = 0.789  # no reflection happens within dt of this time
            _, c1, _ = exp_point(surface, p, theta, t - dt)
            _, c2, _ = exp_point(surface, p, theta, t + dt)
            speed = math.hypot(c2.x - c1.x, c2.y - c1.y) / (2 * dt)
            assert speed == pytest.approx(1.0, abs=1e-6)


# --- disk: independent specular stepper ------------------------------------


def _disk_step(radius, p, theta, t):
    """Specular reflections by explicit events; returns (pos, bounces).

    The position is renormalized onto the rim after each bounce, which the
    naive stepper needs for stability (|pos| drifts exponentially
    otherwise).
    """
    pos = np.array(p, dtype=float)
    d = np.array([math.cos(theta), math.sin(theta)])
    remaining = float(t)
    bounces = 0
    while True:
        b = pos @ d
        c = pos @ pos - radius * radius
        s = -b + math.sqrt(max(b * b - c, 0.0))
        if s >= remaining:
            return pos + remaining * d, bounces
        pos = pos + s * d
        pos *= radius / math.hypot(pos[0], pos[1])
        n = pos / radius
        d = d - 2.0 * (d @ n) * n
        remaining -= s
        bounces += 1


def test_disk_matches_renormalized_stepper():
    disk = DiskBilliard(1.0)
    rng = np.random.default_rng(11)
    for _ in range(25):
        r = 0.85 * math.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * math.pi)
        p = (r * math.cos(phi), r * math.sin(phi))
        theta = rng.uniform(0, 2 * math.pi)
        t = rng.uniform(1.0, 30.0)
        point, cover, _ = exp_point(disk, p, theta, t)
        ref, bounces = _disk_step(1.0, p, theta, t)
        assert math.hypot(point[0] - ref[0], point[1] - ref[1]) < 1e-7
        assert cover.reflection_count == bounces


def test_disk_positions_stay_inside():
    disk = DiskBilliard(1.0)
    rng = np.random.default_rng(5)
    thetas = rng.uniform(0, 2 * math.pi, 300)
    batch = evaluate_batch(disk, (0.6, 0.1), thetas, 47.0)
    assert np.all(np.hypot(batch.pos[:, 0], batch.pos[:, 1]) <= 1.0 + 1e-9)


# --- cube tracing -----------------------------------------------------------


def test_cube_ray_stays_on_face():
    point, history, group, alive = trace_cube_ray(
        1.0, CubePoint("U", 0.5, 0.5), 0.0, 0.25
    )
    assert alive
    assert point.face == "U"
    assert point.u == pytest.approx(0.75, abs=1e-12)
    assert point.v == pytest.approx(0.5, abs=1e-12)
    assert history == ("U",)
    _, _, g0, _ = trace_cube_ray(1.0, CubePoint("U", 0.5, 0.5), 0.0, 0.0)
    assert group == g0  # no crossing: still the identity rotation


def test_cube_ray_crosses_one_edge():
    src = CubePoint("U", 0.5, 0.5)
    point, history, group, alive = trace_cube_ray(1.0, src, 0.0, 1.0)
    assert alive
    assert len(history) == 2 and history[0] == "U"
    _, _, g0, _ = trace_cube_ray(1.0, src, 0.0, 0.0)
    assert group != g0
    # 0.5 past the shared edge: intrinsic distance 1 from the source
    assert surface_distance(CubeSurface(1.0), src, point) == pytest.approx(
        1.0, abs=1e-9
    )


def test_cube_corner_hit_dies():
    # aimed exactly at a face corner from the face center
    _, _, _, alive = trace_cube_ray(
        1.0, CubePoint("U", 0.5, 0.5), math.pi / 4, math.sqrt(0.5) + 0.1
    )
    assert not alive
    _, _, _, alive = trace_cube_ray(
        1.0, CubePoint("U", 0.5, 0.5), math.pi / 4, 0.5
    )
    assert alive  # not yet reached


def test_cube_straight_loops_close():
    # a straight ray around four faces returns home with identity rotation
    cube = CubeSurface(1.0)
    src = CubePoint("F", 0.5, 0.5)
    _, _, g0, _ = trace_cube_ray(1.0, src, 0.0, 0.0)
    for theta in (0.0, math.pi / 2):
        point, history, group, alive = trace_cube_ray(1.0, src, theta, 4.0)
        assert alive
        assert len(history) == 5
        assert group == g0
        assert surface_distance(cube, src, point) == pytest.approx(0.0, abs=1e-9)


def test_cube_group_is_order_24():
    rng = np.random.default_rng(23)
    groups = set()
    for _ in range(60):
        theta = rng.uniform(0, 2 * math.pi)
        t = rng.uniform(0.5, 12.0)
        _, _, group, alive = trace_cube_ray(
            1.0, CubePoint("F", 0.23, 0.61), theta, t
        )
        if alive:
            groups.add(int(group))
    assert groups <= set(range(24))
    assert len(groups) > 4  # genuinely explores the rotation group


def test_cube_vertex_source_rejected():
    with pytest.raises(PreconditionError):
        exp_point(CubeSurface(1.0), CubePoint("U", 0.0, 0.0), 0.1, 1.0)


# --- distances ---------------------------------------------------------------


def test_distance_examples():
    assert surface_distance(Torus(1.0, 1.0), (0.1, 0.5), (0.9, 0.5)) == (
        pytest.approx(0.2, abs=1e-12)
    )
    assert surface_distance(DiskBilliard(1.0), (0.0, 0.0), (0.3, 0.4)) == (
        pytest.approx(0.5, abs=1e-12)
    )
    cube = CubeSurface(1.0)
    assert surface_distance(
        cube, CubePoint("F", 0.2, 0.2), CubePoint("F", 0.7, 0.2)
    ) == pytest.approx(0.5, abs=1e-12)


def test_klein_glide_distance():
    # (0.9, 0.95) has the glide preimage (0.1, -0.05): distance 0.1
    d = surface_distance(KleinBottle(), (0.1, 0.05), (0.9, 0.95))
    assert d == pytest.approx(0.1, abs=1e-12)


def test_cube_face_to_face_distances():
    cube = CubeSurface(1.0)
    f = CubePoint("F", 0.5, 0.5)
    u = CubePoint("U", 0.5, 0.5)
    b = CubePoint("B", 0.5, 0.5)
    assert surface_distance(cube, f, u) == pytest.approx(1.0, abs=1e-12)
    # opposite faces: one full side plus half on each end
    assert surface_distance(cube, f, b) == pytest.approx(2.0, abs=1e-9)


def test_distance_symmetry_and_triangle():
    rng = np.random.default_rng(2)
    surfaces = [
        (Torus(1.0, 1.0), lambda: tuple(rng.uniform(0, 1, 2))),
        (RectBilliard(1.0, 1.0), lambda: tuple(rng.uniform(0, 1, 2))),
        (
            DiskBilliard(1.0),
            lambda: tuple(0.7 * math.sqrt(rng.uniform())
                          * np.array([math.cos(a), math.sin(a)])
                          for a in [rng.uniform(0, 2 * math.pi)])[0],
        ),
    ]
    for surface, draw in surfaces:
        for _ in range(40):
            p, q, r = draw(), draw(), draw()
            dpq = surface_distance(surface, p, q)
            assert dpq == surface_distance(surface, q, p)
            assert dpq <= (
                surface_distance(surface, p, r)
                + surface_distance(surface, r, q)
                + 1e-9
            )


def test_tent_projection_is_1_lipschitz():
    rect = RectBilliard(1.0, 1.0)
    rng = np.random.default_rng(13)
    for _ in range(60):
        x1 = rng.uniform(-4, 4, 2)
        x2 = rng.uniform(-4, 4, 2)
        fold = lambda w: 1.0 - abs(math.fmod(abs(w), 2.0) - 1.0)
        p1 = (fold(x1[0]), fold(x1[1]))
        p2 = (fold(x2[0]), fold(x2[1]))
        assert surface_distance(rect, p1, p2) <= np.hypot(*(x1 - x2)) + 1e-12


def test_nearest_image_wraparound():
    tor = Torus(1.0, 1.0)
    img = nearest_image(tor, (0.1, 0.5), (0.9, 0.5))
    assert abs(np.hypot(img[0] - 0.1, img[1] - 0.5) - 0.2) < 1e-12
    assert img[0] == pytest.approx(-0.1, abs=1e-12)
    imgs = point_images(tor, np.array([[0.5, 0.5]]))
    assert imgs.shape[0] == 9  # 3x3 translate block


def test_disk_long_time_closed_form():
    # the disk map is closed form in the bounce count, so a near-tangent
    # ray with millions of reflections evaluates instantly and stays on
    # the table
    batch = evaluate_batch(
        DiskBilliard(1.0), (0.999999, 0.0), np.array([math.pi / 2 + 1e-9]), 1e6
    )
    assert bool(batch.alive[0])
    assert np.hypot(batch.pos[0, 0], batch.pos[0, 1]) <= 1.0 + 1e-9
    assert int(batch.refl[0]) > 100_000
