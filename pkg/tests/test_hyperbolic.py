import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from knoids.hyperbolic import (INF, Geodesic, GeometryError, HPoint, Isometry, TriangleSpec, a_emb,
                               a_max, dist, dist_array, from_klein, layout_triangle, reflect_across,
                               reflect_slice, rotation_about, to_disk, to_klein)

coord = st.floats(-5, 5, allow_nan=False)
height = st.floats(0.05, 5, allow_nan=False)
points = st.builds(HPoint, coord, height)


def test_dist_examples():
    assert dist(HPoint(0, 1), HPoint(0, math.e)) == pytest.approx(1.0, abs=1e-14)
    assert dist(HPoint(0.3, 0.7), HPoint(0.3, 0.7)) == 0.0
    assert dist(HPoint(0, 1), HPoint(3, 2)) == pytest.approx(math.acosh(3.5), abs=1e-13)
    assert dist(HPoint(0, 1), HPoint(3, 2)) == pytest.approx(1.924847, abs=1e-6)


def test_dist_rejects_bad_points():
    with pytest.raises(GeometryError):
        HPoint(0.0, -1.0)
    with pytest.raises(GeometryError):
        dist((0.0, 1.0), (float("nan"), 1.0))


@given(points, points, points)
def test_triangle_inequality_and_symmetry(p, q, r):
    assert dist(p, q) == pytest.approx(dist(q, p), abs=1e-12)
    assert dist(p, r) <= dist(p, q) + dist(q, r) + 1e-12


def test_closed_forms():
    assert abs(a_max(math.pi / 3, INF) - math.log(3)) < 1e-12
    assert abs(a_emb(math.pi / 4, INF) - math.asinh(1)) < 1e-12
    assert a_max(math.pi / 2, 1.0) == 0.0
    assert a_max(math.pi / 2, INF) == 0.0
    # closed form at (pi/4, 1); the tabulated 1.215213 does not satisfy it
    assert a_max(math.pi / 4, 1.0) == pytest.approx(1.204161, abs=1e-6)
    assert a_emb(math.pi / 2 - 1e-12, 2.0) == pytest.approx(0.0, abs=1e-11)


def test_closed_forms_reject_phi():
    for phi in (0.0, -0.1, 2.0):
        with pytest.raises(GeometryError):
            a_max(phi)
        with pytest.raises(GeometryError):
            a_emb(phi)


def test_threshold_monotonicity_grid():
    phis = np.linspace(0.05, math.pi / 2 - 0.05, 40)
    for l in (0.5, 1.0, 3.0, INF):
        am = [a_max(p, l) for p in phis]
        ae = [a_emb(p, l) for p in phis]
        assert np.all(np.diff(am) < 0) and np.all(np.diff(ae) < 0)
    ls = [0.2, 0.5, 1.0, 2.0, 5.0, INF]
    for p in phis:
        assert np.all(np.diff([a_max(p, l) for l in ls]) >= 0)
        assert np.all(np.diff([a_emb(p, l) for l in ls]) >= 0)
        # embedded threshold below the admissible range when l is infinite
        assert a_emb(p, INF) < a_max(p, INF)


def test_layout_finite_law_of_cosines():
    pose = layout_triangle(TriangleSpec(0.5, math.pi / 4, 1.0))
    c = pose.c
    lhs = math.cosh(1.0)
    rhs = math.cosh(0.5) * math.cosh(c) - math.sinh(0.5) * math.sinh(c) * math.cos(math.pi / 4)
    assert lhs == pytest.approx(rhs, abs=1e-10)
    assert pose.p2 == HPoint(0.0, 1.0)
    assert dist(pose.p2, pose.p3) == pytest.approx(0.5, abs=1e-10)
    assert dist(pose.p3, pose.p1) == pytest.approx(1.0, abs=1e-10)
    assert pose.angle2 == pytest.approx(math.pi / 4, abs=1e-10)
    assert max(pose.angle1, pose.angle2) < math.pi / 2


def test_layout_ideal_vertex():
    pose = layout_triangle(TriangleSpec(0.4, 1.0, INF))
    assert pose.spec.ideal and pose.angle1 == 0.0
    assert pose.angle2 == pytest.approx(1.0, abs=1e-12)


def test_isosceles_limit():
    # near a_max the angles at p2 and p3 agree
    for l in (1.0, INF):
        phi = 1.0
        pose = layout_triangle(TriangleSpec(a_max(phi, l) * (1 - 1e-7), phi, l))
        assert pose.angle3 == pytest.approx(phi, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.05, 0.95), st.one_of(st.just(INF), st.floats(0.3, 4.0)))
def test_layout_reproduces_parameters(phi, frac, l):
    a = frac * a_max(phi, l)
    pose = layout_triangle(TriangleSpec(a, phi, l))
    assert pose.lengths[0] == pytest.approx(a, abs=1e-9)
    assert pose.angle2 == pytest.approx(phi, abs=1e-9)
    if math.isfinite(l):
        assert pose.lengths[1] == pytest.approx(l, abs=1e-9 * max(1, l))


def test_outside_omega_rejected():
    with pytest.raises(GeometryError):
        TriangleSpec(a_max(1.0) * 1.01, 1.0)
    with pytest.raises(GeometryError):
        TriangleSpec(0.3, math.pi / 2)


def test_reflect_vertical_line():
    r = reflect_across(Geodesic("line", 0.0))
    assert np.allclose(r.apply(np.array([1.0, 2.0])), [-1.0, 2.0], atol=1e-15)


def _random_isometry(rng):
    kind = rng.integers(3)
    if kind == 0:
        g = Geodesic.through(HPoint(*rng.uniform([-2, 0.2], [2, 3])), HPoint(*rng.uniform([-2, 0.2], [2, 3])))
        return reflect_across(g)
    if kind == 1:
        return rotation_about(HPoint(*rng.uniform([-2, 0.2], [2, 3])), rng.uniform(-3, 3))
    return reflect_slice(rng.uniform(-1, 1))


def test_isometries_preserve_distance_under_composition():
    rng = np.random.default_rng(7)
    iso = Isometry()
    p = rng.uniform([-1, 0.3, -1], [1, 2, 1], size=(50, 3))
    q = rng.uniform([-1, 0.3, -1], [1, 2, 1], size=(50, 3))
    d0 = np.hypot(dist_array(p[:, :2], q[:, :2]), p[:, 2] - q[:, 2])
    for _ in range(100):
        iso = _random_isometry(rng).compose(iso)
    ip, iq = iso.apply(p), iso.apply(q)
    d1 = np.hypot(dist_array(ip[:, :2], iq[:, :2]), ip[:, 2] - iq[:, 2])
    assert np.max(np.abs(d1 - d0)) < 1e-7


@given(coord, height, coord, height, coord, height)
def test_reflection_is_involution_fixing_geodesic(x1, y1, x2, y2, x, y):
    p, q = HPoint(x1, y1), HPoint(x2, y2)
    if dist(p, q) < 1e-3:
        return
    g = Geodesic.through(p, q)
    r = reflect_across(g)
    pt = np.array([x, y, 0.3])
    back = r.compose(r).apply(pt)
    assert np.allclose(back, pt, atol=1e-9 * max(1, abs(x), y, 1 / y))
    assert np.allclose(r.apply(np.array([x1, y1])), [x1, y1], atol=1e-9 * max(1, abs(x1), y1, 1 / y1))


def test_klein_round_trip_and_disk():
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-3, 3, 100), rng.uniform(0.05, 4, 100)])
    assert np.allclose(from_klein(to_klein(pts)), pts, atol=1e-10)
    assert np.all(np.sum(to_disk(pts) ** 2, axis=1) < 1)
