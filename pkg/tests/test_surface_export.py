import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from knoids.export import read_obj, read_ply, to_json, write_obj, write_ply
from knoids.surface import model_angles
from knoids.verify import slice_oracle


@given(st.floats(0.1, 2), st.floats(0.1, 2), st.floats(0.1, 2))
def test_model_angles_flat_limit(a, b, c):
    s = sorted((a, b, c))
    if s[2] >= s[0] + s[1] - 1e-3:
        return
    ang = model_angles(np.array([a]), np.array([b]), np.array([c]), 0.0)
    assert float(sum(ang)[0]) == pytest.approx(math.pi, abs=1e-9)


def test_model_angles_hyperbolic_defect():
    # equilateral hyperbolic triangle with side 1: angle sum below pi
    one = np.ones(2)
    ang = model_angles(one, one, one, 1.0)
    expected = math.acos((math.cosh(1) ** 2 - math.cosh(1)) / math.sinh(1) ** 2)
    assert np.allclose(ang, expected, atol=1e-12)


def test_slice_oracle():
    got, expected = slice_oracle()
    assert got == pytest.approx(expected, abs=1e-6)


def test_hyperbolic_build_checks(hyperbolic_build):
    res = hyperbolic_build
    s = res.surface
    assert res.report.regime == "disjoint" and res.report.P2 > 1
    assert s.copies == res.checks["expected_copies"]
    assert len(s.faces) == s.copies * len(res.piece.mesh.triangles)
    for name, d in res.checks["invariance"].items():
        assert d < 1e-9, name
    assert res.checks["reflection_overlap"] < 1e-9
    assert res.checks["embedded"]


def test_piece_mirror_heights(hyperbolic_build):
    for name, d in hyperbolic_build.checks["mirror_defects"].items():
        assert d < 1e-9, name


def test_obj_ply_round_trip(hyperbolic_build, tmp_path):
    s = hyperbolic_build.surface
    write_obj(tmp_path / "s.obj", s.vertices, s.faces, "test")
    V, F = read_obj(tmp_path / "s.obj")
    assert np.array_equal(V, s.vertices) and np.array_equal(F, s.faces)
    write_ply(tmp_path / "s.ply", s.vertices, s.faces, True, s.vertex_copy)
    V, F, extra = read_ply(tmp_path / "s.ply")
    assert np.array_equal(V, s.vertices) and np.array_equal(F, s.faces)
    assert np.array_equal(extra["copy"], s.vertex_copy)
    assert np.all(extra["dx"] ** 2 + extra["dy"] ** 2 < 1)


def test_json_non_finite():
    assert '"inf"' in to_json({"l": math.inf})
    assert '"nan"' in to_json({"x": np.float64("nan")})


@pytest.mark.slow
def test_knoid_axis_fixed_by_rotation():
    from knoids.surface import generators
    from knoids.verify import built
    res = built("knoid", 1.2, 3)
    x, y = res.surface.group["axis"]
    gens = generators(res.domain)
    rot = gens["A"].compose(gens["B"])
    pts = np.array([[x, y, -1.0], [x, y, 0.5]])
    assert np.allclose(rot.apply(pts), pts, atol=1e-9)
    # order k rotation
    r3 = rot.compose(rot).compose(rot)
    probe = np.array([[0.3, 0.8, 0.2]])
    assert np.allclose(r3.apply(probe), probe, atol=1e-9)
