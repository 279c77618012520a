import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from knoids.hyperbolic import INF, TriangleSpec, layout_triangle
from knoids.jenkins_serrin import (DirichletSpec, MeshGrading, all_fluxes, build_mesh, flux_P1,
                                   solve_graph)
from knoids.meshing import structured_rectangle
from knoids.minimal_graph import MinimalGraphProblem
from knoids.verify import pde_oracle_errors


@pytest.fixture(scope="module")
def finite_solution():
    pose = layout_triangle(TriangleSpec(0.5, math.pi / 4, 1.0))
    spec = DirichletSpec(0.4, 2.0)
    mesh = build_mesh(pose, spec, 0.08, MeshGrading(), seed=3)
    return pose, solve_graph(mesh, spec, pose=pose)


def test_structured_oracle_second_order():
    errs = pde_oracle_errors(sizes=(8, 16, 32))
    assert errs[-1] < 2e-5
    for e0, e1 in zip(errs, errs[1:]):
        assert 3.0 < e0 / e1 < 5.0


def test_horizontal_linear_graph_is_exact():
    # W depends on y only when Du = (1, 0), so u = x solves the equation
    m = structured_rectangle(0.0, 1.0, 0.5, 1.5, 12, 12)
    exact = m.points[:, 0].copy()
    u, _ = MinimalGraphProblem(m).solve(m.boundary_mask(), np.zeros(m.n_nodes) + exact, tol=1e-12)
    assert np.max(np.abs(u - exact)) < 1e-12


def test_vertical_linear_graph_is_not_minimal():
    m = structured_rectangle(0.0, 1.0, 0.5, 1.5, 12, 12)
    guess = m.points[:, 1].copy()
    u, _ = MinimalGraphProblem(m).solve(m.boundary_mask(), guess, tol=1e-12)
    assert np.max(np.abs(u - guess)) > 1e-4
    assert np.allclose(u[m.boundary], guess[m.boundary])


def test_structured_rectangle_tags():
    m = structured_rectangle(0.0, 2.0, 1.0, 2.0, 4, 3)
    assert m.n_nodes == 5 * 4
    assert len(m.triangles) == 2 * 4 * 3
    assert np.all(m.signed_areas() > 0)
    assert set(m.side_nodes) >= {"bottom", "right", "top", "left"}
    assert np.allclose(m.points[m.side_nodes["top"], 1], 2.0)


def test_mesh_area_matches_angle_defect(finite_solution):
    pose, sol = finite_solution
    expected = math.pi - (pose.angle1 + pose.angle2 + pose.angle3)
    assert sol.mesh.hyperbolic_area() == pytest.approx(expected, rel=2e-3)


def test_boundary_nodes_on_sides(finite_solution):
    pose, sol = finite_solution
    m = sol.mesh
    for tag, geo in (("l1", pose.l1), ("l2", pose.l2), ("l3", pose.l3)):
        d = geo.distance_to(m.points[m.side_nodes[tag]])
        assert np.max(np.abs(d)) < 1e-9


def test_mesh_quality(finite_solution):
    _, sol = finite_solution
    assert np.all(sol.mesh.signed_areas() > 0)
    assert np.min(sol.mesh.min_angles()) > math.radians(10)


def test_maximum_principle_and_nu(finite_solution):
    _, sol = finite_solution
    assert sol.residual < 1e-9
    assert np.min(sol.u) >= -1e-12
    assert np.max(sol.u) <= sol.spec.N + 1e-12
    assert np.all(sol.nu > 0) and np.all(sol.nu <= 1)


def test_fluxes_balance(finite_solution):
    _, sol = finite_solution
    f = all_fluxes(sol)
    # the discrete fluxes of an interior-equilibrium solution sum to zero
    assert abs(sum(f.values())) < 1e-8
    assert flux_P1(sol) == pytest.approx(f["l1"])


def test_dirichlet_spec_validation():
    with pytest.raises(ValueError):
        DirichletSpec(2.0, 1.0)
    with pytest.raises(ValueError):
        DirichletSpec(-0.1, 1.0)
    with pytest.raises(ValueError):
        DirichletSpec(0.1, 1.0, R=0.0)


def test_mesh_size_rejected():
    pose = layout_triangle(TriangleSpec(0.3, 1.0, 1.0))
    with pytest.raises(ValueError):
        build_mesh(pose, DirichletSpec(0.0, 1.0), 5.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 1.2), st.floats(0.2, 1.5))
def test_comparison_principle(b1, db):
    # larger data on l1 gives a pointwise larger solution
    m = structured_rectangle(0.0, 1.0, 0.5, 1.5, 8, 8)
    fixed = m.boundary_mask()
    prob = MinimalGraphProblem(m)
    vals = np.zeros(m.n_nodes)
    vals[m.side_nodes["top"]] = b1
    u1, _ = prob.solve(fixed, vals, tol=1e-11)
    vals[m.side_nodes["top"]] = b1 + db
    u2, _ = prob.solve(fixed, vals, tol=1e-11)
    assert np.all(u2 >= u1 - 1e-10)
