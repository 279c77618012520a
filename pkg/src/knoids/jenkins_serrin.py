"""Truncated Jenkins-Serrin problem over the triangle and its boundary data.

Values: b on l1, a large height N (standing in for +inf) on l2, 0 on l3.
For an ideal vertex the triangle is replaced by (p1(R), p2, p3), p1(R) the
point of l3 at distance R from p2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .hyperbolic import HPoint, TrianglePose, dist_array, shoot_array, to_klein, from_klein
from .meshing import GeodesicArc, TriangleMesh, mesh_polygon
from .minimal_graph import MinimalGraphProblem, NewtonInfo, SolverError, locate, side_flux, side_flux_density

SIDES = ("l1", "l2", "l3")


@dataclass(frozen=True)
class DirichletSpec:
    b: float
    N: float
    R: float | None = None

    def __post_init__(self):
        if not (self.b >= 0 and self.N >= self.b):
            raise ValueError(f"need N >= b >= 0, got b={self.b}, N={self.N}")
        if self.R is not None and not self.R > 0:
            raise ValueError("truncation radius must be positive")

    @classmethod
    def for_pose(cls, pose: TrianglePose, b: float, N: float | None = None,
                 R: float | None = 8.0, extra: float | None = None) -> "DirichletSpec":
        """Default N = b + 10 * diam of the working triangle (or b + extra)."""
        R = R if pose.spec.ideal else None
        if N is None:
            work = pose.working(R)
            N = b + (10.0 * work.diameter if extra is None else extra)
        return cls(float(b), float(N), R)

    def side_values(self) -> dict[str, float]:
        return {"l1": self.b, "l2": self.N, "l3": 0.0}


@dataclass(frozen=True)
class MeshGrading:
    """Size field knobs (all sizes hyperbolic).

    corner_ratio: element size grows like corner_ratio * distance near p2, p3.
    wall: size factor near l2, where the data jumps toward N.
    """

    corner_ratio: float = 0.12
    corner_min_factor: float = 0.02
    wall: float = 0.1
    wall_ratio: float = 0.15
    side_res: float = 0.8333          # l1 spacing is side_res * h * a


def psi_radius(pose: TrianglePose, t_span: float = math.inf) -> float:
    """Sampling radius for level-curve directions at a vertex.

    The normal turns by the corner angle over a height span t_span, so the
    level curves bend on that scale as well as on the scale of the side a.
    """
    return 0.25 * min(pose.spec.a, t_span, 0.5)


def triangle_size_field(work: TrianglePose, h: float, grading: MeshGrading, rho: float):
    p2, p3 = work.p2.as_array(), work.p3.as_array()
    hc = grading.corner_min_factor * grading.corner_ratio * rho
    h1 = min(h, grading.side_res * h * work.spec.a)

    def size(pts):
        pts = np.atleast_2d(pts)
        s = np.full(len(pts), h)
        d1 = work.l1.distance_to(pts)
        s = np.minimum(s, h1 + 0.3 * d1)
        d2 = work.l2.distance_to(pts)
        s = np.minimum(s, grading.wall * h + grading.wall_ratio * d2)
        for v in (p2, p3):
            dv = dist_array(pts, v)
            s = np.minimum(s, np.maximum(hc, grading.corner_ratio * dv))
        return np.maximum(s, hc)

    return size, hc


def build_mesh(pose: TrianglePose, spec: DirichletSpec, h: float,
               grading: MeshGrading = MeshGrading(), seed: int = 20240611) -> TriangleMesh:
    """Graded mesh of the (truncated) triangle; boundary loop p2 -> p3 -> p1 (clockwise)."""
    if not h > 0:
        raise ValueError("mesh size must be positive")
    work = pose.working(spec.R)
    if h > 0.5 * work.diameter:
        raise ValueError(f"h={h} too large for a triangle of diameter {work.diameter:.3g}")
    rho = psi_radius(pose)
    size, hc = triangle_size_field(work, h, grading, rho)
    curves = [GeodesicArc("l1", work.p2, work.p3), GeodesicArc("l2", work.p3, work.p1),
              GeodesicArc("l3", work.p1, work.p2)]
    mesh = mesh_polygon(curves, size, h, corner_labels=["p2", "p3", "p1"], seed=seed)
    mesh.grading = {"corner_ratio": grading.corner_ratio, "corner_min": hc, "wall": grading.wall,
                    "psi_radius": rho, "truncation_R": spec.R}
    return mesh


def boundary_values(mesh: TriangleMesh, spec: DirichletSpec) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet mask and values; a corner takes the mean of its two sides."""
    vals = np.zeros(mesh.n_nodes)
    sv = spec.side_values()
    for tag in SIDES:
        vals[mesh.side_nodes[tag]] = sv[tag]
    vals[mesh.corners["p2"]] = 0.5 * (sv["l3"] + sv["l1"])
    vals[mesh.corners["p3"]] = 0.5 * (sv["l1"] + sv["l2"])
    vals[mesh.corners["p1"]] = 0.5 * (sv["l2"] + sv["l3"])
    return mesh.boundary_mask(), vals


@dataclass
class GraphSolution:
    mesh: TriangleMesh
    spec: DirichletSpec
    u: np.ndarray
    W: np.ndarray
    nu: np.ndarray
    residual: float
    iterations: int
    nodal_residual: np.ndarray = field(repr=False)
    problem: MinimalGraphProblem = field(repr=False)
    pose: TrianglePose | None = field(default=None, repr=False)


def solve_graph(mesh: TriangleMesh, spec: DirichletSpec, tol: float = 1e-10,
                u0: np.ndarray | None = None, problem: MinimalGraphProblem | None = None,
                pose: TrianglePose | None = None, max_iter: int = 500) -> GraphSolution:
    problem = problem or MinimalGraphProblem(mesh)
    fixed, vals = boundary_values(mesh, spec)
    u, info = problem.solve(fixed, vals, u0=u0, tol=tol, max_iter=max_iter)
    return _wrap(problem, spec, u, info, pose)


def _wrap(problem, spec, u, info: NewtonInfo, pose=None) -> GraphSolution:
    W = problem.element_W(u)
    r = problem.residual(u)
    return GraphSolution(problem.mesh, spec, u, W, 1.0 / W, info.residual, info.iterations, r, problem, pose)


def flux_P1(sol: GraphSolution) -> float:
    """Flux of Du/W across l1 toward the interior (the first period)."""
    if "l1" not in sol.mesh.side_nodes:
        raise ValueError("mesh has no l1 side")
    return side_flux(sol.mesh, sol.nodal_residual, "l1")


def all_fluxes(sol: GraphSolution) -> dict[str, float]:
    return {tag: side_flux(sol.mesh, sol.nodal_residual, tag) for tag in SIDES}


@dataclass
class SideProfile:
    """Boundary data along a side, in loop order, by hyperbolic arclength s."""

    tag: str
    s: np.ndarray
    nu: np.ndarray
    q: np.ndarray          # <eta, d/dt> with eta the inward conormal
    points: np.ndarray
    dz: np.ndarray | None = None   # flux carried by each edge (sums to the side flux)
    clipped: int = 0

    @property
    def length(self) -> float:
        return float(self.s[-1])


def angle_profile_nu(sol: GraphSolution, side: str, method: str = "flux") -> SideProfile:
    """nu along a side.

    "flux": nodal inward flux densities q from the discrete residual,
    nu = sqrt(1 - q^2), with nu = 0 at the two corners (jump corners).
    "element": 1/W of the boundary-adjacent elements, at edge midpoints.
    """
    mesh = sol.mesh
    if side not in mesh.side_nodes:
        raise ValueError(f"no side {side!r} in mesh")
    s, q, dz, nodes = side_flux_density(mesh, sol.nodal_residual, side)
    pts = mesh.points[nodes]
    if method == "flux":
        q = q.copy()
        clipped = int(np.sum(np.abs(q[1:-1]) > 1))
        q[1:-1] = np.clip(q[1:-1], -1.0, 1.0)
        # at the jump corners the surface is vertical and the conormal is +-dt
        q[0] = _corner_q(q[1])
        q[-1] = _corner_q(q[-2])
        nu = np.sqrt(np.maximum(0.0, 1.0 - q * q))
        return SideProfile(side, s, nu, q, pts, dz, clipped)
    if method == "element":
        edge_elem = _boundary_edge_elements(mesh, nodes)
        nu_e = sol.nu[edge_elem]
        mid = 0.5 * (s[1:] + s[:-1])
        return SideProfile(side, mid, nu_e, np.full(len(mid), np.nan), 0.5 * (pts[1:] + pts[:-1]), None)
    raise ValueError(f"unknown method {method!r}")


def _corner_q(neighbour: float) -> float:
    return 1.0 if neighbour >= 0 else -1.0


def _boundary_edge_elements(mesh: TriangleMesh, nodes: np.ndarray) -> np.ndarray:
    tri = mesh.triangles
    lookup = {}
    for k, t in enumerate(tri):
        for i in range(3):
            a, b = int(t[i]), int(t[(i + 1) % 3])
            lookup[(min(a, b), max(a, b))] = k
    return np.array([lookup[(min(a, b), max(a, b))] for a, b in zip(nodes[:-1], nodes[1:])])


@dataclass
class RotationProfile:
    """Direction psi(t) of the horizontal normal along a vertical segment.

    t is the height on the segment, increasing.  dpsi is the derivative of
    the monotone interpolant.  spread is the Richardson disagreement per sample.
    """

    vertex: str
    t: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    spread: np.ndarray
    radius: float
    flagged: np.ndarray
    raw_turn: float

    @property
    def turn(self) -> float:
        return float(self.psi[-1] - self.psi[0])

    def interpolant(self):
        if len(self.t) < 2:
            return None
        return PchipInterpolator(self.t, self.psi)

    @classmethod
    def linear(cls, vertex: str, t0: float, t1: float, turn: float, n: int = 65) -> "RotationProfile":
        """Uniform turn over [t0, t1] (used where the corner is not resolved)."""
        t = np.linspace(t0, t1, n)
        rate = turn / (t1 - t0) if t1 > t0 else 0.0
        psi = rate * (t - t0)
        z = np.zeros(n)
        return cls(vertex, t, psi, np.full(n, rate), z, 0.0, np.zeros(n, bool), turn)


# geometry of the corners: (side with the lower value, side with the higher value)
_CORNER_SIDES = {"p2": ("l3", "l1"), "p3": ("l1", "l2"), "p1": ("l3", "l2")}


def _side_direction(work: TrianglePose, vertex: str, side: str) -> float:
    """Direction at the vertex of the side, pointing away from the vertex."""
    g = getattr(work, side)
    v = getattr(work, vertex)
    # sides are oriented p2 -> p3 (l1), p3 -> p1 (l2), p1 -> p2 (l3)
    start = {"l1": "p2", "l2": "p3", "l3": "p1"}[side]
    alpha = g.direction_at(v)
    return alpha if start == vertex else alpha + math.pi


def _unwrap_fan(beta_lo: float, beta_hi: float, angle: float) -> tuple[float, float]:
    """Lift beta_hi so that the fan beta_lo -> beta_hi sweeps the interior angle."""
    d = (beta_hi - beta_lo + math.pi) % (2 * math.pi) - math.pi
    if abs(abs(d) - angle) > 1e-6:
        raise SolverError("corner fan does not match the interior angle")
    return beta_lo, beta_lo + d


def rotation_profile_psi(sol: GraphSolution, vertex: str, pose: TrianglePose | None = None,
                         radius: float | None = None, n_angles: int = 241,
                         threshold: float = 0.05) -> RotationProfile:
    """Level-curve directions at a vertex from two circles, Richardson-extrapolated.

    psi(t) = alpha(t) - sigma * pi/2 where alpha(t) is the direction of the
    level curve u = t at the vertex and sigma = +1 when u increases
    counterclockwise around the vertex; this is the direction of the
    horizontal normal (the limit of the upward normal).
    """
    pose = pose or sol.pose
    if pose is None:
        raise ValueError("pose required")
    work = pose.working(sol.spec.R)
    sv = sol.spec.side_values()
    lo_side, hi_side = _CORNER_SIDES[vertex]
    t_lo, t_hi = sv[lo_side], sv[hi_side]
    angle = {"p1": work.angle1, "p2": work.angle2, "p3": work.angle3}[vertex]
    b_lo, b_hi = _unwrap_fan(_side_direction(work, vertex, lo_side),
                             _side_direction(work, vertex, hi_side), angle)
    sigma = 1.0 if b_hi > b_lo else -1.0
    if t_hi <= t_lo:
        psi = np.array([b_lo - sigma * math.pi / 2])
        return RotationProfile(vertex, np.array([t_lo]), psi, np.zeros(1), np.zeros(1),
                               0.0, np.zeros(1, bool), 0.0)
    r = radius or psi_radius(pose, t_hi - t_lo)
    g = sol.mesh.grading
    if g.get("corner_min") and g.get("corner_ratio"):
        # below this radius the inner circle is not resolved by the corner grading
        r = max(r, 4.0 * g["corner_min"] / g["corner_ratio"])
    v = getattr(work, vertex)
    frac = np.linspace(0.0, 1.0, n_angles)[1:-1]
    alphas = b_lo + (b_hi - b_lo) * frac

    def ring(rad):
        pts = np.array([shoot_array(v, a, np.array([rad]))[0] for a in alphas])
        cand = _near(sol.mesh, v.as_array(), pts)
        t_idx, bary = locate(sol.mesh, pts, cand)
        if np.any(t_idx < 0):
            raise SolverError(f"sampling circle at {vertex} leaves the mesh (radius {rad:.3g})")
        vals = np.sum(sol.u[sol.mesh.triangles[t_idx]] * bary, axis=1)
        # append the exact side values at the fan ends
        return np.concatenate([[t_lo], np.clip(vals, t_lo, t_hi), [t_hi]])

    full = np.concatenate([[b_lo], alphas, [b_hi]])
    u_r, u_h = ring(r), ring(0.5 * r)
    # levels equidistributed in angle on the inner circle
    levels = np.unique(np.concatenate([u_h[1:-1], np.linspace(t_lo, t_hi, 33)[1:-1]]))
    levels = levels[(levels > t_lo) & (levels < t_hi)]
    a_r = _crossing_angles(full, u_r, levels)
    a_h = _crossing_angles(full, u_h, levels)
    a_x = 2.0 * a_h - a_r
    spread = np.abs(a_h - a_r)
    t = np.concatenate([[t_lo], levels, [t_hi]])
    alpha = np.concatenate([[b_lo], a_x, [b_hi]])
    raw_turn = float(abs(a_x[-1] - a_x[0])) if len(a_x) else 0.0
    # monotone in the sweep direction, confined to the fan
    s_alpha = sigma * alpha
    s_alpha = np.clip(np.maximum.accumulate(s_alpha), sigma * b_lo, sigma * b_hi)
    alpha = sigma * s_alpha
    psi = alpha - sigma * math.pi / 2
    t, psi = _dedupe(t, psi)
    dpsi = PchipInterpolator(t, psi).derivative()(t)
    spread_full = np.interp(t, levels, spread) if len(levels) else np.zeros(len(t))
    return RotationProfile(vertex, t, psi, dpsi, spread_full, r, spread_full > threshold, raw_turn)


def _dedupe(t, psi):
    keep = np.concatenate([[True], np.diff(t) > 1e-12 * max(1.0, abs(t[-1]))])
    return t[keep], psi[keep]


def _near(mesh: TriangleMesh, center: np.ndarray, pts: np.ndarray) -> np.ndarray:
    lo = pts.min(0)
    hi = pts.max(0)
    p = mesh.points[mesh.triangles]
    ok = np.all(p.max(1) >= lo - 1e-12, 1) & np.all(p.min(1) <= hi + 1e-12, 1)
    return np.flatnonzero(ok)


def _crossing_angles(alpha: np.ndarray, vals: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Angle where the sampled values first reach each level, by monotone inversion."""
    mono = np.maximum.accumulate(vals)
    # break ties so interpolation of the inverse is well defined
    mono = mono + np.arange(len(mono)) * 1e-15 * max(1.0, float(np.abs(mono).max()))
    return np.interp(levels, mono, alpha)


def transplant_mesh(mesh: TriangleMesh, src: TrianglePose, dst: TrianglePose,
                    R: float | None = None) -> TriangleMesh:
    """Move a mesh of one triangle onto another by the affine map of their Klein images.

    Geodesics are chords in the Klein model, so boundary nodes stay on the
    sides and the connectivity is unchanged; quantities computed on the moved
    mesh then vary continuously with the triangle.
    """
    ws, wd = src.working(R), dst.working(R)
    ks = to_klein(np.array([ws.p1.as_array(), ws.p2.as_array(), ws.p3.as_array()]))
    kd = to_klein(np.array([wd.p1.as_array(), wd.p2.as_array(), wd.p3.as_array()]))
    S = np.column_stack([ks[1] - ks[0], ks[2] - ks[0]])
    D = np.column_stack([kd[1] - kd[0], kd[2] - kd[0]])
    A = D @ np.linalg.inv(S)
    k = (to_klein(mesh.points) - ks[0]) @ A.T + kd[0]
    pts = from_klein(k)
    # pin the corners exactly
    for label, v in (("p1", wd.p1), ("p2", wd.p2), ("p3", wd.p3)):
        pts[mesh.corners[label]] = v.as_array()
    out = TriangleMesh(pts, mesh.triangles, mesh.boundary, mesh.boundary_tags, mesh.side_nodes,
                       mesh.corners, mesh.h, dict(mesh.grading))
    if np.any(out.signed_areas() <= 0):
        raise SolverError("transplanted mesh has inverted triangles")
    return out
