"""Conjugate fundamental piece, reflection assembly and total curvature.

The conjugate piece is rebuilt as a minimal graph over the projection of its
boundary (the conjugate of a graph over a convex domain is again a graph),
with Dirichlet heights taken from the reconstructed boundary curves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import cKDTree

from .conjugation import ConjBoundary
from .hyperbolic import (Geodesic, HPoint, Isometry, dist_array, reflect_across, reflect_slice,
                         shoot_array)
from .meshing import PolylineCurve, TriangleMesh, mesh_polygon
from .minimal_graph import MinimalGraphProblem

MODES = ("knoid", "saddle", "parabolic", "hyperbolic")
YAXIS = Geodesic("line", 0.0, 0.0, 1)


class AssemblyError(RuntimeError):
    pass


class DomainError(ValueError):
    pass


# ---------------------------------------------------------------- curvature

def lifted_lengths(points: np.ndarray, u: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Distance in H^2 x R between the graph points over i and j."""
    return np.hypot(dist_array(points[i], points[j]), u[i] - u[j])


def _sinh_over(x, c):
    cx = c * x
    small = cx < 1e-6
    out = np.empty_like(x)
    out[small] = x[small] * (1 + cx[small] ** 2 / 6)
    out[~small] = np.sinh(cx[~small]) / c[~small]
    return out


def model_angles(a, b, c, kappa):
    """Angles of the triangle with sides a, b, c (opposite vertices 0, 1, 2) in the
    space form of curvature -kappa^2, by the half-angle formula."""
    kappa = np.broadcast_to(np.asarray(kappa, float), np.shape(a)).copy()
    s = 0.5 * (a + b + c)

    def half(o1, o2):
        num = (_sinh_over(np.maximum(s - o1, 0.0), kappa) * _sinh_over(np.maximum(s - o2, 0.0), kappa))
        den = _sinh_over(o1, kappa) * _sinh_over(o2, kappa)
        return 2.0 * np.arcsin(np.sqrt(np.clip(num / den, 0.0, 1.0)))

    return half(b, c), half(c, a), half(a, b)


def _direction(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Initial direction angle at p of the geodesic toward q (vectorised)."""
    z = ((q[:, 0] - p[:, 0]) + 1j * q[:, 1]) / p[:, 1]
    w = (z - 1j) / (z + 1j)
    return np.angle(w) + math.pi / 2


def boundary_turning(points: np.ndarray, u: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Exterior angle of the lifted boundary polygon at every loop vertex.

    The lifted edges are ambient geodesics, so their geodesic curvature in
    any surface containing them vanishes and all turning sits at vertices.
    """
    p = points[loop]
    prev = np.roll(loop, 1)
    nxt = np.roll(loop, -1)
    out = np.empty(len(loop))
    vecs = []
    for other in (prev, nxt):
        q = points[other]
        d = dist_array(p, q)
        alpha = _direction(p, q)
        vecs.append((d * np.cos(alpha), d * np.sin(alpha), u[other] - u[loop]))
    (x1, y1, t1), (x2, y2, t2) = vecs
    dot = x1 * x2 + y1 * y2 + t1 * t2
    n = np.sqrt((x1 * x1 + y1 * y1 + t1 * t1) * (x2 * x2 + y2 * y2 + t2 * t2))
    out[:] = math.pi - np.arccos(np.clip(dot / n, -1.0, 1.0))
    return out


@dataclass
class CurvatureReport:
    per_piece: float
    copies: int
    total: float
    interior: float            # element model terms plus interior vertex defects
    boundary_turning: float    # sum of exterior angles of the lifted boundary
    euler: int
    genus: int | None = None
    ends: int | None = None
    m: int | None = None
    formula: float | None = None
    n_vertices: int = 0
    h: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def piece_curvature(mesh: TriangleMesh, u: np.ndarray, nu: np.ndarray | None = None):
    """Total curvature of the graph of u over a disk-type mesh.

    Returns (total, interior, turning): total = 2 pi - sum of exterior angles
    of the lifted boundary; interior = element terms (each lifted triangle
    taken in the space form of the tangent plane's sectional curvature -nu^2)
    plus angle defects at interior vertices, which omits the boundary strip.
    """
    P, T = mesh.points, mesh.triangles
    A, asum = vertex_angle_sums(mesh, u, nu)
    inner = ~mesh.boundary_mask()
    interior = float(np.sum(A[0] + A[1] + A[2] - math.pi) + np.sum(2 * math.pi - asum[inner]))
    turning = float(np.sum(boundary_turning(P, u, mesh.boundary)))
    euler = mesh.n_nodes - len(mesh.edges()) + len(T)
    return 2 * math.pi * euler - turning, interior, turning


def vertex_angle_sums(mesh: TriangleMesh, u: np.ndarray, nu: np.ndarray | None = None):
    """Per-element model angles and their per-vertex sums for the lifted mesh."""
    P, T = mesh.points, mesh.triangles
    if nu is None:
        nu = np.ones(len(T))
    a = lifted_lengths(P, u, T[:, 1], T[:, 2])
    b = lifted_lengths(P, u, T[:, 2], T[:, 0])
    c = lifted_lengths(P, u, T[:, 0], T[:, 1])
    A = model_angles(a, b, c, nu)
    asum = np.zeros(len(P))
    for k in range(3):
        np.add.at(asum, T[:, k], A[k])
    return A, asum


def mirror_piece_curvature(mesh: TriangleMesh, u: np.ndarray, nu: np.ndarray | None = None):
    """Total curvature of a piece bounded by planar symmetry curves.

    Mirror curves are geodesics of the surface, so only the corners (the
    ends of the tagged sides) turn: total = 2 pi chi - sum(pi - corner angle).
    Returns (total, corner angles).
    """
    _, asum = vertex_angle_sums(mesh, u, nu)
    corners = sorted({int(n[0]) for n in mesh.side_nodes.values()} | {int(n[-1]) for n in mesh.side_nodes.values()})
    ang = asum[corners]
    euler = mesh.n_nodes - len(mesh.edges()) + len(mesh.triangles)
    return 2 * math.pi * euler - float(np.sum(math.pi - ang)), ang


def total_curvature(sol, copies: int = 1, genus: int | None = None, ends: int | None = None,
                    m: int | None = None, boundary: str = "geodesic") -> CurvatureReport:
    """Curvature report for a solved piece (anything with mesh, u and nu).

    boundary="geodesic": the boundary lifts to ambient geodesics (the graph
    over the triangle); boundary="mirror": it consists of planar symmetry
    curves (the conjugate piece).
    """
    if getattr(sol, "residual", 0.0) > 1e-6:
        raise ValueError("solution is not converged")
    total, interior, turning = piece_curvature(sol.mesh, sol.u, sol.nu)
    if boundary == "mirror":
        total, ang = mirror_piece_curvature(sol.mesh, sol.u, sol.nu)
        turning = float(np.sum(math.pi - ang))
    elif boundary != "geodesic":
        raise ValueError(f"unknown boundary kind {boundary!r}")
    euler = sol.mesh.n_nodes - len(sol.mesh.edges()) + len(sol.mesh.triangles)
    formula = None
    if genus is not None and ends is not None and m is not None:
        formula = 2 * math.pi * (2 - 2 * genus - ends - m)
    return CurvatureReport(total, copies, copies * total, interior, turning, euler, genus, ends, m,
                           formula, sol.mesh.n_nodes, sol.mesh.h)


# ---------------------------------------------------------------- conjugate domain

@dataclass
class ConjDomain:
    """Simple polygon in the half-plane with heights along each boundary arc."""

    arcs: list                 # (tag, points (n, 2), z (n,)) in loop order
    gamma: Geodesic            # mirror geodesic of h1 (after snapping)
    mode: str
    truncation: float
    signed_area: float
    snaps: dict = field(default_factory=dict)
    mirror_heights: dict = field(default_factory=dict)

    @property
    def polygon(self) -> np.ndarray:
        return np.concatenate([pts[:-1] for _, pts, _ in self.arcs])


def _project_to(geo: Geodesic, pts: np.ndarray) -> np.ndarray:
    """Nearest points on a geodesic."""
    iso = geo.to_axis()
    q = iso.apply(pts)
    foot = np.column_stack([np.zeros(len(q)), np.hypot(q[:, 0], q[:, 1])])
    return iso.inverse().apply(foot)


def _snapped_gamma(cb: ConjBoundary, k: int) -> Geodesic:
    """Geodesic through gamma's crossing with the y-axis at angle exactly pi/k."""
    g = cb.gamma
    if g.crossing is None:
        raise AssemblyError("gamma does not meet the y-axis")
    alpha = g.geodesic.direction_at(g.crossing)
    # the y-axis points up (pi/2); pick the pi/k direction closest to gamma's
    best = None
    for base in (math.pi / 2, -math.pi / 2):
        for sgn in (1, -1):
            cand = base + sgn * math.pi / k
            d = abs((alpha - cand + math.pi) % (2 * math.pi) - math.pi)
            if best is None or d < best[0]:
                best = (d, cand)
    return Geodesic.from_direction(g.crossing, best[1])


def _cut_curve(t: np.ndarray, pts: np.ndarray, T: float):
    """Initial piece of a sampled curve up to parameter t[0] + T."""
    t_end = t[0] + T
    if t_end >= t[-1]:
        return pts.copy()
    j = int(np.searchsorted(t, t_end))
    f = (t_end - t[j - 1]) / (t[j] - t[j - 1])
    end = pts[j - 1] + f * (pts[j] - pts[j - 1])
    return np.vstack([pts[:j], end])


def _cut_at(pts, z, q):
    """Polyline (and heights) from its start up to the point q lying on it."""
    line = shapely.LineString(pts)
    t = line.project(shapely.Point(q))
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    j = int(np.searchsorted(cum, t, side="right"))
    zq = float(np.interp(t, cum, z))
    return np.vstack([pts[:j], q]), np.append(z[:j], zq)


def _geodesic_samples(p, q, spacing):
    L = float(dist_array(p, q))
    n = max(2, int(math.ceil(L / spacing)) + 1)
    geo = Geodesic.through(HPoint(*p), HPoint(*q))
    pts = shoot_array(HPoint(*p), geo.direction_at(p), np.linspace(0.0, L, n))
    pts[0], pts[-1] = p, q
    return pts


def _polyline_length(pts):
    return np.concatenate([[0.0], np.cumsum(dist_array(pts[:-1], pts[1:]))])


def _thin(pts, z, spacing):
    """Drop samples closer than spacing (hyperbolic) to keep polylines light."""
    keep = [0]
    s = _polyline_length(pts)
    for i in range(1, len(pts) - 1):
        if s[i] - s[keep[-1]] >= spacing:
            keep.append(i)
    keep.append(len(pts) - 1)
    return pts[keep], z[keep]


def build_conj_domain(cb: ConjBoundary, mode: str = "knoid", k: int | None = None,
                      l: float | None = None, truncation: float | None = None,
                      spacing: float = 0.01, max_shrink: int = 20) -> ConjDomain:
    """Projected conjugate boundary as a simple polygon.

    The whole chain v2, h1, v3, h2, v1, h3 is used when its projection is a
    simple polygon (the closure gap between h2 and v1 is bridged by a
    geodesic).  Otherwise, or when `truncation` is given, v3 is cut after
    that hyperbolic length (shortened until the polygon is simple), v1 at its
    point nearest to that end, and the two are joined by a geodesic cut with
    linear heights.
    In knoid and saddle modes gamma is replaced by the geodesic through the
    same y-axis point at angle exactly pi/k and h1 is projected onto it;
    heights of v2, v3 are set to 0 and (saddle mode) v1 to -l.  All shifts
    are recorded in `snaps`.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if cb.v1 is None:
        raise DomainError("conjugate boundary has no v1 curve")
    snaps = {}
    gamma = cb.gamma.geodesic
    v2 = np.column_stack([cb.v2.x, cb.v2.y])
    h1 = cb.h1.points.copy()
    if mode in ("knoid", "saddle"):
        if k is None:
            raise ValueError("k required")
        gamma = _snapped_gamma(cb, k)
        proj = _project_to(gamma, h1)
        snaps["h1_to_gamma"] = float(np.max(dist_array(proj, h1)))
        h1 = proj
        v2[-1] = h1[0]
    # heights: v2 and v3 at 0
    z1 = cb.h1.z.astype(float).copy()
    snaps["v3_height"] = float(abs(z1[-1]))
    s1 = _polyline_length(cb.h1.points)
    z1 = z1 - z1[-1] * s1 / max(s1[-1], 1e-300)
    z_v1 = float(cb.v1.z)
    if mode == "saddle":
        if l is None or not math.isfinite(l):
            raise ValueError("saddle mode needs a finite l")
        snaps["v1_height"] = float(abs(z_v1 + l))
        z_v1 = -float(l)
    z3 = cb.h3.z.astype(float).copy()
    s3 = _polyline_length(cb.h3.points)
    z3 = z3 + (z_v1 - z3[-1]) * s3 / max(s3[-1], 1e-300)
    h3 = cb.h3.points.copy()
    h3[:, 0] = 0.0
    v3_all = np.column_stack([cb.v3.x, cb.v3.y])
    v1_all = np.column_stack([cb.v1.x, cb.v1.y])
    v3_all[0] = h1[-1]
    v1_all[0] = h3[-1]

    def loop(arcs):
        arcs = [(tag, *_thin(p, z, spacing)) for tag, p, z in arcs if len(p) > 1]
        ring = np.concatenate([p[:-1] for _, p, _ in arcs])
        return arcs, ring, shapely.Polygon(ring)

    # first the whole chain, closed through h2 and a geodesic over the closure gap
    arcs = None
    T = math.inf
    if cb.h2 is not None and truncation is None:
        h2 = cb.h2.points.copy()
        h2[0] = v3_all[-1]
        z2 = cb.h2.z.astype(float) - cb.h2.z[0]
        s2 = _polyline_length(h2)
        z2 = z2 + (z_v1 - z2[-1]) * s2 / max(s2[-1], 1e-300)
        v1 = v1_all
        hit = shapely.LineString(h2).intersection(shapely.LineString(v1_all[1:]))
        if not hit.is_empty:
            # the discrete ends overshoot each other: close at the crossing
            q = min(shapely.get_coordinates(hit), key=lambda c: shapely.LineString(h2).project(shapely.Point(c)))
            h2, z2 = _cut_at(h2, z2, q)
            s2 = _polyline_length(h2)
            z2 = z2 + (z_v1 - z2[-1]) * s2 / max(s2[-1], 1e-300)
            v1 = _cut_at(v1_all, np.zeros(len(v1_all)), q)[0]
            gap = np.empty((0, 2))
        else:
            gap = _geodesic_samples(h2[-1], v1_all[-1], spacing)
        cand = [("v2", v2, np.zeros(len(v2))), ("h1", h1, z1), ("v3", v3_all, np.zeros(len(v3_all))),
                ("h2", h2, z2), ("gap", gap, np.full(len(gap), z_v1)),
                ("v1", v1[::-1], np.full(len(v1), z_v1)), ("h3", h3[::-1], z3[::-1])]
        arcs, ring, poly = loop(cand)
        if not (poly.is_valid and np.all(ring[:, 1] > 0)):
            reason = shapely.is_valid_reason(poly)
            arcs = None
    if arcs is None:
        T = truncation if truncation is not None else 0.5 * (cb.v3.t[-1] - cb.v3.t[0])
        for _ in range(max_shrink):
            v3 = _cut_curve(cb.v3.t, v3_all, T)
            # pair the end of v3 with the nearest point of v1 so the cut stays short
            j = int(np.argmin(dist_array(v1_all, v3[-1])))
            v1 = v1_all[:max(j, 1) + 1]
            cut = _geodesic_samples(v3[-1], v1[-1], spacing)
            cand = [("v2", v2, np.zeros(len(v2))), ("h1", h1, z1), ("v3", v3, np.zeros(len(v3))),
                    ("cut", cut, np.linspace(0.0, z_v1, len(cut))),
                    ("v1", v1[::-1], np.full(len(v1), z_v1)), ("h3", h3[::-1], z3[::-1])]
            arcs, ring, poly = loop(cand)
            if poly.is_valid and np.all(ring[:, 1] > 0):
                break
            reason = shapely.is_valid_reason(poly)
            T *= 0.8
        else:
            raise DomainError(f"projected conjugate boundary is not simple: {reason}")
    x, y = ring[:, 0], ring[:, 1]
    area = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    if area < 0:
        arcs = [(tag, p[::-1], z[::-1]) for tag, p, z in reversed(arcs)]
        area = -area
    mirrors = {"v2": 0.0, "v3": 0.0}
    if mode == "saddle":
        mirrors["v1"] = z_v1
    return ConjDomain(arcs, gamma, mode, T, area, snaps, mirrors)


# ---------------------------------------------------------------- conjugate graph

@dataclass
class ConjPiece:
    mesh: TriangleMesh
    u: np.ndarray
    nu: np.ndarray
    residual: float
    iterations: int
    domain: ConjDomain


def solve_conjugate_graph(domain: ConjDomain, h: float = 0.1, seed: int = 20240611,
                          tol: float = 1e-10, wall: float = 0.25) -> ConjPiece:
    """Minimal graph over the conjugate domain with the boundary heights as data."""
    curves = [PolylineCurve(tag, pts) for tag, pts, _ in domain.arcs]
    ring = shapely.LinearRing(domain.polygon)

    def size(p):
        p = np.atleast_2d(p)
        d = shapely.distance(ring, shapely.points(p)) / np.maximum(p[:, 1], 1e-300)
        return np.minimum(h, wall * h + 0.5 * d)

    mesh = mesh_polygon(curves, size, h, corner_labels=[t for t, _, _ in domain.arcs], seed=seed)
    vals = np.zeros(mesh.n_nodes)
    for c, (tag, pts, z) in zip(curves, domain.arcs):
        nodes = mesh.side_nodes[tag]
        vals[nodes] = np.interp(mesh.side_params[tag], c._cum, z)
    # resampled h1 nodes sit on chords between samples; put them back on the mirror
    h1 = mesh.side_nodes["h1"]
    mesh.points[h1] = _project_to(domain.gamma, mesh.points[h1])
    if np.any(mesh.signed_areas() <= 0):
        raise DomainError("projection onto the mirror geodesic inverted an element")
    fixed = mesh.boundary_mask()
    prob = MinimalGraphProblem(mesh)
    u, info = prob.solve(fixed, vals, tol=tol)
    return ConjPiece(mesh, u, 1.0 / prob.element_W(u), info.residual, info.iterations, domain)


# ---------------------------------------------------------------- assembly

@dataclass
class SurfaceMesh:
    vertices: np.ndarray          # (n, 3): x, y, t with y > 0
    faces: np.ndarray             # (m, 3)
    vertex_copy: np.ndarray
    face_copy: np.ndarray
    group: dict
    piece_faces: int

    @property
    def copies(self) -> int:
        return int(self.group["copies"])


def _key(iso: Isometry, probe: np.ndarray) -> tuple:
    return tuple(np.round(iso.apply(probe).ravel(), 7))


_PROBE = np.array([[0.31, 1.7, 0.23], [-0.52, 0.61, -1.1], [0.07, 0.35, 2.3]])


def _close_group(gens: dict, cap: int):
    """All products of the generators, as (word, isometry), breadth first."""
    ident = Isometry()
    elems = [("e", ident)]
    seen = {_key(ident, _PROBE)}
    frontier = list(elems)
    while frontier:
        nxt = []
        for word, g in frontier:
            for name, s in gens.items():
                h = s.compose(g)
                key = _key(h, _PROBE)
                if key in seen:
                    continue
                seen.add(key)
                item = (name if word == "e" else name + word, h)
                elems.append(item)
                nxt.append(item)
                if len(elems) > cap:
                    raise AssemblyError(f"group generated by {sorted(gens)} exceeds {cap} elements")
        frontier = nxt
    return elems


def generators(domain: ConjDomain, l: float | None = None) -> dict:
    gens = {"A": reflect_across(YAXIS), "B": reflect_across(domain.gamma), "C": reflect_slice(0.0)}
    if domain.mode == "saddle":
        gens["D"] = reflect_slice(-float(l))
    return gens


def reflect_and_assemble(piece: ConjPiece, k: int | None = None, mode: str | None = None,
                         l: float | None = None, n_copies: int = 4, snap_tol: float = 1e-6,
                         cap: int = 4096, period_residuals: dict | None = None,
                         residual_tol: float = 1e-3) -> SurfaceMesh:
    """Copies of the piece under the mirror group.

    knoid: the 4k elements of <A, B, C>; saddle: the same 4k copies, one
    fundamental domain for the vertical translation T = D C of length 2l;
    parabolic / hyperbolic: n_copies translates of {e, A} x {e, C} under BA.
    """
    mode = mode or piece.domain.mode
    if period_residuals:
        bad = {k_: v for k_, v in period_residuals.items() if abs(v) > residual_tol}
        if bad:
            raise AssemblyError(f"period residuals above tolerance: {bad}")
    gens = generators(piece.domain, l)
    descriptor = {"mode": mode, "k": k, "generators": {"A": "x = 0", "B": "gamma", "C": "t = 0"}}
    if mode in ("knoid", "saddle"):
        if k is None:
            raise ValueError("k required")
        elems = _close_group({n: gens[n] for n in "ABC"}, cap=min(cap, 4 * k))
        if len(elems) != 4 * k:
            raise AssemblyError(f"mirror group has {len(elems)} elements, expected {4 * k}")
        g = piece.domain.gamma
        if g.kind != "line" and g.r > abs(g.c):
            # the rotation A B fixes the vertical line over gamma's crossing with x = 0
            descriptor["axis"] = [0.0, math.sqrt(g.r ** 2 - g.c ** 2)]
        if mode == "saddle":
            descriptor["generators"]["D"] = f"t = {-float(l)!r}"
            descriptor["translation"] = {"vector": [0.0, 0.0, -2.0 * float(l)], "length": 2.0 * float(l)}
    else:
        S = gens["B"].compose(gens["A"])
        base = [("e", Isometry()), ("A", gens["A"]), ("C", gens["C"]),
                ("CA", gens["C"].compose(gens["A"]))]
        if 4 * n_copies > cap:
            raise AssemblyError("copy count above cap")
        elems, shifts = [], []
        for j in range(-(n_copies // 2), n_copies - n_copies // 2):
            Sj = Isometry()
            step = S if j >= 0 else S.inverse()
            for _ in range(abs(j)):
                Sj = step.compose(Sj)
            elems += [(f"(BA)^{j}{w}", Sj.compose(g)) for w, g in base]
            shifts += [j] * len(base)
        descriptor["shifts"] = shifts
        descriptor["translation"] = {"kind": mode, "matrix": list(S.m), "word": "BA"}
    pts3 = np.column_stack([piece.mesh.points, piece.u])
    verts, faces, vcopy, fcopy = [], [], [], []
    off = 0
    for ci, (word, g) in enumerate(elems):
        v = g.apply(pts3)
        f = piece.mesh.triangles
        if g.conj != (g.t_sign < 0):
            f = f[:, [0, 2, 1]]   # keep a consistent orientation of the assembled surface
        verts.append(v)
        faces.append(f + off)
        vcopy.append(np.full(len(v), ci))
        fcopy.append(np.full(len(f), ci))
        off += len(v)
    V = np.concatenate(verts)
    F = np.concatenate(faces)
    vc = np.concatenate(vcopy)
    V, F, vc = _merge(V, F, vc, snap_tol)
    descriptor.update(copies=len(elems), words=[w for w, _ in elems])
    return SurfaceMesh(V, F, vc, np.concatenate(fcopy), descriptor, len(piece.mesh.triangles))


def _merge(V, F, vc, tol):
    """Identify vertices closer than tol (shared mirror curves)."""
    tree = cKDTree(V)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(V))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    root = np.array([find(i) for i in range(len(V))])
    keep = root == np.arange(len(V))
    new_id = np.cumsum(keep) - 1
    F = new_id[root[F]]
    good = (F[:, 0] != F[:, 1]) & (F[:, 1] != F[:, 2]) & (F[:, 0] != F[:, 2])
    if not good.all():
        raise AssemblyError("snapping collapsed a face; snap tolerance too large")
    return V[keep], F, vc[keep]


def invariance_defect(surface: SurfaceMesh, iso: Isometry) -> float:
    """Largest distance from an image vertex to the nearest mesh vertex (H^2 x R metric)."""
    img = iso.apply(surface.vertices)
    _, idx = cKDTree(surface.vertices).query(img)
    near = surface.vertices[idx]
    d = np.hypot(dist_array(img[:, :2], near[:, :2]), img[:, 2] - near[:, 2])
    return float(d.max())


def mirror_defects(piece: ConjPiece) -> dict:
    """Distance of each mirror arc of the piece from its plane or slice."""
    mesh, dom = piece.mesh, piece.domain
    out = {}
    h3 = mesh.side_nodes["h3"]
    out["h3"] = float(np.max(np.abs(mesh.points[h3, 0] / mesh.points[h3, 1])))
    h1 = mesh.side_nodes["h1"]
    out["h1"] = float(np.max(dom.gamma.distance_to(mesh.points[h1])))
    for tag, z in dom.mirror_heights.items():
        out[tag] = float(np.max(np.abs(piece.u[mesh.side_nodes[tag]] - z)))
    return out


def reflection_overlap(domain: ConjDomain) -> float:
    """Area fraction shared by the domain and its mirror image across gamma.

    Zero (up to roundoff) when the two copies only touch along h1.
    """
    ring = domain.polygon
    poly = shapely.Polygon(ring)
    img = reflect_across(domain.gamma).apply(np.column_stack([ring, np.zeros(len(ring))]))[:, :2]
    other = shapely.Polygon(img)
    if not other.is_valid:
        other = shapely.make_valid(other)
    return float(poly.intersection(other).area / poly.area)


def translation_defect(surface: SurfaceMesh, first: Isometry, second: Isometry, shift: float) -> float:
    """Max deviation of (second after first) from the vertical translation by shift."""
    img = second.compose(first).apply(surface.vertices)
    ref = surface.vertices + np.array([0.0, 0.0, shift])
    return float(np.max(np.abs(img - ref)))
