"""Graded triangulations of curvilinear polygons in the half-plane.

Boundary curves are resampled against a hyperbolic size field, interior
points come from a quadtree whose leaves match the Euclidean size y * h, and
the connectivity is the Delaunay triangulation of all points clipped to the
polygon.  Missing boundary segments are recovered by splitting them until the
triangulation conforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import shapely
from scipy.spatial import Delaunay

from .hyperbolic import Geodesic, HPoint, dist_array, shoot_array

SizeField = Callable[[np.ndarray], np.ndarray]


class MeshError(RuntimeError):
    pass


class Curve:
    """Boundary curve parameterised by hyperbolic arclength s in [0, length]."""

    tag: str
    length: float

    def point(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class GeodesicArc(Curve):
    tag: str
    start: HPoint
    end: HPoint
    length: float = field(init=False)
    geodesic: Geodesic = field(init=False)

    def __post_init__(self):
        self.geodesic = Geodesic.through(self.start, self.end)
        self.length = float(dist_array(self.start.as_array(), self.end.as_array()))
        self._alpha = self.geodesic.direction_at(self.start)

    def point(self, s):
        s = np.atleast_1d(np.asarray(s, float))
        pts = shoot_array(self.start, self._alpha, s)
        # pin the endpoints exactly
        pts[s <= 0] = self.start.as_array()
        pts[s >= self.length] = self.end.as_array()
        return pts


@dataclass
class PolylineCurve(Curve):
    """Piecewise-geodesic interpolation of sampled points (chords in the model)."""

    tag: str
    points: np.ndarray
    length: float = field(init=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, float)
        seg = dist_array(self.points[:-1], self.points[1:])
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self._cum[-1])

    def point(self, s):
        s = np.clip(np.atleast_1d(np.asarray(s, float)), 0.0, self.length)
        x = np.interp(s, self._cum, self.points[:, 0])
        y = np.interp(s, self._cum, self.points[:, 1])
        return np.column_stack([x, y])


@dataclass
class TriangleMesh:
    points: np.ndarray                 # (n, 2) half-plane coordinates
    triangles: np.ndarray              # (m, 3), counterclockwise
    boundary: np.ndarray               # boundary node indices in loop order
    boundary_tags: list[str]           # tag of segment boundary[i] -> boundary[i+1]
    side_nodes: dict[str, np.ndarray]  # ordered node indices per tag, corners included
    corners: dict[str, int]            # corner label -> node index
    h: float
    grading: dict = field(default_factory=dict)
    side_params: dict[str, np.ndarray] = field(default_factory=dict)  # arclength of side nodes

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.n_nodes, bool)
        m[self.boundary] = True
        return m

    def signed_areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def hyperbolic_area(self, order: int = 6) -> float:
        """Integral of y^-2 over the triangles (Gauss rule on each)."""
        bary, w = triangle_quadrature(order)
        p = self.points[self.triangles]
        yq = np.einsum("qk,mk->mq", bary, p[:, :, 1])
        return float(np.sum(np.abs(self.signed_areas()) * (yq**-2 @ w)))

    def edges(self) -> np.ndarray:
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                            self.triangles[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def min_angles(self) -> np.ndarray:
        p = self.points[self.triangles]
        out = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(u * v, 1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out.append(np.arccos(np.clip(cosang, -1, 1)))
        return np.min(out, axis=0)

    def dump(self, path) -> None:
        """Columnar text dump: vertex table then triangle table."""
        with open(path, "w") as fh:
            fh.write(f"# vertices {self.n_nodes}\n")
            for x, y in self.points:
                fh.write(f"{x!r} {y!r}\n")
            fh.write(f"# triangles {len(self.triangles)}\n")
            for t in self.triangles:
                fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def triangle_quadrature(order: int = 2):
    """Symmetric Gauss rules on the reference triangle (barycentric points, weights summing to 1)."""
    if order <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if order == 2:
        a, b = 2 / 3, 1 / 6
        bary = np.array([[a, b, b], [b, a, b], [b, b, a]])
        return bary, np.full(3, 1 / 3)
    # degree-5 seven point rule
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    bary = np.array([[1 / 3, 1 / 3, 1 / 3],
                     [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
                     [a2, b2, b2], [b2, a2, b2], [b2, b2, a2]])
    w = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
    return bary, w


def resample_curve(curve: Curve, size: SizeField, n_min: int = 1, dense: int = 4001) -> np.ndarray:
    """Arclength positions (including both ends) spaced by the size field."""
    L = curve.length
    if not np.isfinite(L) or L <= 0:
        raise MeshError(f"curve {curve.tag} has invalid length {L}")
    # uniform plus geometric clustering at both ends, to see small corner sizes
    u = np.linspace(0.0, 1.0, dense)
    g = np.geomspace(1e-9, 1.0, 400)
    s = np.unique(np.concatenate([u, g, 1.0 - g]).clip(0, 1)) * L
    hs = size(curve.point(s))
    dens = 1.0 / hs
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s))])
    n = max(n_min, int(round(cum[-1])))
    targets = np.linspace(0.0, cum[-1], n + 1)
    out = np.interp(targets, cum, s)
    out[0], out[-1] = 0.0, L
    return out


def _quadtree_points(poly, size_euc: Callable[[np.ndarray], np.ndarray], max_levels: int = 40):
    x0, y0, x1, y1 = poly.bounds
    half = 0.5 * max(x1 - x0, y1 - y0) * 1.001
    centers = np.array([[0.5 * (x0 + x1), 0.5 * (y0 + y1)]])
    leaves, leaf_size = [], []
    for _ in range(max_levels):
        if len(centers) == 0:
            break
        d = shapely.distance(poly, shapely.points(centers))
        near = d <= half * 1.4143
        centers = centers[near]
        if len(centers) == 0:
            break
        target = size_euc(centers)
        split = 2 * half > target
        leaves.append(centers[~split])
        leaf_size.append(np.full((~split).sum(), 2 * half))
        c = centers[split]
        q = 0.5 * half
        centers = np.concatenate([c + [-q, -q], c + [q, -q], c + [-q, q], c + [q, q]])
        half = q
    if len(centers):
        raise MeshError("quadtree refinement did not terminate (size field too small)")
    return np.concatenate(leaves), np.concatenate(leaf_size)


def mesh_polygon(curves: Sequence[Curve], size: SizeField, h: float,
                 corner_labels: Sequence[str] | None = None, seed: int = 20240611,
                 interior_margin: float = 0.55, max_recover: int = 12,
                 smooth_iters: int = 3) -> TriangleMesh:
    """Triangulate the closed loop formed by curves (end of one = start of the next).

    size maps points to hyperbolic element sizes; the Euclidean size is y * size.
    """
    params = [resample_curve(c, size) for c in curves]
    rng = np.random.default_rng(seed)

    def size_euc(p):
        return p[:, 1] * size(p)

    for _ in range(max_recover):
        bpts, btags, bref = [], [], []
        for ci, (c, s) in enumerate(zip(curves, params)):
            pts = c.point(s[:-1])
            bpts.append(pts)
            btags += [c.tag] * len(pts)
            bref += [(ci, j) for j in range(len(pts))]
        bpts = np.concatenate(bpts)
        nb = len(bpts)
        ring = shapely.LinearRing(bpts)
        poly = shapely.Polygon(ring)
        if not poly.is_valid:
            raise MeshError("boundary polygon is not simple")
        cand, csize = _quadtree_points(poly, size_euc)
        cand = cand + rng.uniform(-0.12, 0.12, cand.shape) * csize[:, None]
        inside = shapely.contains_xy(poly, cand[:, 0], cand[:, 1])
        cand = cand[inside]
        if len(cand):
            dbd = shapely.distance(ring, shapely.points(cand))
            cand = cand[dbd > interior_margin * size_euc(cand)]
        pts = np.concatenate([bpts, cand])
        tri = Delaunay(pts).simplices
        cen = pts[tri].mean(axis=1)
        keep = shapely.contains_xy(poly, cen[:, 0], cen[:, 1])
        tri = tri[keep]
        # conformity: every boundary segment must be a triangle edge
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        eset = set(map(tuple, np.sort(e, axis=1).tolist()))
        seg = [(i, (i + 1) % nb) for i in range(nb)]
        missing = [i for i, (a, b) in enumerate(seg) if (min(a, b), max(a, b)) not in eset]
        used = np.zeros(len(pts), bool)
        used[tri.ravel()] = True
        if not missing and used[:nb].all():
            break
        split = set(missing)
        for i in np.flatnonzero(~used[:nb]):
            split |= {int(i), int(i - 1) % nb}
        for ci in range(len(curves)):
            s = params[ci]
            mids = [0.5 * (s[j] + s[j + 1]) for (cj, j) in (bref[i] for i in split) if cj == ci]
            if mids:
                params[ci] = np.unique(np.concatenate([s, mids]))
    else:
        raise MeshError("could not recover a boundary-conforming triangulation")

    # drop unused interior points and renumber
    used = np.zeros(len(pts), bool)
    used[tri.ravel()] = True
    new_id = np.cumsum(used) - 1
    pts = pts[used]
    tri = new_id[tri]
    boundary = np.arange(nb)

    tri = _orient_ccw(pts, tri)
    if smooth_iters:
        pts = _smooth(pts, tri, nb, smooth_iters)
        tri = _orient_ccw(pts, tri)

    side_nodes: dict[str, list] = {}
    offs = np.cumsum([0] + [len(s) - 1 for s in params])
    for ci, c in enumerate(curves):
        ids = list(range(offs[ci], offs[ci + 1])) + [offs[ci + 1] % nb]
        side_nodes.setdefault(c.tag, [])
        side_nodes[c.tag] = np.array(ids)
    corners = {}
    labels = corner_labels or [f"c{i}" for i in range(len(curves))]
    for ci, lab in enumerate(labels):
        corners[lab] = int(offs[ci])
    mesh = TriangleMesh(pts, tri, boundary, btags, side_nodes, corners, h,
                        side_params={c.tag: params[ci] for ci, c in enumerate(curves)})
    if np.any(mesh.signed_areas() <= 0):
        raise MeshError("inverted or degenerate triangle in mesh")
    if np.any(mesh.points[:, 1] <= 0):
        raise MeshError("mesh vertex left the half-plane")
    return mesh


def _orient_ccw(pts, tri):
    p = pts[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri = tri.copy()
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def _smooth(pts, tri, nb, iters):
    """Area-safe Laplacian smoothing of interior nodes in log-y coordinates.

    Working in (x/y-scaled) coordinates would be more faithful to the metric;
    log y keeps graded layers graded.  A move is undone if it inverts an element.
    """
    n = len(pts)
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    free = np.ones(n, bool)
    free[:nb] = False
    for _ in range(iters):
        acc = np.zeros((n, 2))
        wsum = np.zeros(n)
        # weight neighbours by 1/y^2 so fine (low) regions are not dragged up
        w = 1.0 / (pts[e[:, 0], 1] * pts[e[:, 1], 1])
        for a, b in ((0, 1), (1, 0)):
            np.add.at(acc, e[:, a], w[:, None] * pts[e[:, b]])
            np.add.at(wsum, e[:, a], w)
        new = pts.copy()
        ok = free & (wsum > 0)
        new[ok] = 0.5 * pts[ok] + 0.5 * acc[ok] / wsum[ok, None]
        p = new[tri]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        bad = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] <= 0
        if bad.any():
            revert = np.unique(tri[bad].ravel())
            new[revert] = pts[revert]
        pts = new
    return pts


def structured_rectangle(x0: float, x1: float, y0: float, y1: float, nx: int, ny: int) -> TriangleMesh:
    """Uniform grid on [x0, x1] x [y0, y1], each cell split along its main diagonal.

    Sides are tagged bottom, right, top, left (counterclockwise).
    """
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(len(pts)).reshape(ny + 1, nx + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    tri = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    sides = {"bottom": idx[0, :], "right": idx[:, -1], "top": idx[-1, ::-1], "left": idx[::-1, 0]}
    loop, tags = [], []
    for tag, nodes in sides.items():
        loop.extend(nodes[:-1])
        tags.extend([tag] * (len(nodes) - 1))
    corners = {"bl": int(idx[0, 0]), "br": int(idx[0, -1]), "tr": int(idx[-1, -1]), "tl": int(idx[-1, 0])}
    h = max((x1 - x0) / nx, (y1 - y0) / ny) / y0
    return TriangleMesh(pts, tri, np.array(loop), tags, {k: np.asarray(v) for k, v in sides.items()},
                        corners, h)
