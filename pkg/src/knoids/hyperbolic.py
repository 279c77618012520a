"""Exact hyperbolic geometry in the upper half-plane model.

Points are (x, y) with y > 0 and metric y^-2 (dx^2 + dy^2).  Geodesics are
vertical lines or half-circles centred on the boundary axis.  Angles are
measured against the orthonormal frame E1 = y d/dx, E2 = y d/dy, which agrees
with the Euclidean angle because the model is conformal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INF = math.inf


class GeometryError(ValueError):
    """Invalid geometric input (non-finite point, degenerate geodesic...)."""


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)) or self.y <= 0:
            raise GeometryError(f"not a finite half-plane point: ({self.x}, {self.y})")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class IdealPoint:
    """Point of the ideal boundary: an abscissa on y = 0, or infinity."""

    x: float

    @property
    def at_infinity(self) -> bool:
        return math.isinf(self.x)


def dist(p, q) -> float:
    """Hyperbolic distance between two finite points."""
    for s in (p, q):
        if isinstance(s, IdealPoint):
            raise GeometryError("distance to an ideal point is infinite")
    px, py = (p.x, p.y) if isinstance(p, HPoint) else (float(p[0]), float(p[1]))
    qx, qy = (q.x, q.y) if isinstance(q, HPoint) else (float(q[0]), float(q[1]))
    if not all(map(math.isfinite, (px, py, qx, qy))) or py <= 0 or qy <= 0:
        raise GeometryError("distance needs finite points with y > 0")
    # 2 asinh form of arccosh(1 + |p-q|^2 / (2 py qy)); exact for small distances too
    e = math.hypot(px - qx, py - qy)
    return 2.0 * math.asinh(e / (2.0 * math.sqrt(py * qy)))


def dist_array(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vectorised distance for (..., 2) arrays of points."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    e = np.hypot(p[..., 0] - q[..., 0], p[..., 1] - q[..., 1])
    return 2.0 * np.arcsinh(e / (2.0 * np.sqrt(p[..., 1] * q[..., 1])))


def rotate_about_i(z, beta: float):
    """Elliptic isometry fixing i and turning tangent directions there by beta."""
    c, s = math.cos(beta / 2), math.sin(beta / 2)
    return (c * z + s) / (-s * z + c)


def to_disk(pts: np.ndarray) -> np.ndarray:
    """Cayley map to the Poincare disk sending i to the origin."""
    pts = np.asarray(pts, float)
    z = pts[..., 0] + 1j * pts[..., 1]
    w = (z - 1j) / (z + 1j)
    return np.stack([w.real, w.imag], axis=-1)


def to_klein(pts: np.ndarray) -> np.ndarray:
    """Beltrami-Klein coordinates centred at i: geodesics become straight chords."""
    w = to_disk(pts)
    r2 = np.sum(w * w, axis=-1, keepdims=True)
    return 2.0 * w / (1.0 + r2)


def from_klein(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, float)
    r2 = np.sum(k * k, axis=-1, keepdims=True)
    w = k / (1.0 + np.sqrt(np.maximum(0.0, 1.0 - r2)))
    wc = w[..., 0] + 1j * w[..., 1]
    z = 1j * (1 + wc) / (1 - wc)
    return np.stack([z.real, z.imag], axis=-1)


def shoot(p: HPoint, alpha: float, s: float) -> HPoint:
    """Point at distance s from p along the geodesic leaving p with direction alpha."""
    w = rotate_about_i(1j * math.exp(s), alpha - math.pi / 2)
    z = p.x + p.y * w
    return HPoint(z.real, z.imag)


def shoot_array(p: HPoint, alpha: float, s: np.ndarray) -> np.ndarray:
    w = rotate_about_i(1j * np.exp(np.asarray(s, float)), alpha - math.pi / 2)
    z = p.x + p.y * w
    return np.column_stack([z.real, z.imag])


@dataclass(frozen=True)
class Geodesic:
    """Complete oriented geodesic.

    kind "line": {x = c}; orientation +1 travels upward.
    kind "circle": centre c, radius r; orientation +1 travels with x increasing.
    """

    kind: str
    c: float
    r: float = 0.0
    orientation: int = 1

    def __post_init__(self):
        if self.kind not in ("line", "circle"):
            raise GeometryError(f"unknown geodesic kind {self.kind!r}")
        if self.kind == "circle" and not self.r > 0:
            raise GeometryError("circular geodesic needs r > 0")
        if self.orientation not in (1, -1):
            raise GeometryError("orientation must be +1 or -1")

    @classmethod
    def through(cls, p: HPoint, q: HPoint) -> "Geodesic":
        """Geodesic through p and q, oriented from p to q."""
        dx = q.x - p.x
        if abs(dx) <= 1e-14 * max(1.0, abs(p.x), abs(q.x), p.y, q.y):
            if abs(q.y - p.y) == 0:
                raise GeometryError("coincident points do not define a geodesic")
            return cls("line", 0.5 * (p.x + q.x), 0.0, 1 if q.y > p.y else -1)
        c = ((q.x**2 + q.y**2) - (p.x**2 + p.y**2)) / (2 * dx)
        r = math.hypot(p.x - c, p.y)
        return cls("circle", c, r, 1 if dx > 0 else -1)

    @classmethod
    def from_direction(cls, p: HPoint, alpha: float) -> "Geodesic":
        """Geodesic through p whose orientation has direction alpha at p."""
        ca, sa = math.cos(alpha), math.sin(alpha)
        if abs(ca) < 1e-15:
            return cls("line", p.x, 0.0, 1 if sa > 0 else -1)
        return cls("circle", p.x + p.y * sa / ca, p.y / abs(ca), 1 if ca > 0 else -1)

    @classmethod
    def toward_ideal(cls, p: HPoint, xi: IdealPoint) -> "Geodesic":
        if xi.at_infinity:
            return cls("line", p.x, 0.0, 1)
        c = (p.x**2 + p.y**2 - xi.x**2) / (2 * (p.x - xi.x))
        return cls("circle", c, abs(xi.x - c), 1 if xi.x > p.x else -1)

    @property
    def endpoints(self) -> tuple[IdealPoint, IdealPoint]:
        """(start, end) in the direction of travel."""
        if self.kind == "line":
            lo, hi = IdealPoint(self.c), IdealPoint(INF)
        else:
            lo, hi = IdealPoint(self.c - self.r), IdealPoint(self.c + self.r)
        return (lo, hi) if self.orientation > 0 else (hi, lo)

    def reversed(self) -> "Geodesic":
        return Geodesic(self.kind, self.c, self.r, -self.orientation)

    def direction_at(self, p) -> float:
        """Direction angle of the oriented geodesic at a point on it."""
        x, y = _xy(p)
        if self.kind == "line":
            return math.pi / 2 if self.orientation > 0 else -math.pi / 2
        # clockwise traversal of the upper semicircle has x increasing
        tx, ty = y, -(x - self.c)
        if self.orientation < 0:
            tx, ty = -tx, -ty
        return math.atan2(ty, tx)

    def residual(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean deviation of points from the geodesic (zero on it)."""
        pts = np.atleast_2d(pts)
        if self.kind == "line":
            return np.abs(pts[:, 0] - self.c)
        return np.abs(np.hypot(pts[:, 0] - self.c, pts[:, 1]) - self.r)

    def to_axis(self) -> "Isometry":
        """Orientation-preserving isometry taking this geodesic to the positive
        imaginary axis, with the direction of travel mapped upward."""
        e0, e1 = (e.x for e in self.endpoints)
        if math.isinf(e1):  # upward line
            m = (1.0, -e0, 0.0, 1.0)
        elif math.isinf(e0):  # downward line: c -> inf, inf -> 0
            m = (0.0, -1.0, 1.0, -e1)
        elif e1 > e0:
            m = (1.0, -e0, -1.0, e1)
        else:
            m = (1.0, -e0, 1.0, -e1)
        return Isometry.from_matrix(m)

    def signed_arclength(self, p0, pts: np.ndarray) -> np.ndarray:
        """Signed hyperbolic arclength from p0 to points on the geodesic."""
        iso = self.to_axis()
        w0 = iso.apply_complex(complex(*_xy(p0)))
        w = iso.apply_complex(np.asarray(pts)[:, 0] + 1j * np.asarray(pts)[:, 1])
        return np.log(np.abs(w) / abs(w0))

    def point_from(self, p0, s) -> np.ndarray:
        """Points at signed arclength s from p0 (on the geodesic) in the direction of travel."""
        alpha = self.direction_at(p0)
        x, y = _xy(p0)
        return shoot_array(HPoint(x, y), alpha, np.atleast_1d(s))

    def distance_to(self, pts: np.ndarray) -> np.ndarray:
        """Hyperbolic distance from points to the complete geodesic."""
        pts = np.atleast_2d(pts)
        w = self.to_axis().apply_complex(pts[:, 0] + 1j * pts[:, 1])
        return np.arcsinh(np.abs(w.real) / w.imag)


def _xy(p) -> tuple[float, float]:
    if isinstance(p, HPoint):
        return p.x, p.y
    return float(p[0]), float(p[1])


@dataclass(frozen=True)
class Isometry:
    """Isometry of H^2 x R.

    On H^2: z -> (a w + b) / (c w + d) with w = z, or w = conj(z) when the map
    reverses orientation (then ad - bc = -1).  On R: t -> t_sign * t + t_shift.
    """

    m: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 1.0)
    conj: bool = False
    t_sign: int = 1
    t_shift: float = 0.0

    @classmethod
    def from_matrix(cls, m, conj=False, t_sign=1, t_shift=0.0) -> "Isometry":
        a, b, c, d = map(float, m)
        det = a * d - b * c
        if det == 0:
            raise GeometryError("singular Mobius matrix")
        if (det > 0) == conj:
            raise GeometryError("determinant sign does not match the orientation flag")
        s = math.sqrt(abs(det))
        return cls((a / s, b / s, c / s, d / s), conj, t_sign, t_shift)

    @property
    def det(self) -> float:
        a, b, c, d = self.m
        return a * d - b * c

    def apply_complex(self, z):
        a, b, c, d = self.m
        w = np.conj(z) if self.conj else z
        return (a * w + b) / (c * w + d)

    def apply(self, p):
        """Apply to an HPoint or an (n, 2) / (n, 3) array of points."""
        if isinstance(p, HPoint):
            z = self.apply_complex(p.z)
            return HPoint(z.real, z.imag)
        pts = np.asarray(p, float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        z = self.apply_complex(pts[:, 0] + 1j * pts[:, 1])
        out = np.empty_like(pts)
        out[:, 0] = z.real
        out[:, 1] = z.imag
        if pts.shape[1] > 2:
            out[:, 2] = self.t_sign * pts[:, 2] + self.t_shift
        return out[0] if single else out

    def compose(self, other: "Isometry") -> "Isometry":
        """self after other."""
        a1, b1, c1, d1 = self.m
        a2, b2, c2, d2 = other.m
        m = (a1 * a2 + b1 * c2, a1 * b2 + b1 * d2, c1 * a2 + d1 * c2, c1 * b2 + d1 * d2)
        return Isometry(m, self.conj ^ other.conj, self.t_sign * other.t_sign,
                        self.t_sign * other.t_shift + self.t_shift)

    def inverse(self) -> "Isometry":
        a, b, c, d = self.m
        det = a * d - b * c
        m = (d / det, -b / det, -c / det, a / det)
        return Isometry(m, self.conj, self.t_sign, -self.t_sign * self.t_shift)

    @classmethod
    def translation_t(cls, tau: float) -> "Isometry":
        return cls(t_shift=float(tau))


def compose(f: Isometry, g: Isometry) -> Isometry:
    return f.compose(g)


def apply(iso: Isometry, p):
    return iso.apply(p)


def reflect_across(g: Geodesic) -> Isometry:
    """Mirror of H^2 (times R) in the vertical plane over g."""
    if g.kind == "line":
        return Isometry.from_matrix((-1.0, 2 * g.c, 0.0, 1.0), conj=True)
    c, r = g.c, g.r
    return Isometry.from_matrix((c, r * r - c * c, 1.0, -c), conj=True)


def reflect_slice(t0: float) -> Isometry:
    """Mirror of H^2 x R in the horizontal slice t = t0."""
    return Isometry(t_sign=-1, t_shift=2.0 * t0)


def rotation_about(p: HPoint, beta: float) -> Isometry:
    """Rotation by beta about p (tangent directions at p turn by +beta)."""
    to_i = Isometry.from_matrix((1.0, -p.x, 0.0, p.y))
    c, s = math.cos(beta / 2), math.sin(beta / 2)
    rot = Isometry.from_matrix((c, s, -s, c))
    return to_i.inverse().compose(rot).compose(to_i)


def a_max(phi: float, l: float = INF) -> float:
    """Largest admissible length of the side opposite the ideal/far vertex."""
    _check_phi(phi)
    return 2.0 * math.atanh(_tanh(l) * _cos(phi))


def a_emb(phi: float, l: float = INF) -> float:
    """Threshold length above which the angle at p3 is at most pi/2."""
    _check_phi(phi)
    return math.asinh(_tanh(l) * _cos(phi) / math.sin(phi))


def _cos(phi: float) -> float:
    # float(pi/2) is not a zero of the floating-point cosine
    return 0.0 if phi >= math.pi / 2 else math.cos(phi)


def _tanh(l: float) -> float:
    if not l > 0:
        raise GeometryError("side length l must be positive or infinite")
    return 1.0 if math.isinf(l) else math.tanh(l)


def _check_phi(phi: float) -> None:
    # pi/2 itself is allowed so that a_max(pi/2, l) = 0 can be evaluated
    if not (0 < phi <= math.pi / 2 + 1e-15):
        raise GeometryError(f"angle phi={phi} outside (0, pi/2)")


@dataclass(frozen=True)
class TriangleSpec:
    a: float
    phi: float
    l: float = INF

    def __post_init__(self):
        if not (0 < self.phi < math.pi / 2):
            raise GeometryError(f"phi={self.phi} outside (0, pi/2)")
        if not (self.l > 0):
            raise GeometryError("l must be positive or infinite")
        amax = a_max(self.phi, self.l)
        if not (0 < self.a < amax):
            raise GeometryError(f"a={self.a} outside (0, a_max={amax})")

    @property
    def ideal(self) -> bool:
        return math.isinf(self.l)


@dataclass(frozen=True)
class TrianglePose:
    """Placed triangle: p2 = (0,1), l1 = p2p3 along the unit circle toward +x,
    l3 = p2p1 leaving p2 with direction -phi.  Traversal p2 -> p3 -> p1 is
    clockwise, so the interior lies to the right of each directed side.

    Side li is opposite pi: l1 = p2p3 (length a), l2 = p3p1 (length l),
    l3 = p1p2 (length c).
    """

    spec: TriangleSpec
    p1: HPoint | IdealPoint
    p2: HPoint
    p3: HPoint
    l1: Geodesic
    l2: Geodesic
    l3: Geodesic
    c: float
    angle1: float
    angle2: float
    angle3: float
    truncation: float | None = None
    lengths: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    @property
    def vertices(self):
        return (self.p1, self.p2, self.p3)

    @property
    def area(self) -> float:
        return math.pi - (self.angle1 + self.angle2 + self.angle3)

    @property
    def diameter(self) -> float:
        return max(self.lengths)

    def truncated(self, R: float) -> "TrianglePose":
        """Finite triangle (p1(R), p2, p3) with p1(R) on l3 at distance R from p2."""
        if not R > 0:
            raise GeometryError("truncation distance must be positive")
        if not self.spec.ideal:
            raise GeometryError("only triangles with an ideal vertex are truncated")
        q = shoot(self.p2, -self.spec.phi, R)
        return _finish_pose(self.spec, q, self.p2, self.p3, truncation=R)

    def working(self, R: float | None) -> "TrianglePose":
        return self.truncated(R) if self.spec.ideal else self


def _angle_between(u: float, v: float) -> float:
    d = abs((u - v + math.pi) % (2 * math.pi) - math.pi)
    return d


def _finish_pose(spec, p1, p2, p3, truncation=None) -> TrianglePose:
    l1 = Geodesic.through(p2, p3)
    if isinstance(p1, IdealPoint):
        l2 = Geodesic.toward_ideal(p3, p1)
        l3 = Geodesic.toward_ideal(p2, p1).reversed()
        ang1 = 0.0
        c = INF
        len2 = INF
    else:
        l2 = Geodesic.through(p3, p1)
        l3 = Geodesic.through(p1, p2)
        ang1 = _angle_between(l2.reversed().direction_at(p1), l3.direction_at(p1))
        c = dist(p1, p2)
        len2 = dist(p3, p1)
    ang2 = _angle_between(l1.direction_at(p2), l3.reversed().direction_at(p2))
    ang3 = _angle_between(l1.reversed().direction_at(p3), l2.direction_at(p3))
    return TrianglePose(spec, p1, p2, p3, l1, l2, l3, c, ang1, ang2, ang3,
                        truncation, (dist(p2, p3), len2, c))


def solve_side_c(a: float, phi: float, l: float, tol: float = 1e-12) -> float:
    """Solve cosh l = cosh a cosh c - sinh a sinh c cos phi for c > 0 by bisection.

    The right-hand side is strictly increasing in c once it exceeds cosh l
    (its derivative is sinh c cosh a - cosh c sinh a cos phi > 0 for c >= a),
    and equals cosh a < cosh l at c = 0, so the root is bracketed and unique.
    """
    target = math.cosh(l)
    g = lambda c: math.cosh(a) * math.cosh(c) - math.sinh(a) * math.sinh(c) * math.cos(phi) - target
    lo, hi = 0.0, max(1.0, l + a)
    n = 0
    while g(hi) <= 0:
        hi *= 2
        n += 1
        if n > 60:
            raise GeometryError("law-of-cosines bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    else:
        raise GeometryError("law-of-cosines bisection did not converge")
    return 0.5 * (lo + hi)


def layout_triangle(spec: TriangleSpec) -> TrianglePose:
    p2 = HPoint(0.0, 1.0)
    p3 = HPoint(math.tanh(spec.a), 1.0 / math.cosh(spec.a))
    if spec.ideal:
        p1 = IdealPoint((1.0 - math.sin(spec.phi)) / math.cos(spec.phi))
    else:
        c = solve_side_c(spec.a, spec.phi, spec.l)
        p1 = shoot(p2, -spec.phi, c)
    pose = _finish_pose(spec, p1, p2, p3)
    _validate_pose(pose)
    return pose


def _validate_pose(pose: TrianglePose, tol: float = 1e-9) -> None:
    spec = pose.spec
    if abs(pose.angle2 - spec.phi) > tol:
        raise GeometryError("layout lost the angle at p2")
    if abs(pose.lengths[0] - spec.a) > tol:
        raise GeometryError("layout lost the side length a")
    if not spec.ideal and abs(pose.lengths[1] - spec.l) > tol * max(1.0, spec.l):
        raise GeometryError("layout lost the side length l")
    # the angle at p3 exceeds phi inside Omega; it is obtuse below a_emb
    if not (pose.angle1 < math.pi / 2 and pose.angle2 < math.pi / 2):
        raise GeometryError("no acute solution at p1/p2 for these parameters")
    if not (pose.angle3 > pose.angle2 - tol):
        raise GeometryError("angle at p3 below phi: parameters outside Omega")
