"""P1 finite elements for minimal graphs over half-plane domains.

The hyperbolic area of the graph of u is

    A(u) = integral of sqrt(1 + y^2 |Du|^2) / y^2 dx dy,

whose Euler-Lagrange equation is div(Du / W) = 0 with W = sqrt(1 + y^2 |Du|^2)
(Euclidean divergence and gradient).  A is convex, so damped Newton with an
energy line search converges from any start.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve

from .meshing import TriangleMesh, triangle_quadrature


class SolverError(RuntimeError):
    pass


@dataclass
class NewtonInfo:
    residual: float
    iterations: int
    energy: float
    history: list = field(default_factory=list)


class MinimalGraphProblem:
    """Geometry cache for one mesh: barycentric gradients, areas, quadrature heights."""

    def __init__(self, mesh: TriangleMesh, quad_order: int = 2):
        self.mesh = mesh
        p = mesh.points[mesh.triangles]                       # (m, 3, 2)
        area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                 - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(area2 <= 0):
            raise SolverError("mesh has inverted or degenerate triangles")
        self.area = 0.5 * area2
        # gradient of barycentric coordinate k: rot90 of the opposite edge / (2 area)
        G = np.empty((len(p), 3, 2))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            G[:, k, 0] = (p[:, i, 1] - p[:, j, 1]) / area2
            G[:, k, 1] = (p[:, j, 0] - p[:, i, 0]) / area2
        self.G = G
        bary, w = triangle_quadrature(quad_order)
        self.qw = w
        self.yq = np.einsum("qk,mk->mq", bary, p[:, :, 1])
        self.y2 = self.yq**2
        tri = mesh.triangles
        self._rows = np.repeat(tri, 3, axis=1).ravel()
        self._cols = np.tile(tri, (1, 3)).ravel()
        self.n = mesh.n_nodes
        self._lap = None

    def grad_u(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("mk,mkd->md", u[self.mesh.triangles], self.G)

    def energy(self, u: np.ndarray) -> float:
        g = self.grad_u(u)
        g2 = np.sum(g * g, axis=1)
        W = np.sqrt(1.0 + self.y2 * g2[:, None])
        # subtract the u-independent part 1/y^2 for a better-conditioned total
        dens = (W - 1.0) / self.y2
        return float(np.sum(self.area * (dens @ self.qw)))

    def element_W(self, u: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        g = self.grad_u(u)
        if y is None:
            y = self.mesh.points[self.mesh.triangles][:, :, 1].mean(axis=1)
        return np.sqrt(1.0 + y**2 * np.sum(g * g, axis=1))

    def residual(self, u: np.ndarray) -> np.ndarray:
        """dA/du_j = integral of (Du / W) . grad(phi_j) for every node."""
        g = self.grad_u(u)
        g2 = np.sum(g * g, axis=1)
        W = np.sqrt(1.0 + self.y2 * g2[:, None])
        m1 = (1.0 / W) @ self.qw
        flux = (self.area * m1)[:, None] * g                   # (m, 2)
        loc = np.einsum("mkd,md->mk", self.G, flux)
        r = np.zeros(self.n)
        np.add.at(r, self.mesh.triangles.ravel(), loc.ravel())
        return r

    def hessian(self, u: np.ndarray, damp: float = 0.0) -> sp.csr_matrix:
        """Second variation; damp in [0, 1] shrinks the negative rank-one part.

        damp = 1 gives the lagged-diffusion (Picard) matrix, which stays
        positive definite however steep the graph is.
        """
        g = self.grad_u(u)
        g2 = np.sum(g * g, axis=1)
        W = np.sqrt(1.0 + self.y2 * g2[:, None])
        m1 = (1.0 / W) @ self.qw
        m3 = (1.0 - damp) * ((self.y2 / W**3) @ self.qw)
        A = self.area
        # element matrix B (m1 I - m3 g g^T) B^T, B = barycentric gradients
        Gg = np.einsum("mkd,md->mk", self.G, g)
        GG = np.einsum("mkd,mld->mkl", self.G, self.G)
        K = A[:, None, None] * (m1[:, None, None] * GG - m3[:, None, None] * Gg[:, :, None] * Gg[:, None, :])
        H = sp.coo_matrix((K.ravel(), (self._rows, self._cols)), shape=(self.n, self.n))
        return H.tocsr()

    def laplacian(self) -> sp.csr_matrix:
        GG = np.einsum("mkd,mld->mkl", self.G, self.G) * self.area[:, None, None]
        return sp.coo_matrix((GG.ravel(), (self._rows, self._cols)), shape=(self.n, self.n)).tocsr()

    def harmonic_extension(self, fixed: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Discrete harmonic function with the given Dirichlet values (initial guess)."""
        key = fixed.tobytes()
        if self._lap is None or self._lap[0] != key:
            L = self.laplacian()
            free = ~fixed
            self._lap = (key, L[free][:, fixed], splu(L[free][:, free].tocsc()))
        _, Lfb, lu = self._lap
        u = np.zeros(self.n)
        u[fixed] = values[fixed]
        u[~fixed] = lu.solve(-(Lfb @ u[fixed]))
        return u

    def solve(self, fixed: np.ndarray, values: np.ndarray, u0: np.ndarray | None = None,
              tol: float = 1e-10, max_iter: int = 500) -> tuple[np.ndarray, NewtonInfo]:
        """Damped Newton for the Dirichlet problem; tol bounds the max free nodal residual."""
        free = ~fixed
        if u0 is None:
            u = self.harmonic_extension(fixed, values)
        else:
            # warm start: previous solution plus a harmonic correction of the boundary change
            u0 = np.asarray(u0, float)
            u = u0 + self.harmonic_extension(fixed, values - u0)
        try:
            return self._newton(u, fixed, tol, max_iter)
        except SolverError:
            if u0 is None:
                raise
            return self._newton(self.harmonic_extension(fixed, values), fixed, tol, max_iter)

    def _newton(self, u, fixed, tol, max_iter):
        free = ~fixed
        if not free.any():
            return u, NewtonInfo(0.0, 0, self.energy(u))
        E = self.energy(u)
        r = self.residual(u)
        res = float(np.max(np.abs(r[free])))
        hist = [res]
        it = 0
        damp = 0.0
        while res > tol:
            if it >= max_iter:
                raise SolverError(f"Newton did not converge: residual {res:.3e} after {it} iterations")
            H = self.hessian(u, damp)
            Hff = H[free][:, free].tocsc()
            d = np.zeros(self.n)
            try:
                d[free] = spsolve(Hff, -r[free])
            except Exception as exc:  # pragma: no cover - singular factorisation
                raise SolverError(f"singular linearisation: {exc}") from exc
            if not np.all(np.isfinite(d)):
                raise SolverError("singular linearisation (non-finite Newton step)")
            slope = float(r @ d)
            alpha = 1.0
            for _ in range(60):
                un = u + alpha * d
                En = self.energy(un)
                if En <= E + 1e-4 * alpha * slope:
                    break
                # near convergence the energy change is below roundoff; fall back on the residual
                if abs(En - E) <= 1e-13 * max(1.0, abs(E)):
                    rn = self.residual(un)
                    if np.max(np.abs(rn[free])) < res:
                        break
                alpha *= 0.5
            else:
                raise SolverError(f"line search failed at residual {res:.3e}")
            # steep regions make the full Newton step overshoot; blend toward Picard
            damp = max(0.0, 0.25 * damp - 1e-3) if alpha == 1.0 else min(1.0, 2 * damp + 0.25)
            u, E = un, En
            r = self.residual(u)
            res = float(np.max(np.abs(r[free])))
            hist.append(res)
            it += 1
        return u, NewtonInfo(res, it, E, hist)


def locate(mesh: TriangleMesh, q: np.ndarray, candidates: np.ndarray | None = None):
    """Containing triangle and barycentric coordinates for query points (-1 if outside)."""
    q = np.atleast_2d(q)
    tri = mesh.triangles if candidates is None else mesh.triangles[candidates]
    ids = np.arange(len(mesh.triangles)) if candidates is None else np.asarray(candidates)
    p = mesh.points[tri]
    lo, hi = q.min(0), q.max(0)
    bmin, bmax = p.min(1), p.max(1)
    near = np.all(bmax >= lo - 1e-14, 1) & np.all(bmin <= hi + 1e-14, 1)
    p, ids = p[near], ids[near]
    v0 = p[:, 0]
    T = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)         # (c, 2, 2)
    Tinv = np.linalg.inv(T)
    out_t = np.full(len(q), -1)
    out_b = np.zeros((len(q), 3))
    best = np.full(len(q), -np.inf)
    for start in range(0, len(q), 256):
        qq = q[start:start + 256]
        lam12 = np.einsum("cij,qcj->qci", Tinv, qq[:, None, :] - v0[None])
        lam = np.concatenate([1 - lam12.sum(2, keepdims=True), lam12], axis=2)
        score = lam.min(2)
        j = np.argmax(score, axis=1)
        sc = score[np.arange(len(qq)), j]
        sl = slice(start, start + len(qq))
        ok = sc > -1e-9
        out_t[sl] = np.where(ok, ids[j], -1)
        out_b[sl] = lam[np.arange(len(qq)), j]
        best[sl] = sc
    return out_t, out_b


def interpolate(mesh: TriangleMesh, u: np.ndarray, q: np.ndarray, candidates=None) -> np.ndarray:
    t, b = locate(mesh, q, candidates)
    if np.any(t < 0):
        raise SolverError("interpolation point outside the mesh")
    return np.sum(u[mesh.triangles[t]] * b, axis=1)


def side_flux_density(mesh: TriangleMesh, r: np.ndarray, tag: str):
    """Nodal inward flux densities along a side from the nodal residual r.

    Returns (s, q, dz, nodes): s the hyperbolic arclength of the side nodes,
    q = -r_j / (integral of phi_j ds) at interior side nodes (nan at corners)
    and dz the flux carried by each boundary edge.  Every node shares its flux
    equally between its two edges (a corner's half goes to its single edge on
    this side), so sum(dz) equals side_flux(mesh, r, tag) exactly.
    """
    nodes = mesh.side_nodes[tag]
    pts = mesh.points[nodes]
    seg = 2 * np.arcsinh(np.hypot(*(pts[1:] - pts[:-1]).T) / (2 * np.sqrt(pts[1:, 1] * pts[:-1, 1])))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    mass = np.zeros(len(nodes))
    mass[:-1] += 0.5 * seg
    mass[1:] += 0.5 * seg
    q = np.full(len(nodes), np.nan)
    q[1:-1] = -r[nodes[1:-1]] / mass[1:-1]
    g = -r[nodes].astype(float)
    g[0] *= 0.5
    g[-1] *= 0.5
    dz = 0.5 * (g[:-1] + g[1:])
    dz[0] += 0.5 * g[0]
    dz[-1] += 0.5 * g[-1]
    return s, q, dz, nodes


def side_flux(mesh: TriangleMesh, r: np.ndarray, tag: str) -> float:
    """Inward flux across a side: interior nodal residuals plus half of each corner's."""
    nodes = mesh.side_nodes[tag]
    return float(-np.sum(r[nodes[1:-1]]) - 0.5 * (r[nodes[0]] + r[nodes[-1]]))
