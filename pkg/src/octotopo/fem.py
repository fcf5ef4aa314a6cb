"""Wachspress shape functions, nodal-subregion quadrature and the solid
element stiffness for the regular truncated octahedron."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import EDGES, FACES, MASTER_COORDS, SQRT2

# Voigt order (xx, yy, zz, yz, xz, xy), engineering shear strains.
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


@dataclass(frozen=True)
class Material:
    lam: float = 10.0
    mu: float = 10.0

    def __post_init__(self):
        if not self.mu > 0 or not self.lam + 2.0 * self.mu / 3.0 > 0:
            raise ValueError(f"invalid Lame constants lam={self.lam}, mu={self.mu}")


class ShapeContext:
    """Face planes and node/face incidence of one convex element.

    Parameters
    ----------
    coords : (24, 3) array
        Node coordinates of the element.
    faces : sequence of vertex cycles
        Outward-oriented local node cycles.
    """

    def __init__(self, coords=MASTER_COORDS, faces=FACES):
        self.coords = np.asarray(coords, dtype=float)
        self.faces = tuple(tuple(f) for f in faces)
        self.centroid = self.coords.mean(axis=0)
        n_faces = len(self.faces)
        self.normals = np.empty((n_faces, 3))
        self.offsets = np.empty(n_faces)
        self.areas = np.empty(n_faces)
        self.face_centroids = np.empty((n_faces, 3))
        for i, f in enumerate(self.faces):
            p = self.coords[list(f)]
            c = p.mean(axis=0)
            area_vec = 0.5 * sum(np.cross(p[k] - c, p[(k + 1) % len(f)] - c)
                                 for k in range(len(f)))
            area = np.linalg.norm(area_vec)
            self.normals[i] = area_vec / area
            self.offsets[i] = self.normals[i] @ c
            self.areas[i] = area
            self.face_centroids[i] = c
        # complement[I, F]: face F does not contain node I
        self.complement = np.ones((self.coords.shape[0], n_faces), dtype=bool)
        for i, f in enumerate(self.faces):
            self.complement[list(f), i] = False
        self.scale = np.min(self.offsets - self.normals @ self.centroid)

    def heights(self, x):
        """Signed distances from ``x`` to every face plane (positive inside)."""
        return self.offsets - np.asarray(x, dtype=float) @ self.normals.T

    def _prepare(self, x, tol):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = self.heights(x)
        hmin = h.min(axis=1)
        if np.any(hmin < -tol * self.scale):
            raise ValueError("point lies outside the element")
        nudge = 1e-9 * self.scale
        bad = hmin < nudge
        if np.any(bad):
            x = x.copy()
            x[bad] = self.centroid + (x[bad] - self.centroid) * (1.0 - 2 * nudge / self.scale)
            h = self.heights(x)
        return x, h

    def _log_s(self, h):
        log_r = np.log(self.areas * h / 3.0)
        return log_r @ self.complement.T

    def values(self, x, tol=1e-10):
        """Shape function values, shape ``(n_points, 24)``."""
        _, h = self._prepare(x, tol)
        log_s = self._log_s(h)
        log_s -= log_s.max(axis=1, keepdims=True)
        s = np.exp(log_s)
        return s / s.sum(axis=1, keepdims=True)

    def gradients(self, x, tol=1e-10):
        """Shape function gradients, shape ``(n_points, 24, 3)``."""
        _, h = self._prepare(x, tol)
        log_s = self._log_s(h)
        log_s -= log_s.max(axis=1, keepdims=True)
        s = np.exp(log_s)
        n = s / s.sum(axis=1, keepdims=True)
        # d(log s^I)/dx = sum over F not containing I of -n_F / h_F
        g = -(self.complement[None, :, :] / h[:, None, :]) @ self.normals
        gbar = np.einsum("pi,pik->pk", n, g)
        return n[:, :, None] * (g - gbar[:, None, :])


def shape_values(ctx, x):
    return ctx.values(x)


def shape_gradients(ctx, x):
    return ctx.gradients(x)


def _hull_volume_centroid(points):
    hull = ConvexHull(points)
    inner = points.mean(axis=0)
    tri = points[hull.simplices]
    a, b, c = tri[:, 0] - inner, tri[:, 1] - inner, tri[:, 2] - inner
    vols = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0
    cents = (tri.sum(axis=1) + inner) / 4.0
    return vols.sum(), (vols[:, None] * cents).sum(axis=0) / vols.sum()


def quadrature(edge_len, cell=None):
    """24-point nodal-subregion rule for an element of edge ``edge_len``.

    The subregion of node I is the hull of the node, the midpoints of its
    edges, the centroids of its faces and the element centroid. Points are
    the subregion centroids; weights their volumes.

    Returns ``(points, weights)`` in the element frame (centroid at origin).
    """
    if not edge_len > 0:
        raise ValueError(f"edge_len must be positive, got {edge_len!r}")
    coords = (cell.local_coords if cell is not None
              else MASTER_COORDS * (edge_len / SQRT2))
    ctx = ShapeContext(coords)
    centroid = coords.mean(axis=0)
    points = np.empty((24, 3))
    weights = np.empty(24)
    for node in range(24):
        mids = [0.5 * (coords[a] + coords[b]) for a, b in EDGES if node in (a, b)]
        fcs = [ctx.face_centroids[i] for i, f in enumerate(ctx.faces) if node in f]
        hull_pts = np.vstack([coords[node], *mids, *fcs, centroid])
        weights[node], points[node] = _hull_volume_centroid(hull_pts)
    return points, weights


def elasticity_matrix(material):
    """6x6 Voigt matrix of ``lam*d_pq*d_rs + 2*mu*d_pr*d_qs``."""
    lam, mu = material.lam, material.mu
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[np.arange(3), np.arange(3)] += 2.0 * mu
    d[np.arange(3, 6), np.arange(3, 6)] = mu
    return d


def strain_displacement(grads):
    """B matrices ``(n_points, 6, 72)`` from shape gradients ``(n_points, 24, 3)``."""
    npts = grads.shape[0]
    b = np.zeros((npts, 6, 24, 3))
    for row, (i, j) in enumerate(VOIGT_PAIRS):
        b[:, row, :, i] += grads[:, :, j]
        if i != j:
            b[:, row, :, j] += grads[:, :, i]
    return b.reshape(npts, 6, 72)


def element_stiffness(ctx, points, weights, d):
    """``sum_J w_J B(x_J)^T D B(x_J)``."""
    b = strain_displacement(ctx.gradients(points))
    k = np.einsum("p,pai,ab,pbj->ij", weights, b, d, b)
    return 0.5 * (k + k.T)


def isoparametric_map(master_point, node_coords, ctx=None):
    """Physical position of ``master_point`` given physical ``node_coords``."""
    ctx = ctx or ShapeContext()
    return ctx.values(master_point) @ np.asarray(node_coords, dtype=float)


@dataclass(frozen=True, eq=False)
class ElementKernel:
    edge_len: float
    material: Material
    K0: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    D: np.ndarray

    @property
    def volume(self):
        return float(self.quad_weights.sum())


def element_kernel(edge_len=1.0, material=None):
    """Shared solid-element stiffness for a lattice of edge ``edge_len``."""
    material = material or Material()
    coords = MASTER_COORDS * (edge_len / SQRT2)
    ctx = ShapeContext(coords)
    points, weights = quadrature(edge_len)
    d = elasticity_matrix(material)
    k0 = element_stiffness(ctx, points, weights, d)
    return ElementKernel(edge_len=float(edge_len), material=material, K0=k0,
                         quad_points=points, quad_weights=weights, D=d)
