"""Regular truncated-octahedron meshes over cuboidal domains.

Each element is represented in an abstract "mesh space" by a cuboid cell of
20 points arranged on 4 lengthwise edges (5 points per edge). Cells stack as
staggered bricks; connectivity is built as element -> point -> node.

Conventions
-----------
* Global point numbering is lexicographic over (z-plane, y-row, x-column) of
  the point grid.
* Elements are numbered lexicographically over (layer k, row j, column i).
* ``Mesh.connectivity`` and all node indices exposed by ``Mesh`` are 0-based.
  ``PointGrid.point_node`` keeps the 1-based convention with 0 meaning
  "no node".
* Element 0 has its centroid at the origin. Rows advance in +y, layers in -z.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SQRT2 = np.sqrt(2.0)

# Local node coordinates (eta, zeta, xi) for edge length sqrt(2).
_BASE_COORDS = np.array([
    (0, 1, -2), (-1, 0, -2), (0, -1, -2), (1, 0, -2),
    (0, 2, -1), (-2, 0, -1), (0, -2, -1), (2, 0, -1),
    (1, 2, 0), (-1, 2, 0), (-2, 1, 0), (-2, -1, 0),
    (-1, -2, 0), (1, -2, 0), (2, -1, 0), (2, 1, 0),
    (0, 2, 1), (-2, 0, 1), (0, -2, 1), (2, 0, 1),
    (0, 1, 2), (-1, 0, 2), (0, -1, 2), (1, 0, 2),
], dtype=float)

_R1 = np.array([[1 / SQRT2, -1 / SQRT2, 0.0],
                [1 / SQRT2, 1 / SQRT2, 0.0],
                [0.0, 0.0, 1.0]])
_R2 = np.array([[0.0, 0.0, 1.0],
                [0.0, 1.0, 0.0],
                [-1.0, 0.0, 0.0]])

# Reoriented coordinates of the master element (edge length sqrt(2)).
MASTER_COORDS = _BASE_COORDS @ (_R2 @ _R1).T

# Local node -> local point (1-based Roman numerals) and PN slot choice.
LOCAL_POINT = np.array([6, 1, 11, 16, 7, 2, 12, 17, 8, 8, 3, 3,
                        13, 13, 18, 18, 9, 4, 14, 19, 10, 5, 15, 20])
NODE_SLOT = np.array([2, 2, 1, 1, 1, 1, 1, 1, 2, 1, 1, 2,
                      1, 2, 2, 1, 1, 1, 1, 1, 2, 2, 1, 1])

FPP_POINTS = (1, 5, 6, 10, 11, 15, 16, 20)
MPP_POINTS = (3, 8, 13, 18)
QPP_POINTS = (2, 4, 7, 9, 12, 14, 17, 19)

EMPTY, FPP, MPP, QPP = 0, 1, 2, 3

# (row, layer) grid offset of each lengthwise cell edge; layer grows in -z.
_EDGE_OFFSETS = np.array([(0, 0), (1, 0), (0, 1), (1, 1)])


def _faces_from_geometry():
    """Outward-oriented vertex cycles of the 14 faces (0-based local nodes)."""
    normals = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            n = np.zeros(3)
            n[axis] = sign
            normals.append(n)
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            for sz in (1.0, -1.0):
                normals.append(np.array([sx, sy, sz]) / np.sqrt(3.0))
    faces = []
    for n0 in normals:
        proj = _BASE_COORDS @ n0
        idx = np.flatnonzero(np.isclose(proj, proj.max()))
        pts = _BASE_COORDS[idx]
        c = pts.mean(axis=0)
        e1 = pts[0] - c
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n0, e1)
        ang = np.arctan2((pts - c) @ e2, (pts - c) @ e1)
        faces.append(tuple(int(i) for i in idx[np.argsort(ang)]))
    return tuple(faces)


FACES = _faces_from_geometry()


def _edges_from_faces(faces=FACES):
    edges = set()
    for f in faces:
        for a, b in zip(f, f[1:] + f[:1]):
            edges.add((min(a, b), max(a, b)))
    return tuple(sorted(edges))


EDGES = _edges_from_faces()


@dataclass(frozen=True)
class GridSpec:
    """Cell counts along each axis plus the physical edge length."""

    nx: int
    ny: int
    nz: int
    edge_len: float = 1.0

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.edge_len > 0:
            raise ValueError(f"edge_len must be positive, got {self.edge_len!r}")


@dataclass(frozen=True)
class UnitCell:
    edge_len: float
    local_coords: np.ndarray  # (24, 3), centroid at origin

    @property
    def faces(self):
        return FACES

    @property
    def edges(self):
        return EDGES


@dataclass(frozen=True)
class PointGrid:
    spec: GridSpec
    element_point: np.ndarray  # (TE, 20) 0-based global points
    point_class: np.ndarray    # (TP,) EMPTY / FPP / MPP / QPP
    point_node: np.ndarray = field(default=None)  # (TP, 2) 1-based, 0 = none

    @property
    def n_points(self):
        return self.point_class.shape[0]

    @property
    def has_empty_points(self):
        return bool(np.any(self.point_class == EMPTY))


@dataclass(frozen=True, eq=False)
class Mesh:
    spec: GridSpec
    connectivity: np.ndarray  # (TE, 24) 0-based global nodes
    node_coords: np.ndarray = field(default=None)  # (TN, 3)
    centroids: np.ndarray = field(default=None)    # (TE, 3)
    cells: np.ndarray = field(default=None)        # (TE, 3) lattice (x_unit, row, layer)

    @property
    def n_elements(self):
        return self.connectivity.shape[0]

    @property
    def n_nodes(self):
        return int(self.connectivity.max()) + 1

    @property
    def n_dofs(self):
        return 3 * self.n_nodes

    @cached_property
    def element_dofs(self):
        """(TE, 72) global DOF indices, node-major per element."""
        c = self.connectivity
        return (3 * c[:, :, None] + np.arange(3)).reshape(c.shape[0], 72)

    @property
    def element_volume(self):
        return 8.0 * SQRT2 * self.spec.edge_len ** 3

    def bounds(self):
        """Bounding box of element centroids as ``(lo, hi)``."""
        return self.centroids.min(axis=0), self.centroids.max(axis=0)


def unit_cell(edge_len):
    """Local node coordinates of an element with the given edge length."""
    if not edge_len > 0:
        raise ValueError(f"edge_len must be positive, got {edge_len!r}")
    return UnitCell(edge_len=float(edge_len),
                    local_coords=MASTER_COORDS * (edge_len / SQRT2))


def count_elements(spec):
    nx, ny, nz = spec.nx, spec.ny, spec.nz
    return ((2 * nx - 1) * ny * (nz // 2)
            + ((2 * nx - 1) * (ny // 2) + nx * (ny % 2)) * (nz % 2))


def count_points(spec):
    return (4 * spec.nx + 1) * (spec.ny + 1) * (spec.nz + 1)


def _lattice_cells(spec):
    """(TE, 3) integer cell positions ``(x_unit, row, layer)``.

    ``x_unit`` is the cell's first point column in quarter-cell units. Rows
    with even ``row + layer`` hold ``nx`` cells, the others ``nx - 1``
    shifted by half a cell.
    """
    out = []
    for k in range(spec.nz):
        for j in range(spec.ny):
            if (j + k) % 2 == 0:
                xs = 4 * np.arange(spec.nx)
            else:
                xs = 4 * np.arange(spec.nx - 1) + 2
            block = np.empty((xs.size, 3), dtype=np.int64)
            block[:, 0] = xs
            block[:, 1] = j
            block[:, 2] = k
            out.append(block)
    return np.concatenate(out) if out else np.empty((0, 3), dtype=np.int64)


def build_point_grid(spec):
    """Element-point connectivity and point classification."""
    cells = _lattice_cells(spec)
    npx, npy = 4 * spec.nx + 1, spec.ny + 1
    te = cells.shape[0]
    ep = np.empty((te, 20), dtype=np.int64)
    for edge, (dy, dz) in enumerate(_EDGE_OFFSETS):
        for t in range(5):
            xi = cells[:, 0] + t
            yi = cells[:, 1] + dy
            zi = cells[:, 2] + dz
            ep[:, 5 * edge + t] = (zi * npy + yi) * npx + xi

    tp = count_points(spec)
    pclass = np.zeros(tp, dtype=np.int8)
    for lps, kind in ((FPP_POINTS, FPP), (QPP_POINTS, QPP), (MPP_POINTS, MPP)):
        # MPP last: a point that is FPP of one cell and MPP of another is MPP
        pclass[ep[:, np.array(lps) - 1].ravel()] = kind
    return PointGrid(spec=spec, element_point=ep, point_class=pclass)


def build_point_node(grid):
    """Fill the point-node table of ``grid`` and return a new ``PointGrid``."""
    ep, pclass = grid.element_point, grid.point_class
    tp = pclass.shape[0]
    cells = _lattice_cells(grid.spec)

    fpp_cols = np.array(FPP_POINTS) - 1
    fp_pts = ep[:, fpp_cols].ravel()
    is_fp = pclass[fp_pts] == FPP
    fp_pts = fp_pts[is_fp]
    owner = np.repeat(np.arange(ep.shape[0]), fpp_cols.size)[is_fp]
    share = np.bincount(fp_pts, minlength=tp)
    if np.any(share > 2):
        raise RuntimeError("face-plane point shared by more than two cells")

    # Two sharing cells in the same (row, layer) are full-face neighbours.
    row_id = cells[owner, 1] + (grid.spec.ny + 1) * cells[owner, 2]
    lo = np.full(tp, np.iinfo(np.int64).max)
    hi = np.full(tp, -1)
    np.minimum.at(lo, fp_pts, row_id)
    np.maximum.at(hi, fp_pts, row_id)

    n_nodes = np.zeros(tp, dtype=np.int64)
    n_nodes[pclass == MPP] = 2
    n_nodes[pclass == QPP] = 1
    fp_mask = pclass == FPP
    n_nodes[fp_mask] = 1
    n_nodes[fp_mask & (share == 2) & (lo != hi)] = 2

    first = np.cumsum(n_nodes) - n_nodes + 1
    pn = np.zeros((tp, 2), dtype=np.int64)
    pn[n_nodes >= 1, 0] = first[n_nodes >= 1]
    pn[n_nodes == 2, 1] = first[n_nodes == 2] + 1
    return PointGrid(spec=grid.spec, element_point=ep, point_class=pclass,
                     point_node=pn)


def _select_nodes(grid):
    gp = grid.element_point[:, LOCAL_POINT - 1]           # (TE, 24)
    n1 = grid.point_node[gp, 0]
    n2 = grid.point_node[gp, 1]
    pick = np.where((NODE_SLOT == 2) & (n2 > 0), n2, n1)
    if np.any(pick == 0):
        raise RuntimeError("local node mapped to an empty point")
    return pick - 1


def cell_centroids(cells, edge_len):
    """Physical centroids of lattice cells ``(x_unit, row, layer)``."""
    cells = np.asarray(cells, dtype=float)
    x = cells[:, 0] * (SQRT2 * edge_len / 2.0)
    y = cells[:, 1] * (2.0 * edge_len)
    z = -cells[:, 2] * (2.0 * edge_len)
    return np.column_stack([x, y, z])


def build_connectivity(spec):
    """Connectivity only; see :func:`build_mesh` for coordinates too."""
    grid = build_point_node(build_point_grid(spec))
    return Mesh(spec=spec, connectivity=_select_nodes(grid),
                cells=_lattice_cells(spec))


def compute_centroids_and_nodes(mesh, tol=1e-9):
    """Return ``mesh`` with centroids and node coordinates filled in."""
    spec = mesh.spec
    cells = mesh.cells if mesh.cells is not None else _lattice_cells(spec)
    cen = cell_centroids(cells, spec.edge_len)
    local = unit_cell(spec.edge_len).local_coords
    conn = mesh.connectivity
    pos = cen[:, None, :] + local[None, :, :]              # (TE, 24, 3)
    tn = int(conn.max()) + 1
    nx_ = np.zeros((tn, 3))
    nx_[conn.ravel()] = pos.reshape(-1, 3)
    resid = np.abs(nx_[conn] - pos).max() if conn.size else 0.0
    if resid > tol * spec.edge_len:
        raise RuntimeError(f"inconsistent node positions (residual {resid:.3e})")
    return Mesh(spec=spec, connectivity=conn, node_coords=nx_,
                centroids=cen, cells=cells)


def build_mesh(spec):
    """Connectivity, node coordinates and centroids for ``spec``."""
    return compute_centroids_and_nodes(build_connectivity(spec))


def element_adjacency(mesh, min_shared=3):
    """Pairs ``(e1, e2)``, ``e1 < e2``, sharing at least ``min_shared`` nodes.

    Returns ``(pairs, counts)``.
    """
    import scipy.sparse as sp

    te, tn = mesh.n_elements, mesh.n_nodes
    rows = np.repeat(np.arange(te), 24)
    inc = sp.csr_matrix((np.ones(rows.size), (rows, mesh.connectivity.ravel())),
                        shape=(te, tn))
    shared = sp.triu(inc @ inc.T, k=1).tocoo()
    keep = shared.data >= min_shared
    pairs = np.column_stack([shared.row[keep], shared.col[keep]])
    return pairs, shared.data[keep].astype(int)
