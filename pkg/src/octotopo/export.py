"""Mesh and field writers.

* Legacy ASCII VTK unstructured grid with polyhedron cells (type 42). Each
  cell is a face stream: ``n_values n_faces (n_pts id...)*n_faces``.
* Binary dump: little-endian header ``nx ny nz`` (int64), ``l`` (float64),
  ``TE TN`` (int64), then the (TE, 24) int64 connectivity (0-based) and the
  (TN, 3) float64 node coordinates, both row-major.
"""

import struct

import numpy as np

from .mesh import FACES, GridSpec, Mesh, compute_centroids_and_nodes

VTK_POLYHEDRON = 42
_HEADER = struct.Struct("<qqqdqq")


def _face_stream(conn_row):
    vals = [len(FACES)]
    for f in FACES:
        vals.append(len(f))
        vals.extend(int(conn_row[i]) for i in f)
    return vals


def write_vtk(path, mesh, cell_data=None, point_data=None, cells=None):
    """Write ``mesh`` (optionally only ``cells``) as a polyhedron grid.

    ``cell_data``/``point_data`` map names to scalar or (n, 3) arrays over
    all elements/nodes; they are subset together with ``cells``.
    """
    cells = np.arange(mesh.n_elements) if cells is None else np.asarray(cells)
    conn = mesh.connectivity[cells]
    used = np.unique(conn)
    remap = np.full(mesh.n_nodes, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    conn = remap[conn]
    pts = mesh.node_coords[used]

    lines = ["# vtk DataFile Version 3.0", "truncated octahedron mesh", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {pts.shape[0]} double"]
    lines.extend(" ".join(f"{v:.17g}" for v in p) for p in pts)
    streams = [_face_stream(row) for row in conn]
    size = sum(len(s) + 1 for s in streams)
    lines.append(f"CELLS {len(streams)} {size}")
    lines.extend(" ".join(map(str, [len(s)] + s)) for s in streams)
    lines.append(f"CELL_TYPES {len(streams)}")
    lines.extend([str(VTK_POLYHEDRON)] * len(streams))

    def _block(data, index):
        for name, arr in data.items():
            arr = np.asarray(arr)[index]
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.17g}" for v in arr)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(f"{v:.17g}" for v in row) for row in arr)

    if cell_data:
        lines.append(f"CELL_DATA {len(streams)}")
        _block(cell_data, cells)
    if point_data:
        lines.append(f"POINT_DATA {pts.shape[0]}")
        _block(point_data, used)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_cells(path):
    """Face streams of every cell in a file written by :func:`write_vtk`."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    i = next(k for k, t in enumerate(tokens) if t.startswith("CELLS"))
    n = int(tokens[i].split()[1])
    return [list(map(int, tokens[i + 1 + k].split())) for k in range(n)]


def write_binary(path, mesh):
    s = mesh.spec
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(s.nx, s.ny, s.nz, s.edge_len,
                              mesh.n_elements, mesh.n_nodes))
        fh.write(np.ascontiguousarray(mesh.connectivity, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(mesh.node_coords, dtype="<f8").tobytes())


def read_binary(path):
    """Inverse of :func:`write_binary`; centroids are recomputed."""
    with open(path, "rb") as fh:
        nx, ny, nz, l, te, tn = _HEADER.unpack(fh.read(_HEADER.size))
        conn = np.frombuffer(fh.read(te * 24 * 8), dtype="<i8").reshape(te, 24)
        coords = np.frombuffer(fh.read(tn * 3 * 8), dtype="<f8").reshape(tn, 3)
    spec = GridSpec(nx, ny, nz, l)
    mesh = compute_centroids_and_nodes(Mesh(spec=spec, connectivity=conn.astype(np.int64)))
    return Mesh(spec=spec, connectivity=mesh.connectivity, node_coords=coords.copy(),
                centroids=mesh.centroids, cells=mesh.cells)
