"""Simplicial meshes: triangulated cross-sections and prism-split cylinders.

The 3D mesh of omega x (-1, 1) is built by extruding a 2D triangulation into
layers of prisms; each prism is split into 3 tetrahedra using the sorted-index
pattern, which keeps neighbouring splits face-conforming and is deterministic
across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

from .errors import FormatError
from .geometry import ConvexPolygon, cross2

__all__ = [
    "SimplicialMesh",
    "NodalField",
    "TAG_INTERIOR",
    "TAG_LATERAL",
    "TAG_TOPBOT",
    "structured_rect_mesh",
    "triangulate_polygon",
    "extrude_mesh",
    "gradient_field",
    "planar_vertical_split",
    "nodal_from_function",
    "dilate_nodal",
    "write_mesh",
    "read_mesh",
    "write_nodal",
    "read_nodal",
]

TAG_INTERIOR = 0
TAG_LATERAL = 1  # above the boundary of omega (in 2D: on the boundary)
TAG_TOPBOT = 2

_TAG_NAMES = {TAG_INTERIOR: "interior", TAG_LATERAL: "lateral", TAG_TOPBOT: "topbot"}
_TAG_CODES = {v: k for k, v in _TAG_NAMES.items()}


@dataclass(eq=False)
class LatticeInfo:
    """Structured metadata for meshes built on a rectangular node lattice."""

    nx: int
    ny: int
    origin: tuple
    h: tuple
    pattern: str
    # node index of lattice point (i, j); extra vertices (crossed centers) follow
    node_of: np.ndarray = field(repr=False, default=None)
    # vertex index of the square-center vertex of cell (i, j), crossed pattern only
    center_of: np.ndarray = field(repr=False, default=None)


@dataclass(eq=False)
class SimplicialMesh:
    vertices: np.ndarray
    cells: np.ndarray
    vertex_tags: np.ndarray
    lattice: LatticeInfo | None = None
    n_layers: int | None = None
    base_num_vertices: int | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        self.vertex_tags = np.asarray(self.vertex_tags, dtype=np.uint8)
        if self.cells.shape[1] != self.dim + 1:
            raise ValueError("cell arity does not match vertex dimension")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def _grad_ops(self):
        """Per-cell gradient matrices B (m, d, d+1) and volumes (m,)."""
        d = self.dim
        v = self.vertices[self.cells]  # (m, d+1, d)
        edges = v[:, 1:, :] - v[:, :1, :]  # (m, d, d)
        mats = np.swapaxes(edges, 1, 2)  # columns are edge vectors
        det = np.linalg.det(mats)
        if np.any(np.abs(det) < 1e-14):
            raise ValueError("mesh contains a degenerate (zero volume) cell")
        inv_t = np.swapaxes(np.linalg.inv(mats), 1, 2)  # (m, d, d)
        diff = np.zeros((d, d + 1))
        diff[:, 0] = -1.0
        diff[:, 1:] = np.eye(d)
        b = np.einsum("mij,jk->mik", inv_t, diff)
        vols = np.abs(det) / {1: 1.0, 2: 2.0, 3: 6.0}[d]
        return b, vols

    def gradient_operators(self):
        return self._grad_ops

    def cell_volumes(self) -> np.ndarray:
        return self._grad_ops[1]

    def cell_gradients(self, values: np.ndarray) -> np.ndarray:
        """Constant gradient of the P1 interpolant on every cell, shape (m, d)."""
        b, _ = self._grad_ops
        vals = np.asarray(values, dtype=float)[self.cells]  # (m, d+1)
        return np.einsum("mik,mk->mi", b, vals)

    def tagged(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.vertex_tags == tag)

    def layer_of_vertex(self) -> np.ndarray:
        """For extruded meshes: layer index of each vertex."""
        if self.n_layers is None:
            raise ValueError("not an extruded mesh")
        return np.arange(self.num_vertices) // self.base_num_vertices


@dataclass(eq=False)
class NodalField:
    """One finite value per mesh vertex."""

    mesh: SimplicialMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.num_vertices,):
            raise ValueError("one value per vertex required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("nodal fields must be finite")


def gradient_field(mesh: SimplicialMesh, u) -> np.ndarray:
    """Per-cell gradients of a nodal field (NodalField or raw array)."""
    values = u.values if isinstance(u, NodalField) else u
    return mesh.cell_gradients(values)


def planar_vertical_split(gradients: np.ndarray):
    """Split 3D cell gradients into in-plane and vertical parts."""
    g = np.asarray(gradients)
    return g[:, :2], g[:, 2]


def structured_rect_mesh(
    nx: int,
    ny: int,
    origin=(0.0, 0.0),
    size=(1.0, 1.0),
    pattern: str = "crossed",
) -> SimplicialMesh:
    """Structured triangulation of an axis-aligned rectangle.

    ``pattern="left"`` splits each lattice square by one diagonal;
    ``pattern="crossed"`` adds the square center and uses four triangles,
    which reproduces distance-like kinks along both diagonals exactly.
    """
    if pattern not in ("left", "crossed"):
        raise ValueError(f"unknown pattern {pattern!r}")
    ox, oy = origin
    hx, hy = size[0] / nx, size[1] / ny
    xs = ox + hx * np.arange(nx + 1)
    ys = oy + hy * np.arange(ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    node_of = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    cells = []
    if pattern == "left":
        for i in range(nx):
            for j in range(ny):
                v00, v10 = node_of[i, j], node_of[i + 1, j]
                v01, v11 = node_of[i, j + 1], node_of[i + 1, j + 1]
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
    else:
        centers = []
        base = len(verts)
        for i in range(nx):
            for j in range(ny):
                centers.append((ox + hx * (i + 0.5), oy + hy * (j + 0.5)))
                c = base + i * ny + j
                v00, v10 = node_of[i, j], node_of[i + 1, j]
                v01, v11 = node_of[i, j + 1], node_of[i + 1, j + 1]
                cells.append((v00, v10, c))
                cells.append((v10, v11, c))
                cells.append((v11, v01, c))
                cells.append((v01, v00, c))
        verts = np.vstack([verts, np.array(centers)])
    tags = np.full(len(verts), TAG_INTERIOR, dtype=np.uint8)
    on_bnd = (
        np.isclose(verts[:, 0], ox)
        | np.isclose(verts[:, 0], ox + size[0])
        | np.isclose(verts[:, 1], oy)
        | np.isclose(verts[:, 1], oy + size[1])
    )
    tags[on_bnd] = TAG_LATERAL
    center_of = None
    if pattern == "crossed":
        base = (nx + 1) * (ny + 1)
        center_of = base + np.arange(nx * ny).reshape(nx, ny)
    info = LatticeInfo(nx, ny, (ox, oy), (hx, hy), pattern, node_of, center_of)
    return SimplicialMesh(verts, np.array(cells), tags, lattice=info)


def triangulate_polygon(poly: ConvexPolygon, h: float) -> SimplicialMesh:
    """Delaunay triangulation of a convex polygon from its vertices, boundary
    samples at spacing ~h and an interior lattice at spacing h."""
    pts = [poly.vertices]
    for a, b in poly.edges():
        a, b = np.asarray(a), np.asarray(b)
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / h)))
        t = np.arange(1, n)[:, None] / n
        if len(t):
            pts.append(a + t * (b - a))
    lo, hi = poly.bounding_box()
    xs = np.arange(lo[0] + h, hi[0] - h / 2, h)
    ys = np.arange(lo[1] + h, hi[1] - h / 2, h)
    if len(xs) and len(ys):
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        lattice = np.stack([gx.ravel(), gy.ravel()], axis=1)
        inner = lattice[poly.boundary_distance(lattice) > 0.25 * h]
        inner = inner[poly.contains(inner)]
        if len(inner):
            pts.append(inner)
    points = np.unique(np.vstack(pts), axis=0)
    tri = Delaunay(points)
    verts = tri.points
    cells = tri.simplices
    # drop exactly degenerate slivers from collinear boundary triples
    v = verts[cells]
    area2 = cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    keep = np.abs(area2) > 1e-12 * max(1.0, poly.diameter()) ** 2
    cells = cells[keep]
    tags = np.full(len(verts), TAG_INTERIOR, dtype=np.uint8)
    tags[poly.boundary_distance(verts) <= 1e-9 * max(1.0, poly.diameter())] = TAG_LATERAL
    return SimplicialMesh(verts, cells, tags)


def extrude_mesh(mesh2d: SimplicialMesh, n_layers: int) -> SimplicialMesh:
    """Extrude a triangulation of omega into n_layers prism layers over
    x3 in [-1, 1], splitting each prism into 3 tetrahedra."""
    if n_layers < 1:
        raise ValueError("need at least one layer")
    n2 = mesh2d.num_vertices
    x3 = -1.0 + 2.0 * np.arange(n_layers + 1) / n_layers
    verts = np.concatenate(
        [
            np.hstack([mesh2d.vertices, np.full((n2, 1), z)])
            for z in x3
        ]
    )
    cells = []
    for tri in mesh2d.cells:
        p = np.sort(tri)  # sorted-index split keeps shared faces conforming
        for j in range(n_layers):
            lo, hi = j * n2, (j + 1) * n2
            a0, b0, c0 = p + lo
            a1, b1, c1 = p + hi
            cells.append((a0, b0, c0, c1))
            cells.append((a0, b0, c1, b1))
            cells.append((a0, b1, c1, a1))
    tags = np.full(len(verts), TAG_INTERIOR, dtype=np.uint8)
    lateral2d = mesh2d.vertex_tags == TAG_LATERAL
    for j in range(n_layers + 1):
        sl = slice(j * n2, (j + 1) * n2)
        layer_tags = np.full(n2, TAG_INTERIOR, dtype=np.uint8)
        if j in (0, n_layers):
            layer_tags[:] = TAG_TOPBOT
        layer_tags[lateral2d] = TAG_LATERAL
        tags[sl] = layer_tags
    return SimplicialMesh(
        verts,
        np.array(cells),
        tags,
        lattice=mesh2d.lattice,
        n_layers=n_layers,
        base_num_vertices=n2,
    )


def nodal_from_function(mesh: SimplicialMesh, fn) -> NodalField:
    return NodalField(mesh, np.asarray(fn(mesh.vertices), dtype=float))


def dilate_nodal(field: NodalField, x0, t: float) -> NodalField:
    """Dilated field u_t(x) = u(x0 + (x - x0)/t) on the dilated mesh; nodal
    values are carried to the mapped vertices, so per-cell gradients scale by
    exactly 1/t."""
    if t <= 1:
        raise ValueError("dilation requires t > 1")
    m = field.mesh
    x0 = np.asarray(x0, dtype=float)
    verts = x0 + t * (m.vertices - x0)
    new_mesh = SimplicialMesh(
        verts,
        m.cells.copy(),
        m.vertex_tags.copy(),
        lattice=None,
        n_layers=m.n_layers,
        base_num_vertices=m.base_num_vertices,
    )
    return NodalField(new_mesh, field.values.copy())


# Mesh files: a count header `nv nc nt`, then nv vertex lines `x y [z]`,
# nc cell lines `i j k [l]`, and nt tag lines `vertex-index tag-name`.

def write_mesh(mesh: SimplicialMesh, path) -> None:
    tagged = np.flatnonzero(mesh.vertex_tags != TAG_INTERIOR)
    lines = [f"{mesh.num_vertices} {mesh.num_cells} {len(tagged)}"]
    for v in mesh.vertices:
        lines.append(" ".join(repr(float(c)) for c in v))
    for c in mesh.cells:
        lines.append(" ".join(str(int(i)) for i in c))
    for i in tagged:
        lines.append(f"{int(i)} {_TAG_NAMES[int(mesh.vertex_tags[i])]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialMesh:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    try:
        nv, nc, nt = (int(t) for t in raw[0].split())
        verts = np.array([[float(t) for t in ln.split()] for ln in raw[1 : 1 + nv]])
        cells = np.array(
            [[int(t) for t in ln.split()] for ln in raw[1 + nv : 1 + nv + nc]]
        )
        tags = np.full(nv, TAG_INTERIOR, dtype=np.uint8)
        for ln in raw[1 + nv + nc : 1 + nv + nc + nt]:
            idx, name = ln.split()
            tags[int(idx)] = _TAG_CODES[name]
    except (ValueError, IndexError, KeyError) as exc:
        raise FormatError(f"{path}: malformed mesh file") from exc
    return SimplicialMesh(verts, cells, tags)


def write_nodal(field: NodalField, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(repr(float(v)) for v in field.values) + "\n")


def read_nodal(mesh: SimplicialMesh, path) -> NodalField:
    with open(path) as fh:
        vals = [float(ln.strip()) for ln in fh if ln.strip()]
    return NodalField(mesh, np.asarray(vals))
