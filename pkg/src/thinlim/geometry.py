"""Convex polygons, hulls and the elementary planar geometry the lab runs on.

Polygons are stored counter-clockwise.  Membership tests are inclusive: a
point exactly on an edge (within tolerance) counts as inside, consistently
across every operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError

from .errors import EmptyDomainError, NonConvexDomainError

__all__ = [
    "Polygon",
    "ConvexPolygon",
    "ThinDomain",
    "convex_hull_2d",
    "clip_convex",
    "erode_domain",
    "unit_square",
    "regular_polygon",
    "hull_contains",
    "project_onto_convex_polygon",
]

_GEOM_TOL = 1e-9


def cross2(a, b):
    """z-component of the cross product of planar vectors (broadcasting)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _signed_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class Polygon:
    """Simple planar polygon with counter-clockwise vertices."""

    def __init__(self, vertices):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        area = _signed_area(verts)
        if abs(area) < _GEOM_TOL:
            raise ValueError("degenerate polygon (zero area)")
        if area < 0:
            verts = verts[::-1].copy()
        self.vertices = verts
        self.vertices.setflags(write=False)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = cross2(v, np.roll(v, -1, axis=0))
        c = (v + np.roll(v, -1, axis=0)) * w[:, None]
        return c.sum(axis=0) / (6.0 * self.area)

    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def edges(self):
        return zip(self.vertices, np.roll(self.vertices, -1, axis=0))

    def boundary_distance(self, points) -> np.ndarray:
        """Unsigned distance from each point to the polygon boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        best = np.full(len(pts), np.inf)
        for a, b in self.edges():
            ab = b - a
            denom = float(ab @ ab)
            t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
            proj = a + t[:, None] * ab
            best = np.minimum(best, np.linalg.norm(pts - proj, axis=1))
        return best

    def contains(self, points, tol: float = _GEOM_TOL) -> np.ndarray:
        """Inclusive membership via crossing counts plus an edge-distance pass."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        v = self.vertices
        n = len(v)
        j = n - 1
        for i in range(n):
            xi, yi = v[i]
            xj, yj = v[j]
            crosses = ((yi > y) != (yj > y)) & (
                x < (xj - xi) * (y - yi) / (yj - yi) + xi
            )
            inside ^= crosses
            j = i
        on_edge = self.boundary_distance(pts) <= tol
        return inside | on_edge

    def is_convex(self, tol: float = _GEOM_TOL) -> bool:
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        cr = cross2(e, np.roll(e, -1, axis=0))
        return bool(np.all(cr >= -tol * max(1.0, self.diameter() ** 2)))


class ConvexPolygon(Polygon):
    """Counter-clockwise convex polygon; convexity is validated at construction."""

    def __init__(self, vertices):
        super().__init__(vertices)
        if not self.is_convex():
            raise NonConvexDomainError("vertices do not describe a convex polygon")

    def contains(self, points, tol: float = _GEOM_TOL) -> np.ndarray:
        """Half-plane test against every edge, inclusive on the boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        scale = max(1.0, self.diameter())
        ok = np.ones(len(pts), dtype=bool)
        for a, ab in zip(v, e):
            cr = ab[0] * (pts[:, 1] - a[1]) - ab[1] * (pts[:, 0] - a[0])
            ok &= cr >= -tol * scale * max(1.0, float(np.hypot(*ab)))
        return ok

    def edge_normals_offsets(self):
        """Outward unit normals n_k and offsets c_k with the polygon = {n.x <= c}."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        c = np.einsum("ij,ij->i", n, v)
        return n, c

    def inradius(self) -> float:
        """Radius of the largest inscribed disk (Chebyshev radius)."""
        lo = 0.0
        hi = self.diameter()
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            try:
                erode_domain(self, mid)
            except EmptyDomainError:
                hi = mid
            else:
                lo = mid
        return lo


@dataclass(frozen=True)
class ThinDomain:
    """Cross-section omega with thickness parameter; reference cylinder is
    omega x (-1, 1) after rescaling."""

    omega: ConvexPolygon
    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def unit_square() -> ConvexPolygon:
    return ConvexPolygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def regular_polygon(k: int, radius: float = 1.0, center=(0.0, 0.0)) -> ConvexPolygon:
    ang = 2 * np.pi * np.arange(k) / k
    cx, cy = center
    return ConvexPolygon(
        np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)], axis=1)
    )


def convex_hull_2d(points) -> np.ndarray:
    """Monotone-chain hull; returns CCW vertices (may be fewer than 3 for
    degenerate inputs: a single point or a segment's endpoints)."""
    pts = np.unique(np.atleast_2d(np.asarray(points, dtype=float)), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross2(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3 or abs(_signed_area(hull)) < _GEOM_TOL * np.ptp(pts) ** 2:
        # collinear input collapses to its extreme pair
        ext = np.array([pts[0], pts[-1]])
        return np.unique(ext, axis=0)
    return hull


def _clip_halfplane(verts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman step: keep the side left of the directed line a->b."""
    if len(verts) == 0:
        return verts
    out = []
    n = len(verts)
    d = b - a
    for i in range(n):
        p, q = verts[i], verts[(i + 1) % n]
        sp = d[0] * (p[1] - a[1]) - d[1] * (p[0] - a[0])
        sq = d[0] * (q[1] - a[1]) - d[1] * (q[0] - a[0])
        if sp >= 0:
            out.append(p)
        if (sp > 0 and sq < 0) or (sp < 0 and sq > 0):
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
    return np.array(out) if out else np.empty((0, 2))


def clip_convex(subject: np.ndarray, window: ConvexPolygon) -> np.ndarray:
    """Clip a CCW convex vertex loop against a convex window polygon."""
    verts = np.asarray(subject, dtype=float)
    for a, b in window.edges():
        verts = _clip_halfplane(verts, np.asarray(a), np.asarray(b))
        if len(verts) == 0:
            break
    return verts


def _dedupe_loop(verts: np.ndarray, tol: float) -> np.ndarray:
    if len(verts) == 0:
        return verts
    keep = [verts[0]]
    for p in verts[1:]:
        if np.linalg.norm(p - keep[-1]) > tol:
            keep.append(p)
    if len(keep) > 1 and np.linalg.norm(keep[0] - keep[-1]) <= tol:
        keep.pop()
    return np.array(keep)


def erode_domain(omega: ConvexPolygon, eta: float) -> ConvexPolygon:
    """Inner-parallel polygon at distance eta (half-plane intersection).

    Raises EmptyDomainError when eta meets or exceeds the inradius.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    normals, offsets = omega.edge_normals_offsets()
    lo, hi = omega.bounding_box()
    pad = 2 * omega.diameter() + 1.0
    verts = np.array(
        [
            [lo[0] - pad, lo[1] - pad],
            [hi[0] + pad, lo[1] - pad],
            [hi[0] + pad, hi[1] + pad],
            [lo[0] - pad, hi[1] + pad],
        ]
    )
    for n, c in zip(normals, offsets - eta):
        # keep {x : n.x <= c}; as a directed line through c*n along (-n_y, n_x)
        anchor = c * n
        direction = np.array([-n[1], n[0]])
        verts = _clip_halfplane(verts, anchor, anchor + direction)
        if len(verts) == 0:
            raise EmptyDomainError(f"erosion by eta={eta} empties the polygon")
    verts = _dedupe_loop(verts, _GEOM_TOL * max(1.0, omega.diameter()))
    if len(verts) < 3 or abs(_signed_area(verts)) < _GEOM_TOL:
        raise EmptyDomainError(f"erosion by eta={eta} empties the polygon")
    return ConvexPolygon(verts)


def project_onto_convex_polygon(poly: ConvexPolygon, points) -> np.ndarray:
    """Euclidean projection of each point onto the (closed) polygon."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = pts.copy()
    inside = poly.contains(pts)
    todo = ~inside
    if todo.any():
        sub = pts[todo]
        best = np.full(len(sub), np.inf)
        proj = np.zeros_like(sub)
        for a, b in poly.edges():
            ab = np.asarray(b) - np.asarray(a)
            t = np.clip((sub - a) @ ab / float(ab @ ab), 0.0, 1.0)
            cand = np.asarray(a) + t[:, None] * ab
            dist = np.linalg.norm(sub - cand, axis=1)
            better = dist < best
            best[better] = dist[better]
            proj[better] = cand[better]
        out[todo] = proj
    return out


# Polygon files: one `x y` vertex pair per line, counter-clockwise.

def write_polygon(poly: Polygon, path) -> None:
    with open(path, "w") as fh:
        for x, y in poly.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")


def read_polygon(path, convex: bool = True) -> Polygon:
    from .errors import FormatError

    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    try:
        verts = [[float(t) for t in ln.split()] for ln in raw]
    except ValueError as exc:
        raise FormatError(f"{path}: malformed polygon file") from exc
    cls = ConvexPolygon if convex else Polygon
    return cls(verts)


def _affine_basis(points: np.ndarray, tol: float):
    """Orthonormal basis of the affine hull of points; returns (base, basis)."""
    base = points[0]
    centered = points - base
    if len(points) == 1:
        return base, np.zeros((points.shape[1], 0))
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(1.0, float(np.abs(points).max()))
    rank = int(np.sum(s > tol * scale * 10))
    return base, vt[:rank].T


def hull_contains(points, queries, tol: float = 1e-9) -> np.ndarray:
    """Inclusive membership of query points in conv(points), any dimension.

    Degenerate point sets (rank below ambient dimension) are handled by
    recursing inside their affine hull.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    qs = np.atleast_2d(np.asarray(queries, dtype=float))
    if len(pts) == 0:
        return np.zeros(len(qs), dtype=bool)
    scale = max(1.0, float(np.abs(pts).max()))
    atol = tol * scale
    base, basis = _affine_basis(pts, tol)
    rank = basis.shape[1]
    d = pts.shape[1]
    if rank == 0:
        return np.linalg.norm(qs - base, axis=1) <= atol
    if rank < d:
        resid = (qs - base) - (qs - base) @ basis @ basis.T
        on_plane = np.linalg.norm(resid, axis=1) <= atol
        out = np.zeros(len(qs), dtype=bool)
        if on_plane.any():
            sub = hull_contains((pts - base) @ basis, (qs[on_plane] - base) @ basis, tol)
            out[on_plane] = sub
        return out
    if d == 1:
        lo, hi = pts.min(), pts.max()
        return (qs[:, 0] >= lo - atol) & (qs[:, 0] <= hi + atol)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        # rank test passed but qhull still objected; fall back to a joggle
        hull = ConvexHull(pts, qhull_options="QJ")
    eq = hull.equations
    vals = qs @ eq[:, :d].T + eq[:, d]
    return np.all(vals <= atol, axis=1)
