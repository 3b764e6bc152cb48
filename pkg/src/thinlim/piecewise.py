"""Affine and continuous piecewise-affine planar functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutsideDomainError
from .geometry import ConvexPolygon, cross2

__all__ = ["AffineFunction", "PAFunction", "dilate_pa"]


@dataclass(frozen=True)
class AffineFunction:
    """u(x) = gradient . x + offset."""

    gradient: tuple
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "gradient", tuple(float(g) for g in self.gradient))
        object.__setattr__(self, "offset", float(self.offset))

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ np.asarray(self.gradient) + self.offset


class PAFunction:
    """Continuous piecewise-affine function given as (gradient, offset, polygon)
    pieces.  Pieces must cover their union up to null sets and agree on shared
    edges; ``continuity_defect`` measures the worst edge mismatch."""

    def __init__(self, pieces):
        parsed = []
        for z, s, poly in pieces:
            z = np.asarray(z, dtype=float).reshape(2)
            if not isinstance(poly, ConvexPolygon):
                poly = ConvexPolygon(poly)
            parsed.append((z, float(s), poly))
        if not parsed:
            raise ValueError("a PA function needs at least one piece")
        self.pieces = parsed

    @property
    def gradients(self) -> np.ndarray:
        return np.array([z for z, _, _ in self.pieces])

    def locate(self, points, tol: float = 1e-9) -> np.ndarray:
        """Index of the first piece containing each point, -1 when none does."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.full(len(pts), -1, dtype=int)
        for j, (_, _, poly) in enumerate(self.pieces):
            todo = idx < 0
            if not todo.any():
                break
            hit = poly.contains(pts[todo], tol)
            sel = np.flatnonzero(todo)[hit]
            idx[sel] = j
        return idx

    def eval(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self.locate(pts)
        if np.any(idx < 0):
            bad = pts[idx < 0][0]
            raise OutsideDomainError(f"point {tuple(bad)} lies in no piece")
        out = np.empty(len(pts))
        for j, (z, s, _) in enumerate(self.pieces):
            sel = idx == j
            if sel.any():
                out[sel] = pts[sel] @ z + s
        return out

    def __call__(self, points):
        return self.eval(points)

    def eval_point(self, x) -> float:
        return float(self.eval(np.asarray(x, dtype=float)[None, :])[0])

    def _shared_edge_samples(self, tol: float):
        """Sample points on overlapping edge segments of distinct pieces,
        together with the two piece indices."""
        samples = []
        m = len(self.pieces)
        for i in range(m):
            vi = self.pieces[i][2].vertices
            ei = list(zip(vi, np.roll(vi, -1, axis=0)))
            for j in range(i + 1, m):
                vj = self.pieces[j][2].vertices
                ej = list(zip(vj, np.roll(vj, -1, axis=0)))
                for a1, b1 in ei:
                    d1 = b1 - a1
                    L1 = np.linalg.norm(d1)
                    for a2, b2 in ej:
                        d2 = b2 - a2
                        if abs(cross2(d1, d2)) > tol * max(1.0, L1) * max(
                            1.0, np.linalg.norm(d2)
                        ):
                            continue
                        if abs(cross2(d1, a2 - a1)) > tol * max(1.0, L1):
                            continue
                        # collinear edges: overlap in the 1D parametrization
                        t = np.sort([(p - a1) @ d1 / (L1 * L1) for p in (a2, b2)])
                        lo, hi = max(0.0, t[0]), min(1.0, t[1])
                        if hi - lo <= tol:
                            continue
                        for s in (lo, 0.5 * (lo + hi), hi):
                            samples.append((a1 + s * d1, i, j))
        return samples

    def continuity_defect(self, tol: float = 1e-9) -> float:
        """Largest trace mismatch across shared edges (0 for continuous input)."""
        worst = 0.0
        for x, i, j in self._shared_edge_samples(tol):
            zi, si, _ = self.pieces[i]
            zj, sj, _ = self.pieces[j]
            worst = max(worst, abs((x @ zi + si) - (x @ zj + sj)))
        return worst


# PA files: a piece count, then per piece one header `z_x z_y s k` followed by
# k counter-clockwise vertex lines.

def write_pa(pa: PAFunction, path) -> None:
    lines = [str(len(pa.pieces))]
    for z, s, poly in pa.pieces:
        lines.append(f"{float(z[0])!r} {float(z[1])!r} {float(s)!r} {len(poly.vertices)}")
        for x, y in poly.vertices:
            lines.append(f"{float(x)!r} {float(y)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pa(path) -> PAFunction:
    from .errors import FormatError

    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    try:
        n = int(raw[0])
        pieces = []
        pos = 1
        for _ in range(n):
            zx, zy, s, k = raw[pos].split()
            k = int(k)
            verts = [[float(t) for t in ln.split()] for ln in raw[pos + 1 : pos + 1 + k]]
            pieces.append(((float(zx), float(zy)), float(s), ConvexPolygon(verts)))
            pos += 1 + k
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed piecewise-affine file") from exc
    return PAFunction(pieces)


def dilate_pa(pa: PAFunction, x0, t: float) -> PAFunction:
    """Piecewise-affine dilation u_t(x) = u(x0 + (x - x0)/t); the domain maps
    to x0 + t (dom - x0) and every gradient scales by 1/t."""
    if t <= 1:
        raise ValueError("dilation requires t > 1")
    x0 = np.asarray(x0, dtype=float)
    pieces = []
    for z, s, poly in pa.pieces:
        z_new = z / t
        s_new = s + float(z @ x0) * (1.0 - 1.0 / t)
        verts = x0 + t * (poly.vertices - x0)
        pieces.append((z_new, s_new, ConvexPolygon(verts)))
    return PAFunction(pieces)
