"""Uniform rectangular grids and extended-real sampled functions.

Grid values live in [0, +inf]; +inf is stored as ``np.inf`` and every kernel
that consumes grid values must branch on it explicitly (no arithmetic that
silently saturates).  NaNs are rejected at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllInfiniteError, FormatError

__all__ = [
    "Grid",
    "GridFunction",
    "sample_density",
    "read_grid_function",
    "write_grid_function",
]


@dataclass(frozen=True)
class Grid:
    """Axis-aligned uniform lattice in 1, 2 or 3 dimensions.

    Node coordinates are ``origin[k] + i * spacing[k]`` exactly; ``counts``
    are node counts per axis (at least 2 each).
    """

    origin: tuple
    spacing: tuple
    counts: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        spacing = tuple(float(v) for v in self.spacing)
        counts = tuple(int(v) for v in self.counts)
        if not (len(origin) == len(spacing) == len(counts)):
            raise ValueError("origin, spacing and counts must have equal length")
        if len(counts) not in (1, 2, 3):
            raise ValueError("only 1D, 2D and 3D grids are supported")
        if any(h <= 0 for h in spacing):
            raise ValueError("spacing must be positive on every axis")
        if any(n < 2 for n in counts):
            raise ValueError("need at least 2 nodes per axis")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.counts))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.counts[axis])

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (num_nodes, dim), row-major order."""
        axes = [self.axis_coords(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def drop_last_axis(self) -> "Grid":
        if self.dim < 2:
            raise ValueError("cannot reduce a 1D grid")
        return Grid(self.origin[:-1], self.spacing[:-1], self.counts[:-1])

    @staticmethod
    def from_box(lo, hi, counts) -> "Grid":
        """Grid spanning the closed box [lo, hi] with the given node counts."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        counts = np.atleast_1d(np.asarray(counts, dtype=int))
        spacing = (hi - lo) / (counts - 1)
        return Grid(tuple(lo), tuple(spacing), tuple(int(n) for n in counts))


class GridFunction:
    """Sampled density over a :class:`Grid`, values in [0, +inf]."""

    def __init__(self, grid: Grid, values):
        values = np.asarray(values, dtype=float)
        if values.size != grid.num_nodes:
            raise ValueError(
                f"value count {values.size} != grid node count {grid.num_nodes}"
            )
        values = values.reshape(grid.counts).copy()
        if np.isnan(values).any():
            raise ValueError("grid values must not contain NaN")
        finite = np.isfinite(values)
        if np.any(values[finite] < 0):
            worst = values[finite].min()
            raise ValueError(f"grid values must be >= 0 (got {worst})")
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def min_finite(self) -> float:
        finite = self.finite_mask()
        if not finite.any():
            raise AllInfiniteError("grid function is identically +inf")
        return float(self.values[finite].min())

    def max_finite(self) -> float:
        finite = self.finite_mask()
        if not finite.any():
            raise AllInfiniteError("grid function is identically +inf")
        return float(self.values[finite].max())

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def interpolate(self, points) -> np.ndarray:
        """d-linear interpolation at arbitrary points; +inf outside the grid
        box, and conservatively +inf whenever a surrounding corner is +inf."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.dim
        idx = np.empty((len(pts), d), dtype=int)
        frac = np.empty((len(pts), d))
        outside = np.zeros(len(pts), dtype=bool)
        for k in range(d):
            t = (pts[:, k] - self.grid.origin[k]) / self.grid.spacing[k]
            n = self.grid.counts[k]
            outside |= (t < -1e-9) | (t > n - 1 + 1e-9)
            t = np.clip(t, 0.0, n - 1)
            i = np.minimum(t.astype(int), n - 2)
            idx[:, k] = i
            frac[:, k] = t - i
        out = np.zeros(len(pts))
        bad = np.zeros(len(pts), dtype=bool)
        for corner in range(1 << d):
            w = np.ones(len(pts))
            off = []
            for k in range(d):
                bit = (corner >> k) & 1
                w *= frac[:, k] if bit else 1.0 - frac[:, k]
                off.append(idx[:, k] + bit)
            vals = self.values[tuple(off)]
            corner_inf = np.isinf(vals)
            bad |= corner_inf & (w > 1e-12)
            out += np.where(corner_inf, 0.0, w * vals)
        out[bad | outside] = np.inf
        return out

    def __repr__(self):
        return f"GridFunction(dim={self.dim}, counts={self.grid.counts})"


def sample_density(density, grid: Grid) -> GridFunction:
    """Evaluate an analytic density (callable or Density object) at grid nodes.

    Tiny negative values from floating point cancellation are clamped to 0;
    genuinely negative densities are rejected.
    """
    pts = grid.nodes()
    fn = getattr(density, "eval", density)
    vals = np.asarray(fn(pts), dtype=float).reshape(grid.num_nodes)
    finite = np.isfinite(vals)
    bad = finite & (vals < -1e-12)
    if bad.any():
        raise ValueError("density is negative on the grid; densities map to [0, inf]")
    vals = np.where(finite & (vals < 0), 0.0, vals)
    return GridFunction(grid, vals)


# Text format: header `dim nx [ny [nz]] ox [oy [oz]] hx [hy [hz]]`, then one
# value per line in row-major order with token `inf` for +infinity.

def write_grid_function(gf: GridFunction, path) -> None:
    g = gf.grid
    head = [str(g.dim)]
    head += [str(n) for n in g.counts]
    head += [repr(o) for o in g.origin]
    head += [repr(h) for h in g.spacing]
    lines = [" ".join(head)]
    flat = gf.values.ravel()
    for v in flat:
        lines.append("inf" if np.isinf(v) else repr(float(v)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_grid_function(path) -> GridFunction:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw:
        raise FormatError(f"{path}: empty grid-function file")
    head = raw[0].split()
    try:
        dim = int(head[0])
        counts = tuple(int(t) for t in head[1 : 1 + dim])
        origin = tuple(float(t) for t in head[1 + dim : 1 + 2 * dim])
        spacing = tuple(float(t) for t in head[1 + 2 * dim : 1 + 3 * dim])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed header {raw[0]!r}") from exc
    if len(head) != 1 + 3 * dim:
        raise FormatError(f"{path}: header has wrong token count")
    grid = Grid(origin, spacing, counts)
    body = raw[1:]
    if len(body) != grid.num_nodes:
        raise FormatError(
            f"{path}: expected {grid.num_nodes} values, found {len(body)}"
        )
    vals = np.empty(grid.num_nodes)
    for i, tok in enumerate(body):
        if tok == "inf":
            vals[i] = np.inf
        else:
            try:
                vals[i] = float(tok)
            except ValueError as exc:
                raise FormatError(f"{path}: bad value {tok!r} on line {i + 2}") from exc
    return GridFunction(grid, vals)
