"""Inf-projection, convex/biconjugate/level-convex envelopes and the
domain-identity checks built on them.

Envelopes of sampled extended-real functions are computed exactly: the convex
lsc envelope of a finite sample set is the lower boundary of the lifted
convex hull, and the level-convex envelope assigns to each node the smallest
sample level whose sublevel hull contains it.  A discrete Legendre-transform
route is kept alongside as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion
from scipy.spatial import ConvexHull, QhullError

from .errors import AllInfiniteError, EmptyDomainError, ThinlimError
from .geometry import ConvexPolygon, convex_hull_2d, hull_contains
from .grids import Grid, GridFunction
from .hulls import lower_hull_values

__all__ = [
    "project_inf",
    "biconjugate",
    "convex_envelope",
    "legendre_conjugate",
    "biconjugate_via_transforms",
    "level_convex_envelope",
    "SublevelSet",
    "sublevel_hull",
    "sublevel_convex_position",
    "indicator_of_sublevel",
    "validate_coercivity",
    "CoercivityReport",
    "check_indicator_identity",
    "IndicatorIdentityReport",
    "check_commutation",
    "CommutationReport",
    "check_envelope_equality_region",
    "RegionReport",
    "EnvelopeReport",
    "compute_envelope",
    "write_envelope_report",
]

_TOL = 1e-9


def project_inf(f: GridFunction) -> GridFunction:
    """Minimum over the last (zeta) axis; +inf exactly where the whole sampled
    column is +inf."""
    if f.dim < 2:
        raise ValueError("inf-projection needs at least a 2D grid")
    out = np.min(f.values, axis=-1)
    return GridFunction(f.grid.drop_last_axis(), out)


def _finite_points(gf: GridFunction):
    finite = gf.finite_mask().ravel()
    if not finite.any():
        raise AllInfiniteError("envelope of an identically +inf grid function")
    nodes = gf.grid.nodes()
    return nodes, finite, gf.values.ravel()


def biconjugate(g: GridFunction) -> GridFunction:
    """Convex lsc envelope of the sampled extended function, restricted to the
    grid: the lower convex hull of the finite sample points, +inf outside the
    hull of the sampled domain."""
    nodes, finite, vals = _finite_points(g)
    env = lower_hull_values(nodes[finite], vals[finite], nodes)
    env = np.maximum(env, 0.0)  # input >= 0 forces the envelope >= 0
    return g.with_values(env)


def convex_envelope(g: GridFunction) -> GridFunction:
    """Greatest convex minorant of the sampled extended function on the grid.

    For a finite sample set the defining infimum is attained, so on grids this
    coincides with the biconjugate everywhere (no lsc closure is needed); the
    two are kept as separate entry points because only the biconjugate claims
    closure semantics.
    """
    return biconjugate(g)


# ---------------------------------------------------------------------------
# discrete Legendre-transform route (independent, approximate cross-check)


def _stage_max(arr: np.ndarray, axis: int, xs: np.ndarray, ss: np.ndarray):
    """max over axis of (s*x + arr), resolving that axis into the s index."""
    a = np.moveaxis(arr, axis, -1)
    lead = a.shape[:-1]
    n = a.shape[-1]
    flat = a.reshape(-1, n)
    sx = np.outer(ss, xs)  # (m, n)
    out = np.empty((flat.shape[0], len(ss)))
    chunk = max(1, int(4e6 // max(1, len(ss) * n)))
    for lo in range(0, flat.shape[0], chunk):
        hi = min(lo + chunk, flat.shape[0])
        out[lo:hi] = np.max(flat[lo:hi, None, :] + sx[None, :, :], axis=2)
    return np.moveaxis(out.reshape(lead + (len(ss),)), -1, axis)


def _default_slopes(g: GridFunction):
    span = g.max_finite()
    slopes = []
    for k in range(g.dim):
        lmax = max(1.0, abs(span) / g.grid.spacing[k])
        m = 2 * g.grid.counts[k] + 1
        slopes.append(np.linspace(-lmax, lmax, m))
    return slopes


def legendre_conjugate(g: GridFunction, slopes=None):
    """Discrete conjugate sup_x (s.x - g(x)) on a dual slope grid, computed by
    per-axis factored maxima.  Returns (slopes, conjugate values); +inf input
    nodes never supply."""
    if slopes is None:
        slopes = _default_slopes(g)
    work = np.where(g.finite_mask(), -g.values, -np.inf)
    for k in range(g.dim):
        work = _stage_max(work, k, g.grid.axis_coords(k), np.asarray(slopes[k]))
    return slopes, work


def biconjugate_via_transforms(g: GridFunction, slopes=None) -> GridFunction:
    """Two discrete Legendre transforms back onto the primal grid.

    The dual grid truncates the slope set, so this is a convex minorant of the
    exact biconjugate with an O(slope spacing x box radius) gap; it is kept as
    the independent route against the hull-based :func:`biconjugate`.
    """
    slopes, conj = legendre_conjugate(g, slopes)
    work = -conj
    for k in range(g.dim):
        work = _stage_max(work, k, np.asarray(slopes[k]), g.grid.axis_coords(k))
    return g.with_values(np.maximum(work, 0.0))


# ---------------------------------------------------------------------------
# level-convex envelope


def _lc_envelope_1d(vals: np.ndarray) -> np.ndarray:
    left = np.minimum.accumulate(vals)
    right = np.minimum.accumulate(vals[::-1])[::-1]
    return np.maximum(left, right)


class _GrowingHull:
    """Exact hull of a growing point set.  Each level rebuilds from the
    previous hull's vertices plus the new batch (interior points of a growing
    set never become extreme again), which keeps the Qhull input small."""

    def __init__(self, dim: int, tol: float):
        self.dim = dim
        self.tol = tol
        self.extreme = np.empty((0, dim))
        self.equations = None

    def add(self, pts: np.ndarray):
        if len(pts) == 0:
            return
        cand = np.vstack([self.extreme, pts])
        if len(cand) > self.dim:
            try:
                hull = ConvexHull(cand)
            except QhullError:  # still rank-deficient
                self.extreme = cand
                self.equations = None
                return
            self.extreme = cand[hull.vertices]
            self.equations = hull.equations
            return
        self.extreme = cand
        self.equations = None

    def column_intervals(self, cols: np.ndarray):
        """For each column point (first d-1 coordinates), the parameter
        interval [lo, hi] in which the line along the last axis meets the
        hull; convexity makes the intersection an interval.  Columns of a
        degenerate hull return empty intervals (callers fall back)."""
        eq = self.equations
        d = self.dim
        scale = max(1.0, float(np.abs(self.extreme).max()) if len(self.extreme) else 1.0)
        atol = self.tol * scale
        a_last = eq[:, d - 1]
        base = cols @ eq[:, : d - 1].T + eq[:, d]  # (n_cols, F)
        up = a_last > 1e-13
        down = a_last < -1e-13
        flat = ~(up | down)
        hi = np.full(len(cols), np.inf)
        lo = np.full(len(cols), -np.inf)
        if up.any():
            hi = np.min((atol - base[:, up]) / a_last[up], axis=1)
        if down.any():
            lo = np.max((atol - base[:, down]) / a_last[down], axis=1)
        if flat.any():
            bad = np.any(base[:, flat] > atol, axis=1)
            hi = np.where(bad, -np.inf, hi)
        return lo, hi


def _select_levels(distinct: np.ndarray, cap: int) -> np.ndarray:
    if len(distinct) <= cap:
        return distinct
    idx = np.unique(np.round(np.linspace(0, len(distinct) - 1, cap)).astype(int))
    return distinct[idx]


def level_convex_envelope(g: GridFunction, max_levels: int | None = None) -> GridFunction:
    """Greatest level-convex minorant on the grid:
    output(z) = min { t among sample levels : z in hull({g <= t}) }.

    Nodes are assigned their own sample value unless an earlier sublevel hull
    covers them, which keeps the output <= input even when, on large grids,
    the sweep runs over a subsampled set of levels (``max_levels``; the
    induced error is at most one level gap).
    """
    nodes, finite, vals = _finite_points(g)
    if g.dim == 1:
        env = _lc_envelope_1d(g.values.ravel())
        return g.with_values(env)
    if max_levels is None:
        max_levels = 4096 if g.dim <= 2 else 256
    distinct = np.unique(vals[finite])
    levels = _select_levels(distinct, max_levels)
    if levels[-1] != distinct[-1]:
        levels = np.append(levels, distinct[-1])

    env = np.full(vals.shape, np.inf)
    covered = np.zeros(vals.shape, dtype=bool)
    in_level_prev = 0
    hull = _GrowingHull(g.dim, _TOL)
    order = np.argsort(vals, kind="stable")
    sorted_vals = vals[order]
    ptr = 0
    d = g.dim
    axes = [g.grid.axis_coords(k) for k in range(d)]
    col_pts = np.stack(
        [m.ravel() for m in np.meshgrid(*axes[:-1], indexing="ij")], axis=-1
    )
    n_last = g.grid.counts[-1]
    zs = axes[-1]
    covered_grid = covered.reshape(-1, n_last)
    env_grid = env.reshape(-1, n_last)
    active_cols = np.arange(len(col_pts))
    for t in levels:
        new_hi = int(np.searchsorted(sorted_vals, t, side="right"))
        new_nodes = order[ptr:new_hi]
        ptr = new_hi
        if len(new_nodes):
            take = ~covered[new_nodes]
            env[new_nodes[take]] = vals[new_nodes[take]]
            covered[new_nodes[take]] = True
            hull.add(nodes[new_nodes])
        if new_hi == in_level_prev:
            continue
        in_level_prev = new_hi
        active_cols = active_cols[~covered_grid[active_cols].all(axis=1)]
        if len(active_cols) == 0:
            break
        if hull.equations is None:
            sub = nodes.reshape(-1, n_last, d)[active_cols].reshape(-1, d)
            mem = hull_contains(hull.extreme, sub, _TOL).reshape(-1, n_last)
        else:
            lo, hi = hull.column_intervals(col_pts[active_cols])
            mem = (zs[None, :] >= lo[:, None]) & (zs[None, :] <= hi[:, None])
        hit = mem & ~covered_grid[active_cols]
        env_grid[active_cols] = np.where(hit, t, env_grid[active_cols])
        covered_grid[active_cols] |= hit
    return g.with_values(env)


# ---------------------------------------------------------------------------
# sublevel sets and indicators


@dataclass
class SublevelSet:
    level: float
    node_mask: np.ndarray
    points: np.ndarray
    hull: object  # interval tuple (1D), ConvexPolygon or vertex array (2D/3D)
    is_empty: bool


def sublevel_hull(g: GridFunction, t: float) -> SublevelSet:
    """Nodes with g <= t and their convex hull; emptiness is signalled on the
    returned object rather than raised."""
    mask = g.values <= t
    pts = g.grid.nodes()[mask.ravel()]
    if len(pts) == 0:
        return SublevelSet(t, mask, pts, None, True)
    if g.dim == 1:
        hull = (float(pts.min()), float(pts.max()))
    elif g.dim == 2:
        verts = convex_hull_2d(pts)
        hull = ConvexPolygon(verts) if len(verts) >= 3 else verts
    else:
        try:
            hull = pts[ConvexHull(pts).vertices]
        except QhullError:
            hull = pts  # degenerate (flat) set: keep the raw points
    return SublevelSet(t, mask, pts, hull, False)


def sublevel_convex_position(g: GridFunction, t: float) -> bool:
    """True when no node outside {g <= t} lies inside the hull of {g <= t}."""
    mask = (g.values <= t).ravel()
    if not mask.any():
        return True
    nodes = g.grid.nodes()
    outside = nodes[~mask]
    if len(outside) == 0:
        return True
    inside_hull = hull_contains(nodes[mask], outside, _TOL)
    return not bool(inside_hull.any())


def indicator_of_sublevel(w: GridFunction, m: float) -> GridFunction:
    """Indicator (0 / +inf) of the sublevel set {w <= m} on the grid."""
    mask = w.values <= m
    if not mask.any():
        raise EmptyDomainError(f"no grid node satisfies the level {m}")
    return w.with_values(np.where(mask, 0.0, np.inf))


# ---------------------------------------------------------------------------
# validation and identity checks


@dataclass
class CoercivityReport:
    constant: float
    worst_node: tuple
    fails_near_origin: bool
    box_dependent: bool


def validate_coercivity(w: GridFunction) -> CoercivityReport:
    """Largest C >= 0 with w(xi) >= C * |xi| at every grid node.

    +inf nodes satisfy any constant; the origin node (if present) gives no
    constraint.  On a finite box the reported constant is box-dependent for
    densities whose ratio keeps decreasing outward; the flag records when the
    minimizing node sits on the box boundary.
    """
    nodes = w.grid.nodes()
    vals = w.values.ravel()
    norms = np.linalg.norm(nodes, axis=1)
    usable = np.isfinite(vals) & (norms > 0)
    if not usable.any():
        return CoercivityReport(np.inf, (), False, False)
    ratios = vals[usable] / norms[usable]
    cmin = float(ratios.min())
    among = np.flatnonzero(usable)[np.abs(ratios - cmin) <= 1e-12 * (1 + abs(cmin))]
    # among ties prefer the farthest node, so flat densities don't flag the origin
    worst = among[np.argmax(norms[among])]
    hmax = max(w.grid.spacing)
    near_origin = norms[worst] <= 2.0 * hmax + 1e-12
    on_box = False
    for k in range(w.dim):
        c = w.grid.axis_coords(k)
        on_box = on_box or np.isclose(nodes[worst, k], c[0]) or np.isclose(
            nodes[worst, k], c[-1]
        )
    return CoercivityReport(cmin, tuple(nodes[worst]), bool(near_origin), bool(on_box))


def _dilate(mask: np.ndarray) -> np.ndarray:
    return binary_dilation(mask, structure=np.ones((3,) * mask.ndim, dtype=bool))


@dataclass
class IndicatorIdentityReport:
    passes: bool
    n_sym_diff: int
    zero_set_indicator_route: np.ndarray
    zero_set_envelope_route: np.ndarray


def check_indicator_identity(w: GridFunction, m: float) -> IndicatorIdentityReport:
    """Compare the two reductions of a 3D gradient constraint {w <= m}:
    the biconjugate of the inf-projected indicator versus the sublevel set of
    the level-convex envelope of the inf-projection.  Passes when the zero
    sets differ by at most one cell layer."""
    coerc = validate_coercivity(w)
    if not (coerc.constant > 0):
        raise ThinlimError(
            f"coercivity validation failed (C = {coerc.constant}); the sublevel "
            "set may be unbounded and the identity check unreliable"
        )
    ind = indicator_of_sublevel(w, m)
    reduced = biconjugate(project_inf(ind))
    set_a = np.isfinite(reduced.values)

    w0 = project_inf(w)
    lc = level_convex_envelope(w0)
    set_b = lc.values <= m + 1e-12 * (1.0 + abs(m))

    sym = set_a ^ set_b
    ok = (not np.any(set_a & ~_dilate(set_b))) and (not np.any(set_b & ~_dilate(set_a)))
    return IndicatorIdentityReport(bool(ok), int(sym.sum()), set_a, set_b)


@dataclass
class CommutationReport:
    max_abs_dev: float
    lc_of_projection: GridFunction
    projection_of_lc: GridFunction


def check_commutation(w: GridFunction, max_levels: int | None = None) -> CommutationReport:
    """Max deviation between 'level-convexify then project' and 'project then
    level-convexify' on the shared 2D grid."""
    lhs = level_convex_envelope(project_inf(w), max_levels=max_levels)
    rhs = project_inf(level_convex_envelope(w, max_levels=max_levels))
    a, b = lhs.values, rhs.values
    both = np.isfinite(a) & np.isfinite(b)
    dev = float(np.abs(a[both] - b[both]).max()) if both.any() else 0.0
    if np.any(np.isfinite(a) != np.isfinite(b)):
        dev = np.inf
    return CommutationReport(dev, lhs, rhs)


@dataclass
class RegionReport:
    max_dev_interior: float
    max_dev_exterior: float
    max_dev_boundary_layer: float
    n_interior: int
    n_exterior: int


def check_envelope_equality_region(g: GridFunction) -> RegionReport:
    """Deviation |co g - g**| split into nodes at least one cell inside the
    hull of dom g, nodes outside it, and the boundary cell layer."""
    co = convex_envelope(g)
    bi = biconjugate(g)
    nodes, finite, _ = _finite_points(g)
    member = hull_contains(nodes[finite], nodes, _TOL).reshape(g.values.shape)
    interior = binary_erosion(member, structure=np.ones((3,) * g.dim, dtype=bool))
    exterior = ~member
    boundary = member & ~interior

    a, b = co.values, bi.values

    def region_dev(mask):
        if not mask.any():
            return 0.0
        av, bv = a[mask], b[mask]
        both_inf = np.isinf(av) & np.isinf(bv)
        diff = np.zeros(av.shape)
        diff[~both_inf] = np.abs(av[~both_inf] - bv[~both_inf])
        return float(np.max(diff))

    return RegionReport(
        region_dev(interior),
        region_dev(exterior),
        region_dev(boundary),
        int(interior.sum()),
        int(exterior.sum()),
    )


# ---------------------------------------------------------------------------
# reports


@dataclass
class EnvelopeReport:
    input: GridFunction
    output: GridFunction
    kind: str
    max_violation: float


def _violation(inp: GridFunction, out: GridFunction) -> float:
    a, b = inp.values, out.values
    viol = np.where(np.isinf(a), 0.0, b - a)
    viol = np.where(np.isinf(b) & np.isfinite(a), np.inf, viol)
    return float(max(0.0, np.max(viol)))


_ENVELOPE_KINDS = {
    "inf_projection": project_inf,
    "convex": convex_envelope,
    "biconjugate": biconjugate,
    "level_convex": level_convex_envelope,
}


def compute_envelope(g: GridFunction, kind: str) -> EnvelopeReport:
    if kind not in _ENVELOPE_KINDS:
        raise ValueError(f"unknown envelope kind {kind!r}")
    out = _ENVELOPE_KINDS[kind](g)
    if kind == "inf_projection":
        violation = 0.0  # defined on the reduced grid; minimum by construction
    else:
        violation = _violation(g, out)
    return EnvelopeReport(g, out, kind, violation)


def write_envelope_report(report: EnvelopeReport, path) -> None:
    """CSV rows (node index, input, output, violation) over the output grid."""
    out = report.output.values.ravel()
    if report.kind == "inf_projection":
        inp = out
    else:
        inp = report.input.values.ravel()

    def fmt(v):
        return "inf" if np.isinf(v) else repr(float(v))

    lines = ["node,input,output,violation"]
    for i, (a, b) in enumerate(zip(inp, out)):
        v = 0.0 if (np.isinf(a) or b <= a) else b - a
        lines.append(f"{i},{fmt(a)},{fmt(b)},{fmt(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
