"""Discrete minimization of the rescaled supremal energy, its 2D limit, and
the gradient-constrained integral energies.

Level-convex supremal problems run a bisection on the energy level t; the
feasibility of {u : density(cell gradients) <= t} is decided by parallel
projections onto the per-cell sublevel constraints, pulled back to nodal space
through each cell's affine gradient map and combined in a fixed deterministic
reduction.  Raw (non-level-convex) densities fall back to a deterministic
competitor family and are flagged as heuristic.

Lateral boundary data pins the in-plane affine trace on the wall, with one
free vertical offset per layer: that is the weakest closure under which the
standard vertical-profile competitors (u_z + epsilon * zeta * x3, sawtooth
profiles) remain admissible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import recovery
from .assembly import (
    evaluate_density,
    integral_energy_2d,
    integral_energy_3d,
    sup_energy_2d,
    sup_energy_3d,
)
from .densities import scan_vertical_minima
from .errors import InfeasibleError
from .geometry import ConvexPolygon, convex_hull_2d, project_onto_convex_polygon
from .grids import GridFunction
from .hulls import lower_hull_facets
from .meshing import NodalField, SimplicialMesh, TAG_LATERAL
from .piecewise import AffineFunction

__all__ = [
    "BoundaryData",
    "SolverOptions",
    "SolveReport",
    "minimize_sup_2d",
    "minimize_sup_3d",
    "minimize_integral_3d",
    "limit_integral_2d",
    "lower_bound_check",
    "LowerBoundReport",
    "GridSupDensity2D",
    "PolyhedralConvex2D",
]


@dataclass(frozen=True)
class BoundaryData:
    """Affine trace z . x_planar + offset; 'full' pins every boundary vertex
    (2D problems), 'lateral' pins the wall vertices of a cylinder up to one
    free vertical offset per layer."""

    gradient: tuple
    offset: float = 0.0
    which: str = "full"

    def __post_init__(self):
        object.__setattr__(self, "gradient", tuple(float(g) for g in self.gradient))
        if self.which not in ("full", "lateral"):
            raise ValueError("which must be 'full' or 'lateral'")

    @property
    def trace(self) -> AffineFunction:
        return AffineFunction(self.gradient, self.offset)


@dataclass
class SolverOptions:
    tol_t: float = 1e-3
    tol_f: float = 1e-7
    iter_cap: int = 100_000
    stall_window: int = 300
    stall_ratio: float = 0.999
    relax: float = 1.7  # averaged projections converge for relax in (0, 2)
    descent_iters: int = 2000
    descent_tol: float = 1e-12


@dataclass
class SolveReport:
    minimizer: NodalField
    value: float
    level_bracket: tuple
    feasibility_residual: float
    iterations: int
    method: str
    status: str = "ok"

    def as_row(self, epsilon: float) -> dict:
        t_lo, t_hi = self.level_bracket
        return {
            "epsilon": epsilon,
            "value": self.value,
            "iterations": self.iterations,
            "residual": self.feasibility_residual,
            "t_lo": t_lo,
            "t_hi": t_hi,
            "status": self.status,
        }


class _BCHandler:
    """Imposes boundary data on nodal vectors and projects descent directions
    onto the admissible subspace."""

    def __init__(self, mesh: SimplicialMesh, bc: BoundaryData):
        self.mesh = mesh
        self.bc = bc
        z = np.asarray(bc.gradient)
        self.base = mesh.vertices[:, :2] @ z + bc.offset
        wall = mesh.vertex_tags == TAG_LATERAL
        if mesh.dim == 2 or bc.which == "full":
            self.mode = "fixed"
            self.fixed = wall if mesh.dim == 2 else mesh.vertex_tags != 0
            if mesh.dim == 3 and bc.which == "full":
                raise ValueError("3D problems take lateral boundary data")
        else:
            self.mode = "layers"
            layers = mesh.layer_of_vertex()
            self.layer_walls = [
                np.flatnonzero(wall & (layers == j)) for j in range(mesh.n_layers + 1)
            ]

    def initial(self) -> np.ndarray:
        return self.base.copy()

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.mode == "fixed":
            u[self.fixed] = self.base[self.fixed]
        else:
            for idx in self.layer_walls:
                c = float(np.mean(u[idx] - self.base[idx]))
                u[idx] = self.base[idx] + c
        return u

    def project_direction(self, g: np.ndarray) -> np.ndarray:
        if self.mode == "fixed":
            g[self.fixed] = 0.0
        else:
            for idx in self.layer_walls:
                g[idx] = np.mean(g[idx])
        return g


def _cell_maps(mesh: SimplicialMesh, epsilon: float | None):
    """Per-cell map A from nodal values to constraint-space gradient points,
    plus its min-norm pullback pinv(A) = A^T (A A^T)^{-1}."""
    b, vols = mesh.gradient_operators()
    a = b.copy()
    if epsilon is not None:
        a[:, 2, :] /= epsilon
    aat = np.einsum("mik,mjk->mij", a, a)
    inv = np.linalg.inv(aat)
    pull = np.einsum("mik,mij->mkj", a, inv)  # (m, d+1, d)
    return a, pull, vols


def _scatter_mean(delta_cells: np.ndarray, cells: np.ndarray, n: int) -> np.ndarray:
    num = np.zeros(n)
    den = np.zeros(n)
    np.add.at(num, cells.ravel(), delta_cells.ravel())
    np.add.at(den, cells.ravel(), 1.0)
    return num / np.maximum(den, 1.0)


def _pocs_feasible(density, mesh, a, pull, u0, bch, t, opts: SolverOptions, tol=None):
    """Drive u toward {density(A u per cell) <= t}; returns (u, residual,
    iterations, feasible?).  Infeasibility is declared at the iteration cap or
    on residual stall (geometric decay slower than stall_ratio per window)."""
    u = u0.copy()
    cells = mesh.cells
    window_best = np.inf
    it = 0
    residual = np.inf
    scale = 1.0 + float(np.max(np.abs(u0)))
    tol = opts.tol_f if tol is None else tol
    while it < opts.iter_cap:
        p = np.einsum("mik,mk->mi", a, u[cells])
        q = density.sublevel_project(p, t)
        diff = q - p
        residual = float(np.max(np.linalg.norm(diff, axis=1)))
        if residual <= tol * scale:
            return u, residual, it, True
        du = np.einsum("mkj,mj->mk", pull, diff)
        u = u + opts.relax * _scatter_mean(du, cells, mesh.num_vertices)
        bch.apply(u)
        it += 1
        if it % opts.stall_window == 0:
            if residual > opts.stall_ratio * window_best:
                return u, residual, it, False
            window_best = residual
    return u, residual, it, False


def _assemble_sup(density, mesh, u, epsilon):
    if epsilon is None:
        return sup_energy_2d(density, mesh, u)
    return sup_energy_3d(density, mesh, u, epsilon)


def _bisection_sup(density, mesh, bch, epsilon, opts, competitors):
    a, pull, _ = _cell_maps(mesh, epsilon)
    best_u = None
    best_e = np.inf
    for u in competitors:
        e = _assemble_sup(density, mesh, u, epsilon)
        if e < best_e:
            best_e, best_u = e, u.copy()
    if not np.isfinite(best_e):
        raise InfeasibleError(
            "no competitor satisfies the gradient constraint; the level bracket "
            "collapses at +inf"
        )
    t_lo = float(density.min_value)
    floor = getattr(density, "lower_floor", None)
    if floor is not None:
        # exact discrete lower bound under affine data (mean-gradient Jensen)
        t_lo = max(t_lo, float(floor(bch.bc.gradient)))
    t_hi = best_e
    t_lo = min(t_lo, t_hi)
    total_it = 0
    residual = 0.0
    # bracketing levels only need a yes/no, so they run at a loosened
    # residual; the accepted level is re-polished at the full tolerance below
    tol_mid = max(opts.tol_f, 0.02 * opts.tol_t)
    while t_hi - t_lo > opts.tol_t:
        t = 0.5 * (t_lo + t_hi)
        u, res, it, ok = _pocs_feasible(
            density, mesh, a, pull, best_u, bch, t, opts, tol=tol_mid
        )
        total_it += it
        if ok:
            e = _assemble_sup(density, mesh, u, epsilon)
            if e < best_e:
                best_e, best_u = e, u.copy()
            t_hi = min(t, best_e) if e <= t else t
            residual = res
        else:
            t_lo = t
    u, res, it, ok = _pocs_feasible(density, mesh, a, pull, best_u, bch, t_hi, opts)
    total_it += it
    if ok:
        e = _assemble_sup(density, mesh, u, epsilon)
        if e <= best_e:
            best_e, best_u = e, u.copy()
        residual = res
    value = _assemble_sup(density, mesh, best_u, epsilon)
    t_lo, t_hi = min(t_lo, value), max(t_hi, value)
    return SolveReport(
        NodalField(mesh, best_u),
        value,
        (t_lo, t_hi),
        residual,
        total_it,
        "bisection-projection",
    )


def _vertical_competitors(density, mesh, bch, epsilon):
    """Admissible fields built from vertical profiles: the affine extension,
    linear profiles at each scanned vertical minimum, and layer-aligned
    sawtooth profiles for well pairs (admissible thanks to the per-layer
    offsets of lateral data)."""
    out = [bch.initial()]
    z = np.asarray(bch.bc.gradient)
    x3 = mesh.vertices[:, 2]
    layer_coords = np.unique(np.round(x3, 12))
    minima = scan_vertical_minima(density, z)
    zetas = [m[0] for m in minima[:4]]
    for zeta in zetas:
        out.append(bch.base + epsilon * zeta * x3)
    for i in range(len(zetas)):
        for j in range(i + 1, len(zetas)):
            za, zb = zetas[i], zetas[j]
            if za == 0 and zb == 0:
                continue
            prof = recovery.sawtooth_profile_values(x3, layer_coords, [za, zb])
            out.append(bch.base + epsilon * prof)
    for u in out:
        bch.apply(u)
    return out


def _laminate_competitors(density, mesh, bch, epsilon):
    """In-plane laminate competitors for densities with two planar wells;
    only usable when the boundary gradient is the balanced mean (the laminate
    then matches the affine trace on average and the wall mismatch vanishes
    with the stripe width, so we emit the nodal interpolant and keep only
    fields that remain admissible after the boundary projection)."""
    planar_minima = getattr(density, "planar_minima", None)
    if planar_minima is None:
        return []
    wells = planar_minima()
    if len(wells) != 2:
        return []
    z = np.asarray(bch.bc.gradient)
    w1, w2 = np.asarray(wells[0]), np.asarray(wells[1])
    denom = (w1 - w2) @ (w1 - w2)
    if denom == 0:
        return []
    lam = float((z - w2) @ (w1 - w2) / denom)
    if not (0.0 <= lam <= 1.0):
        return []
    if np.max(np.abs(lam * w1 + (1 - lam) * w2 - z)) > 1e-9:
        return []
    zetas = [0.0]
    vm = getattr(density, "vertical_minima", None)
    if vm is not None:
        zetas = vm()[:1]
    out = []
    for layers in (4, 8, 16):
        try:
            spec = recovery.LaminateSpec(
                tuple(z), tuple(w1), tuple(w2), lam, zetas[0], zetas[0], layers
            )
            u = recovery.laminate_recovery(spec, epsilon, mesh).values
        except ValueError:
            continue
        out.append(bch.apply(u))
    return out


def minimize_sup_2d(density, mesh: SimplicialMesh, bc: BoundaryData, options=None) -> SolveReport:
    """Minimize max over cells of density(grad u) with affine boundary data.

    Level-convex densities with a sublevel projection run the level bisection;
    anything else falls back to the best deterministic competitor and the
    report is flagged heuristic.
    """
    opts = options or SolverOptions()
    bch = _BCHandler(mesh, bc)
    level_convex = getattr(density, "is_level_convex", False)
    has_proj = hasattr(density, "sublevel_project")
    if level_convex and has_proj:
        return _bisection_sup(density, mesh, bch, None, opts, [bch.initial()])
    competitors = [bch.initial()]
    competitors += _distance_competitors(density, mesh, bch)
    best_u, best_e = None, np.inf
    for u in competitors:
        e = sup_energy_2d(density, mesh, u)
        if e < best_e:
            best_e, best_u = e, u
    if not np.isfinite(best_e):
        raise InfeasibleError("no admissible competitor has finite energy")
    return SolveReport(
        NodalField(mesh, best_u),
        best_e,
        (float(getattr(density, "min_value", 0.0)), best_e),
        0.0,
        0,
        "heuristic",
        status="heuristic",
    )


def _boundary_distance_field(mesh: SimplicialMesh) -> np.ndarray:
    """Per-vertex distance to the mesh boundary (edges on exactly one cell)."""
    from collections import Counter

    counts = Counter()
    for cell in mesh.cells:
        for i in range(3):
            counts[tuple(sorted((cell[i], cell[(i + 1) % 3])))] += 1
    bedges = [e for e, c in counts.items() if c == 1]
    v = mesh.vertices
    best = np.full(mesh.num_vertices, np.inf)
    for i, j in bedges:
        a, b = v[i], v[j]
        ab = b - a
        t = np.clip((v - a) @ ab / float(ab @ ab), 0.0, 1.0)
        proj = a + t[:, None] * ab
        best = np.minimum(best, np.linalg.norm(v - proj, axis=1))
    return best


def _distance_competitors(density, mesh, bch):
    """Boundary-distance fields u_bc + r * dist(x, boundary) for radial well
    radii; they carry |grad| = r away from ridges and vanish on the wall."""
    radii = []
    radius = getattr(density, "radius", None)
    if radius:
        radii += [float(radius), -float(radius)]
    if not radii:
        return []
    d = _boundary_distance_field(mesh)
    return [bch.apply(bch.base + r * d) for r in radii]


def minimize_sup_3d(
    density, mesh: SimplicialMesh, bc: BoundaryData, epsilon: float, options=None
) -> SolveReport:
    """Minimize max over cells of density(planar grad, vertical grad / epsilon)
    with lateral boundary data."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    opts = options or SolverOptions()
    bch = _BCHandler(mesh, bc)
    competitors = _vertical_competitors(density, mesh, bch, epsilon)
    level_convex = getattr(density, "is_level_convex", False)
    if level_convex and hasattr(density, "sublevel_project"):
        return _bisection_sup(density, mesh, bch, epsilon, opts, competitors)
    competitors += _laminate_competitors(density, mesh, bch, epsilon)
    best_u, best_e = None, np.inf
    for u in competitors:
        e = sup_energy_3d(density, mesh, u, epsilon)
        if e < best_e:
            best_e, best_u = e, u
    if not np.isfinite(best_e):
        raise InfeasibleError("no admissible competitor has finite energy")
    return SolveReport(
        NodalField(mesh, best_u),
        best_e,
        (float(getattr(density, "min_value", 0.0)), best_e),
        0.0,
        0,
        "heuristic",
        status="heuristic",
    )


# ---------------------------------------------------------------------------
# integral energies


def _restore_feasibility(density, mesh, a, pull, u, bch, opts):
    """Pull every cell gradient into dom(density) by averaged projections."""
    cells = mesh.cells
    for it in range(2000):
        p = np.einsum("mik,mk->mi", a, u[cells])
        q = density.dom_project(p)
        diff = q - p
        residual = float(np.max(np.linalg.norm(diff, axis=1)))
        if residual <= 1e-12 * (1.0 + np.max(np.abs(u))):
            return u, residual, True
        du = np.einsum("mkj,mj->mk", pull, diff)
        u = u + _scatter_mean(du, cells, mesh.num_vertices)
        bch.apply(u)
    return u, residual, residual <= opts.tol_f * (1.0 + np.max(np.abs(u)))


def _projected_descent(density, mesh, bch, epsilon, opts, factor, u0):
    """Backtracking projected subgradient descent for convex integral
    energies; the energy is factor * sum(vol * f(A u))."""
    a, pull, vols = _cell_maps(mesh, epsilon)
    cells = mesh.cells

    def energy(u):
        p = np.einsum("mik,mk->mi", a, u[cells])
        vals = evaluate_density(density, p)
        if np.any(np.isinf(vals)):
            return np.inf
        return factor * float(np.sum(vols * vals))

    u = u0.copy()
    e = energy(u)
    feas_res = 0.0
    if not np.isfinite(e):
        u, feas_res, ok = _restore_feasibility(density, mesh, a, pull, u, bch, opts)
        e = energy(u)
        if not (ok and np.isfinite(e)):
            return u, np.inf, feas_res, 0, "infeasible"
    step = 1.0
    it = 0
    for it in range(1, opts.descent_iters + 1):
        p = np.einsum("mik,mk->mi", a, u[cells])
        sub = density.subgradient(p)  # (m, d)
        g_cells = factor * vols[:, None] * np.einsum("mik,mi->mk", a, sub)
        g = np.zeros(mesh.num_vertices)
        np.add.at(g, cells.ravel(), g_cells.ravel())
        bch.project_direction(g)
        gnorm = float(np.linalg.norm(g))
        if gnorm * max(step, 1e-3) <= opts.descent_tol * (1.0 + abs(e)):
            break
        improved = False
        while step > 1e-14:
            trial = bch.apply(u - step * g)
            if np.isinf(energy(trial)):
                trial, feas_res, ok = _restore_feasibility(
                    density, mesh, a, pull, trial, bch, opts
                )
                if not ok:
                    step *= 0.5
                    continue
            e_new = energy(trial)
            if e_new < e - 1e-14 * (1.0 + abs(e)):
                u, e = trial, e_new
                improved = True
                step *= 1.3
                break
            step *= 0.5
        if not improved:
            break
    return u, e, feas_res, it, "ok"


def minimize_integral_3d(
    density, mesh: SimplicialMesh, bc: BoundaryData, epsilon: float, options=None
) -> SolveReport:
    """Minimize the volume integral of density(planar grad, vertical/epsilon)
    subject to the gradient-domain constraint; infeasible boundary data yields
    a +inf report rather than an exception."""
    opts = options or SolverOptions()
    bch = _BCHandler(mesh, bc)
    # seed with the best vertical profile (the minimizer for affine data)
    z = np.asarray(bc.gradient)
    candidates = [bch.initial()]
    minima = scan_vertical_minima(density, z)
    for zeta, _ in minima[:2]:
        candidates.append(bch.apply(bch.base + epsilon * zeta * mesh.vertices[:, 2]))
    best = None
    for u0 in candidates:
        u, e, res, it, status = _projected_descent(
            density, mesh, bch, epsilon, opts, 1.0, u0
        )
        if best is None or e < best[1]:
            best = (u, e, res, it, status)
    u, e, res, it, status = best
    return SolveReport(
        NodalField(mesh, u),
        e,
        (0.0, e),
        res,
        it,
        "projected-descent",
        status=status,
    )


def limit_integral_2d(
    f0ss: GridFunction, mesh: SimplicialMesh, bc: BoundaryData, options=None
) -> SolveReport:
    """Minimize 2 * integral of the sampled convex density at grad u with full
    affine boundary data; the sampled density is rebuilt as the exact
    polyhedral convex function through its finite samples."""
    opts = options or SolverOptions()
    density = PolyhedralConvex2D(f0ss)
    bch = _BCHandler(mesh, bc)
    u, e, res, it, status = _projected_descent(
        density, mesh, bch, None, opts, 2.0, bch.initial()
    )
    return SolveReport(
        NodalField(mesh, u), e, (0.0, e), res, it, "projected-descent", status=status
    )


@dataclass
class LowerBoundReport:
    passes: bool
    limit_value: float
    slacks: list
    tolerance: float


def lower_bound_check(epsilons, values, limit_value: float, tol_lb: float = 1e-6) -> LowerBoundReport:
    """The reduced limit is a lower bound for every finite-thickness value
    (up to tol_lb); violations flag a too-coarse discretization."""
    slacks = [float(v) - float(limit_value) for v in values]
    passes = all(s >= -tol_lb for s in slacks)
    return LowerBoundReport(bool(passes), float(limit_value), slacks, tol_lb)


# ---------------------------------------------------------------------------
# grid-backed densities for the 2D limit solvers


class GridSupDensity2D:
    """Level-convex sampled density on a 2D grid: evaluation by conservative
    interpolation, sublevel projection onto the hull polygon of the sampled
    sublevel node set (cached per level)."""

    def __init__(self, gf: GridFunction):
        if gf.dim != 2:
            raise ValueError("expected a 2D grid function")
        self.gf = gf
        self.is_level_convex = True
        self.min_value = gf.min_finite()
        self._hulls: dict = {}

    def eval(self, points):
        return self.gf.interpolate(points)

    def lower_floor(self, z):
        v = float(self.gf.interpolate(np.asarray(z, dtype=float)[None, :])[0])
        return v if np.isfinite(v) else self.min_value

    def _hull_for(self, t: float):
        key = round(float(t), 12)
        if key not in self._hulls:
            mask = self.gf.values.ravel() <= t
            pts = self.gf.grid.nodes()[mask]
            verts = convex_hull_2d(pts) if len(pts) else pts
            if len(verts) >= 3:
                self._hulls[key] = ConvexPolygon(verts)
            else:
                self._hulls[key] = verts  # degenerate: points / segment
        return self._hulls[key]

    def sublevel_project(self, points, t):
        hull = self._hull_for(t)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if isinstance(hull, ConvexPolygon):
            return project_onto_convex_polygon(hull, pts)
        if len(hull) == 0:
            return pts.copy()
        if len(hull) == 1:
            return np.tile(hull[0], (len(pts), 1))
        a, b = hull[0], hull[1]
        ab = b - a
        s = np.clip((pts - a) @ ab / float(ab @ ab), 0.0, 1.0)
        return a + s[:, None] * ab


class PolyhedralConvex2D:
    """Exact polyhedral convex function through the finite samples of a convex
    lsc grid function: evaluation and subgradients from the lower-hull facets,
    domain projection onto the hull polygon of the sampled domain."""

    def __init__(self, gf: GridFunction):
        if gf.dim != 2:
            raise ValueError("expected a 2D grid function")
        nodes = gf.grid.nodes()
        finite = gf.finite_mask().ravel()
        pts, vals = nodes[finite], gf.values.ravel()[finite]
        verts = convex_hull_2d(pts)
        if len(verts) < 3:
            raise ValueError("sampled domain is degenerate (needs interior)")
        self.dom = ConvexPolygon(verts)
        spread = float(vals.max() - vals.min())
        if spread <= 1e-12 * (1.0 + abs(float(vals.max()))):
            self.grads = np.zeros((1, 2))
            self.offsets = np.array([float(vals.min())])
        else:
            coef = np.linalg.lstsq(
                np.hstack([pts, np.ones((len(pts), 1))]), vals, rcond=None
            )[0]
            resid = np.abs(np.hstack([pts, np.ones((len(pts), 1))]) @ coef - vals).max()
            if resid <= 1e-10 * (1.0 + spread):
                self.grads = coef[None, :2]
                self.offsets = np.array([coef[2]])
            else:
                self.grads, self.offsets = lower_hull_facets(pts, vals)
        self.is_convex = True
        self.min_value = float(vals.min())

    def eval(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.max(pts @ self.grads.T + self.offsets, axis=1)
        inside = self.dom.contains(pts)
        return np.where(inside, vals, np.inf)

    def subgradient(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        active = np.argmax(pts @ self.grads.T + self.offsets, axis=1)
        return self.grads[active]

    def dom_project(self, points):
        return project_onto_convex_polygon(self.dom, np.atleast_2d(points))
