"""Recovery constructions: vertical profiles realizing inf-projections,
in-plane laminates realizing convexified energies, and mollification with the
energy non-increase check.

Mollification is a lattice-translate stencil on structured meshes: the output
value is a convex combination of values at integer lattice shifts, so the
discrete energy inequality follows cell by cell from convexity (each shifted
interpolant is a cell-wise copy of the original), not just in the limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import evaluate_density
from .densities import convexity_defect
from .errors import EmptyDomainError
from .meshing import NodalField, SimplicialMesh, structured_rect_mesh

__all__ = [
    "LaminateSpec",
    "vertical_recovery",
    "laminate_recovery",
    "laminate_cell_phases",
    "sawtooth_profile_values",
    "mollify",
    "mollify_energy_check",
    "MollifyReport",
]


@dataclass(frozen=True)
class LaminateSpec:
    """Two-phase (rank-one) laminate hitting ``target`` as the weighted mean
    of the phase gradients."""

    target: tuple
    phase1: tuple
    phase2: tuple
    weight: float
    zeta1: float = 0.0
    zeta2: float = 0.0
    layers: int = 8

    def __post_init__(self):
        z = np.asarray(self.target, dtype=float)
        z1 = np.asarray(self.phase1, dtype=float)
        z2 = np.asarray(self.phase2, dtype=float)
        lam = float(self.weight)
        if not (0.0 <= lam <= 1.0):
            raise ValueError("weight must lie in [0, 1]")
        if np.max(np.abs(lam * z1 + (1 - lam) * z2 - z)) > 1e-12:
            raise ValueError("weight * phase1 + (1 - weight) * phase2 != target")
        if self.layers < 1:
            raise ValueError("need at least one laminate layer")

    def mean_zeta(self) -> float:
        return self.weight * self.zeta1 + (1 - self.weight) * self.zeta2


def vertical_recovery(z, zeta: float, epsilon: float, mesh: SimplicialMesh) -> NodalField:
    """u(x) = z . x_planar + epsilon * zeta * x3; every cell carries the exact
    rescaled gradient (z, zeta), so the rescaled energy is the density at that
    single point, independent of the mesh and of epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    z = np.asarray(z, dtype=float)
    v = mesh.vertices
    vals = v[:, :2] @ z + epsilon * zeta * v[:, 2]
    return NodalField(mesh, vals)


def _laminate_normal_and_profile(spec: LaminateSpec, epsilon: float):
    z1 = np.asarray(spec.phase1, dtype=float)
    z2 = np.asarray(spec.phase2, dtype=float)
    normal = np.array([*(z1 - z2), epsilon * (spec.zeta1 - spec.zeta2)])
    if np.linalg.norm(normal) == 0:
        raise ValueError("degenerate laminate: equal phases")
    return normal


def _profile(srel: np.ndarray, period: float, lam: float) -> np.ndarray:
    """Continuous periodic profile with slope (1-lam) on the lam-fraction of
    each period and slope -lam on the rest; zero mean drift."""
    r = np.mod(srel, period)
    up = (1.0 - lam) * r
    down = (1.0 - lam) * lam * period - lam * (r - lam * period)
    return np.where(r < lam * period, up, down)


def laminate_recovery(spec: LaminateSpec, epsilon: float, mesh: SimplicialMesh) -> NodalField:
    """Nodal interpolant of the exact two-phase laminate: stripes orthogonal to
    the gradient jump carry the phase gradients (z_i, epsilon * zeta_i); cells
    crossed by a stripe interface mix the two (one transition cell layer per
    interface when interfaces are not mesh-aligned)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    normal = _laminate_normal_and_profile(spec, epsilon)
    v = mesh.vertices
    s = v @ normal
    smin, smax = float(s.min()), float(s.max())
    period = (smax - smin) / spec.layers
    if period <= 0:
        raise ValueError("mesh has no extent along the laminate direction")
    # one period (a stripe pair) must span at least ~2 cells measured along
    # the laminate normal
    cell_extent = float(np.median(np.ptp(s[mesh.cells], axis=1)))
    lam = float(spec.weight)
    if 0.0 < lam < 1.0 and period < 2.0 * cell_extent:
        raise ValueError(
            "laminate layers too thin for this mesh (a stripe period needs "
            ">= 2 cells)"
        )
    zbar = np.asarray(spec.target, dtype=float)
    base = v[:, :2] @ zbar + epsilon * spec.mean_zeta() * v[:, 2]
    vals = base + _profile(s - smin, period, lam)
    return NodalField(mesh, vals)


def laminate_cell_phases(spec: LaminateSpec, epsilon: float, mesh: SimplicialMesh) -> np.ndarray:
    """Per-cell label: 1 or 2 when the whole cell sits inside one stripe,
    0 for transition cells crossed by an interface."""
    normal = _laminate_normal_and_profile(spec, epsilon)
    s = mesh.vertices @ normal
    smin = float(s.min())
    period = (float(s.max()) - smin) / spec.layers
    lam = float(spec.weight)
    r = np.mod(s[mesh.cells] - smin, period)
    eps_s = 1e-12 * max(1.0, abs(period))
    in1 = r <= lam * period + eps_s
    in2 = r >= lam * period - eps_s
    same_period = np.ptp(s[mesh.cells], axis=1) <= period + eps_s
    crossings = np.floor((s[mesh.cells] - smin) / period + 1e-12)
    same_stripe1 = np.all(in1, axis=1) & (np.ptp(crossings, axis=1) == 0)
    same_stripe2 = np.all(in2, axis=1) & (
        np.ptp(np.floor((s[mesh.cells] - smin - lam * period) / period + 1e-12), axis=1)
        == 0
    )
    out = np.zeros(mesh.num_cells, dtype=int)
    out[same_period & same_stripe1] = 1
    out[same_period & same_stripe2 & (out == 0)] = 2
    return out


def sawtooth_profile_values(x3: np.ndarray, layer_coords: np.ndarray, slopes) -> np.ndarray:
    """Piecewise-linear profile over the layer coordinates with the given
    per-layer slope pattern (cycled); kinks sit exactly on layer interfaces."""
    slopes = np.asarray(slopes, dtype=float)
    levels = np.concatenate(
        [[0.0], np.cumsum(np.diff(layer_coords) * np.resize(slopes, len(layer_coords) - 1))]
    )
    idx = np.clip(np.searchsorted(layer_coords, x3, side="right") - 1, 0, len(layer_coords) - 2)
    slope = np.resize(slopes, len(layer_coords) - 1)[idx]
    return levels[idx] + slope * (x3 - layer_coords[idx])


# ---------------------------------------------------------------------------
# mollification


def _lattice_stencil(hx: float, hy: float, eta: float):
    mx, my = int(np.floor(eta / hx + 1e-12)), int(np.floor(eta / hy + 1e-12))
    offs = []
    wts = []
    for di in range(-mx, mx + 1):
        for dj in range(-my, my + 1):
            r2 = (di * hx) ** 2 + (dj * hy) ** 2
            if r2 <= eta * eta * (1 + 1e-12):
                w = (1.0 - r2 / (eta * eta)) ** 2
                if w > 0:
                    offs.append((di, dj))
                    wts.append(w)
    offs = np.array(offs, dtype=int)
    wts = np.array(wts)
    return offs, wts / wts.sum(), mx, my


def mollify(u: NodalField, eta: float) -> NodalField:
    """Discrete mollification of a field on a structured mesh by a normalized
    compact bump of radius eta; the output lives on the mesh of the eroded
    rectangle (erosion snapped outward to whole cells)."""
    mesh = u.mesh
    if mesh.lattice is None or mesh.dim != 2:
        raise ValueError("mollify needs a structured 2D mesh")
    lat = mesh.lattice
    hx, hy = lat.h
    if eta < 2 * min(hx, hy) - 1e-12:
        raise ValueError("mollification radius must cover at least 2 cells")
    offs, wts, mx, my = _lattice_stencil(hx, hy, eta)
    # snap the erosion outward to whole cells so shifted cells stay inside
    ex = max(mx, int(np.ceil(eta / hx - 1e-9)))
    ey = max(my, int(np.ceil(eta / hy - 1e-9)))
    nx_new, ny_new = lat.nx - 2 * ex, lat.ny - 2 * ey
    if nx_new < 1 or ny_new < 1:
        raise EmptyDomainError("erosion by eta empties the domain")
    out_mesh = structured_rect_mesh(
        nx_new,
        ny_new,
        origin=(lat.origin[0] + ex * hx, lat.origin[1] + ey * hy),
        size=(nx_new * hx, ny_new * hy),
        pattern=lat.pattern,
    )
    out_vals = np.zeros(out_mesh.num_vertices)
    olat = out_mesh.lattice
    for (di, dj), w in zip(offs, wts):
        src = lat.node_of[ex + di : ex + di + nx_new + 1, ey + dj : ey + dj + ny_new + 1]
        out_vals[olat.node_of.ravel()] += w * u.values[src.ravel()]
        if lat.pattern == "crossed":
            csrc = lat.center_of[ex + di : ex + di + nx_new, ey + dj : ey + dj + ny_new]
            out_vals[olat.center_of.ravel()] += w * u.values[csrc.ravel()]
    return NodalField(out_mesh, out_vals)


def mollification_stencil(u_mesh: SimplicialMesh, eta: float):
    """Offsets and weights of the mollification kernel (for partition checks)."""
    lat = u_mesh.lattice
    offs, wts, _, _ = _lattice_stencil(lat.h[0], lat.h[1], eta)
    return offs, wts


@dataclass
class MollifyReport:
    energy_before: float
    energy_after: float
    passes: bool
    convexity_defect: float


def mollify_energy_check(density, u: NodalField, eta: float, tol: float = 1e-9) -> MollifyReport:
    """Assert the energy monotonicity of mollification for a convex density:
    the integral of g at the mollified gradients over the eroded domain does
    not exceed the integral over the original domain."""
    defect = 0.0
    if not getattr(density, "is_convex", False):
        defect = convexity_defect(density, box=4.0, n=4000, seed=0)
        if defect > 1e-10:
            raise ValueError(f"density failed the convexity check (defect {defect})")
    before = _plain_integral(density, u)
    u_eta = mollify(u, eta)
    after = _plain_integral(density, u_eta)
    passes = after <= before * (1 + tol) + 1e-15
    return MollifyReport(before, after, bool(passes), defect)


def _plain_integral(density, u: NodalField) -> float:
    grads = u.mesh.cell_gradients(u.values)
    vals = evaluate_density(density, grads)
    if np.any(np.isinf(vals)):
        return np.inf
    return float(np.sum(u.mesh.cell_volumes() * vals))
