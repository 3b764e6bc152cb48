"""Command-line laboratory: experiment configs, thickness sweeps, identity
checks, CSV tables and static SVG plots.

Sweep rows (one per thickness) are independent; with ``--workers N`` they run
on a process pool and are merged back in thickness order, so the emitted CSV
is byte-identical across runs and worker counts.  Wall-clock runtimes are
logged to stderr but written as zeros in the CSV to keep that contract.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .densities import density_from_spec
from .envelopes import (
    biconjugate,
    check_commutation,
    check_envelope_equality_region,
    check_indicator_identity,
    compute_envelope,
    level_convex_envelope,
    project_inf,
    validate_coercivity,
    write_envelope_report,
)
from .errors import FormatError, InfeasibleError, ThinlimError
from .geometry import ConvexPolygon, read_polygon, unit_square
from .grids import Grid, read_grid_function, sample_density, write_grid_function
from .maxmin import maxmin_representation, verify_representation, write_maxmin_form
from .meshing import extrude_mesh, structured_rect_mesh, triangulate_polygon, write_nodal
from .piecewise import read_pa
from .recovery import LaminateSpec, laminate_recovery, vertical_recovery
from .solvers import (
    BoundaryData,
    GridSupDensity2D,
    SolverOptions,
    limit_integral_2d,
    lower_bound_check,
    minimize_integral_3d,
    minimize_sup_2d,
    minimize_sup_3d,
)

__all__ = ["ExperimentConfig", "SweepTable", "run_sweep", "emit_csv", "emit_svg_plot", "main"]


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3


@dataclass
class ExperimentConfig:
    pipeline: str
    density: dict
    epsilons: list
    bc_gradient: list
    bc_offset: float = 0.0
    omega: object = "unit_square"
    n_xy: int = 16
    n3: int = 4
    mesh_pattern: str = "left"
    grid_box: float = 2.0
    grid_n: int = 33
    tol_t: float = 1e-3
    tol_f: float = 1e-7
    iter_cap: int = 100_000
    lc_max_levels: int | None = None
    require_coercive: bool = False
    output_dir: str = "out"

    def validate(self) -> None:
        if self.pipeline not in ("supremal", "integral"):
            raise FormatError("pipeline must be 'supremal' or 'integral'")
        eps = [float(e) for e in self.epsilons]
        if not eps or any(e <= 0 for e in eps):
            raise FormatError("epsilons must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise FormatError("epsilons must be strictly decreasing")
        if self.n_xy < 2 or self.n3 < 2:
            raise FormatError("mesh resolutions must be at least 2")
        if self.grid_n < 2:
            raise FormatError("grid_n must be at least 2")
        if len(self.bc_gradient) != 2:
            raise FormatError("bc_gradient must be a planar vector")
        density_from_spec(self.density)  # fail fast on bad descriptors

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config is not valid JSON: {exc}") from exc
        known = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise FormatError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = ExperimentConfig(**data)
        except TypeError as exc:
            raise FormatError(f"incomplete config: {exc}") from exc
        cfg.validate()
        return cfg

    # --- derived objects ---

    def omega_polygon(self) -> ConvexPolygon:
        if self.omega == "unit_square":
            return unit_square()
        return ConvexPolygon(self.omega)

    def mesh_2d(self):
        if self.omega == "unit_square":
            return structured_rect_mesh(self.n_xy, self.n_xy, pattern=self.mesh_pattern)
        poly = self.omega_polygon()
        return triangulate_polygon(poly, poly.diameter() / self.n_xy)

    def mesh_3d(self):
        return extrude_mesh(self.mesh_2d(), self.n3)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol_t=self.tol_t, tol_f=self.tol_f, iter_cap=self.iter_cap)

    def sample_grid(self, dim: int) -> Grid:
        b, n = self.grid_box, self.grid_n
        return Grid.from_box([-b] * dim, [b] * dim, [n] * dim)


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)
    limit_value: float = np.nan
    lower_bound: object = None

    def consistent(self) -> bool:
        return all(
            abs(r["gap"] - (r["m3d"] - r["mlimit"])) <= 1e-12 * (1 + abs(r["m3d"]))
            for r in self.rows
        )


def _limit_value(cfg: ExperimentConfig):
    density = density_from_spec(cfg.density)
    bc2 = BoundaryData(tuple(cfg.bc_gradient), cfg.bc_offset, which="full")
    mesh2 = cfg.mesh_2d()
    opts = cfg.solver_options()
    if cfg.pipeline == "supremal":
        sampled = sample_density(density, cfg.sample_grid(3))
        coerc = validate_coercivity(sampled)
        if not (coerc.constant > 0):
            # the linear-growth hypothesis fails on the sampled box; the limit
            # prediction may be unreliable, but sweeps stay runnable
            msg = f"coercivity validation failed on the sample box (C = {coerc.constant})"
            if cfg.require_coercive:
                raise FormatError(msg)
            print(f"warning: {msg}", file=sys.stderr)
        w0 = project_inf(sampled)
        lc = level_convex_envelope(w0, max_levels=cfg.lc_max_levels)
        rep = minimize_sup_2d(GridSupDensity2D(lc), mesh2, bc2, opts)
        return rep.value
    sampled = sample_density(density, cfg.sample_grid(3))
    f0ss = biconjugate(project_inf(sampled))
    rep = limit_integral_2d(f0ss, mesh2, bc2, opts)
    return rep.value


def _sweep_row(cfg_json: str, eps: float) -> dict:
    cfg = ExperimentConfig.from_json(cfg_json)
    density = density_from_spec(cfg.density)
    bc = BoundaryData(tuple(cfg.bc_gradient), cfg.bc_offset, which="lateral")
    mesh3 = cfg.mesh_3d()
    opts = cfg.solver_options()
    start = time.perf_counter()
    try:
        if cfg.pipeline == "supremal":
            rep = minimize_sup_3d(density, mesh3, bc, eps, opts)
        else:
            rep = minimize_integral_3d(density, mesh3, bc, eps, opts)
        value, iters, status = rep.value, rep.iterations, rep.status
    except (InfeasibleError, ThinlimError) as exc:
        value, iters, status = np.inf, 0, f"failed: {exc}"
    runtime = time.perf_counter() - start
    return {"epsilon": eps, "m3d": value, "iterations": iters, "status": status,
            "runtime_s": runtime}


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> SweepTable:
    """Reduced limit value plus one 3D solve per thickness; rows run on a
    process pool when workers > 1 and merge in thickness order."""
    cfg.validate()
    limit = _limit_value(cfg)
    cfg_json = cfg.to_json()
    eps_list = [float(e) for e in cfg.epsilons]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, [cfg_json] * len(eps_list), eps_list))
    else:
        rows = [_sweep_row(cfg_json, eps) for eps in eps_list]
    for row in rows:
        row["mlimit"] = limit
        row["gap"] = row["m3d"] - limit
    table = SweepTable(rows, limit)
    if cfg.pipeline == "integral":
        table.lower_bound = lower_bound_check(
            eps_list, [r["m3d"] for r in rows], limit
        )
    return table


def _fmt(x) -> str:
    if np.isinf(x):
        return "inf"
    return repr(float(x))


def emit_csv(table: SweepTable, path) -> None:
    """Fixed column order; runtime_s is zeroed so identical configs yield
    byte-identical files across runs and worker counts (measured runtimes are
    reported on stderr by the sweep command instead)."""
    lines = ["epsilon,m3d,mlimit,gap,runtime_s,iterations,status"]
    for r in table.rows:
        lines.append(
            ",".join(
                [
                    _fmt(r["epsilon"]),
                    _fmt(r["m3d"]),
                    _fmt(r["mlimit"]),
                    _fmt(r["gap"]),
                    "0.000000",
                    str(int(r["iterations"])),
                    str(r["status"]).replace(",", ";"),
                ]
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_svg_plot(table: SweepTable, path) -> None:
    """Log-log plot of the energy gap against thickness, fixed 640x480
    viewport; nonpositive gaps are clamped to the plot floor."""
    width, height = 640, 480
    margin = 60
    eps = np.array([r["epsilon"] for r in table.rows], dtype=float)
    gap = np.array([max(float(r["gap"]), 0.0) for r in table.rows])
    floor = 1e-12
    gap = np.maximum(gap, floor)
    lx, ly = np.log10(eps), np.log10(gap)
    x0, x1 = float(lx.min()), float(lx.max())
    y0, y1 = float(ly.min()), float(ly.max())
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 1, x1 + 1
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 1, y1 + 1

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    pts = sorted(zip(lx, ly))
    path_d = " ".join(
        f"{'M' if i == 0 else 'L'} {sx(a):.3f} {sy(b):.3f}" for i, (a, b) in enumerate(pts)
    )
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<path d="{path_d}" fill="none" stroke="steelblue" stroke-width="1.5"/>',
    ]
    for a, b in pts:
        parts.append(
            f'<circle cx="{sx(a):.3f}" cy="{sy(b):.3f}" r="3.5" fill="steelblue"/>'
        )
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 20}" text-anchor="middle" '
        f'font-size="14">log10 epsilon</text>'
    )
    parts.append(
        f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {height / 2:.0f})">log10 gap</text>'
    )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _out_dir(cfg_dir: str) -> str:
    out = os.environ.get("THINLIM_OUT", cfg_dir)
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_envelope(args) -> int:
    gf = read_grid_function(args.infile)
    report = compute_envelope(gf, args.kind)
    write_grid_function(report.output, args.out)
    if args.report:
        write_envelope_report(report, args.report)
    print(f"envelope kind={args.kind} max_violation={report.max_violation:g}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    cfg = ExperimentConfig.from_json(open(args.config).read())
    row = _sweep_row(cfg.to_json(), float(args.epsilon))
    print(
        f"epsilon={row['epsilon']:g} value={row['m3d']:.12g} "
        f"iterations={row['iterations']} status={row['status']}"
    )
    if row["status"] not in ("ok", "heuristic"):
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_json(open(args.config).read())
    table = run_sweep(cfg, workers=args.workers)
    out = _out_dir(cfg.output_dir)
    csv_path = os.path.join(out, "sweep.csv")
    svg_path = os.path.join(out, "sweep.svg")
    emit_csv(table, csv_path)
    emit_svg_plot(table, svg_path)
    for r in table.rows:
        print(
            f"epsilon={r['epsilon']:g} m3d={r['m3d']:.12g} gap={r['gap']:.3e} "
            f"status={r['status']}",
        )
        print(f"  runtime {r['runtime_s']:.3f}s", file=sys.stderr)
    print(f"limit={table.limit_value:.12g}")
    if table.lower_bound is not None and not table.lower_bound.passes:
        print("lower-bound check FAILED (discretization too coarse?)")
        return EXIT_SOLVER
    bad = [r for r in table.rows if r["status"] not in ("ok", "heuristic")]
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_SOLVER if bad else EXIT_OK


def _cmd_recover(args) -> int:
    if args.kind == "vertical":
        mesh = extrude_mesh(
            structured_rect_mesh(args.n_xy, args.n_xy, pattern="left"), args.n3
        )
        u = vertical_recovery((args.zx, args.zy), args.zeta, args.epsilon, mesh)
    else:
        spec_data = json.load(open(args.config))
        spec = LaminateSpec(
            tuple(spec_data["target"]),
            tuple(spec_data["phase1"]),
            tuple(spec_data["phase2"]),
            spec_data["weight"],
            spec_data.get("zeta1", 0.0),
            spec_data.get("zeta2", 0.0),
            spec_data.get("layers", 8),
        )
        mesh = extrude_mesh(
            structured_rect_mesh(spec_data.get("n_xy", 32), spec_data.get("n_xy", 32)),
            spec_data.get("n3", 2),
        )
        u = laminate_recovery(spec, args.epsilon, mesh)
    write_nodal(u, args.out)
    print(f"wrote {args.out} ({len(u.values)} values)")
    return EXIT_OK


def _cmd_maxmin(args) -> int:
    pa = read_pa(args.pa)
    omega = read_polygon(args.omega, convex=not args.allow_nonconvex)
    form = maxmin_representation(pa, omega, require_convex=not args.allow_nonconvex)
    rep = verify_representation(pa, form, omega, args.verify)
    if args.out:
        write_maxmin_form(form, args.out)
    label = "ok" if rep.passes else "FAILED"
    if not rep.guaranteed:
        label += f" ({rep.note})"
    print(
        f"maxmin verify: {label} max_deviation={rep.max_deviation:.3e} "
        f"points={rep.n_points}"
    )
    if rep.guaranteed and not rep.passes:
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_check(args) -> int:
    from .densities import NormDensity, NormTerm, PlanarVerticalDensity, WellAbsTerm

    n = args.grid_n
    grid3 = Grid.from_box([-2] * 3, [2] * 3, [n] * 3)
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")
        failures += 0 if ok else 1

    w_norm = sample_density(NormDensity(3), grid3)
    w_sep = sample_density(
        PlanarVerticalDensity(NormTerm([0.0, 0.0]), NormTerm([0.0])), grid3
    )
    w_well = sample_density(
        PlanarVerticalDensity(NormTerm([0.0, 0.0], power=2), WellAbsTerm(1.0)), grid3
    )

    for name, w in (("norm", w_norm), ("separable", w_sep), ("vertical-well", w_well)):
        rep = check_commutation(w)
        report(f"commutation {name}", rep.max_abs_dev <= 3 * 4.0 / (n - 1),
               f"dev={rep.max_abs_dev:.3e}")

    for name, w, m in (("norm", w_norm, 1.0), ("separable", w_sep, 1.0)):
        rep = check_indicator_identity(w, m)
        report(f"indicator-identity {name}", rep.passes, f"symdiff={rep.n_sym_diff}")

    grid1 = Grid.from_box([-2.0], [2.0], [4 * n + 1])
    from .densities import IndicatorDensity, PointSet

    two_pts = sample_density(IndicatorDensity(PointSet([[-1.0], [1.0]])), grid1)
    rep = check_envelope_equality_region(two_pts)
    report(
        "envelope-equality two-points",
        rep.max_dev_interior == 0.0 and rep.max_dev_exterior == 0.0,
        f"interior={rep.max_dev_interior:g} exterior={rep.max_dev_exterior:g}",
    )

    proj = project_inf(w_norm)
    nodes = proj.grid.nodes()
    want = np.linalg.norm(nodes, axis=1)
    dev = float(np.max(np.abs(proj.values.ravel() - want)))
    report("inf-projection domain identity", dev <= 1e-12, f"dev={dev:.3e}")

    return EXIT_OK if failures == 0 else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="thinlim",
        description="thin-film limit laboratory: envelopes, solvers, sweeps",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("envelope", help="apply an envelope operation to a grid file")
    p.add_argument("--kind", required=True,
                   choices=["inf_projection", "convex", "biconjugate", "level_convex"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="optional CSV report path")
    p.set_defaults(fn=_cmd_envelope)

    p = sub.add_parser("solve", help="run one 3D solve from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("sweep", help="run a thickness sweep from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("recover", help="build a recovery field")
    p.add_argument("--kind", required=True, choices=["vertical", "laminate"])
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--zx", type=float, default=0.0)
    p.add_argument("--zy", type=float, default=0.0)
    p.add_argument("--zeta", type=float, default=0.0)
    p.add_argument("--n-xy", type=int, default=16)
    p.add_argument("--n3", type=int, default=4)
    p.add_argument("--config", default=None, help="laminate spec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_recover)

    p = sub.add_parser("maxmin", help="build and verify a max-min form")
    p.add_argument("--pa", required=True)
    p.add_argument("--omega", required=True)
    p.add_argument("--verify", type=int, default=10_000)
    p.add_argument("--out", default=None)
    p.add_argument("--allow-nonconvex", action="store_true")
    p.set_defaults(fn=_cmd_maxmin)

    p = sub.add_parser("check", help="run the identity suite on built-in densities")
    p.add_argument("--grid-n", type=int, default=17)
    p.set_defaults(fn=_cmd_check)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FormatError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
