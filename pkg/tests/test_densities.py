import numpy as np
import pytest

from thinlim.densities import (
    Ball,
    Box,
    Cylinder,
    DoubleWellRadial,
    ExprDensity,
    GaussianBumps,
    IndicatorDensity,
    NormDensity,
    NormTerm,
    PlanarVerticalDensity,
    TwoWellPlanarDensity,
    WellAbsTerm,
    convexity_defect,
    density_from_spec,
    level_convexity_defect,
    scan_vertical_minima,
)
from thinlim.errors import FormatError


def test_norm_density_eval_and_flags():
    f = NormDensity(3, center=[1, 0, 0], scale=2.0, power=1, offset=0.5)
    v = f.eval([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert np.allclose(v, [0.5, 2.5])
    assert f.is_convex and f.is_level_convex
    assert convexity_defect(f) == 0.0


def test_norm_sublevel_projection_exact():
    f = NormDensity(2, power=2)
    p = np.array([[3.0, 4.0], [0.1, 0.0]])
    q = f.sublevel_project(p, 4.0)  # ball of radius 2
    assert np.allclose(np.linalg.norm(q[0]), 2.0)
    assert np.allclose(q[1], p[1])
    # projection is the closest point: direction preserved
    assert np.allclose(q[0] / np.linalg.norm(q[0]), p[0] / 5.0)


def test_separable_density_projection_kkt():
    f = PlanarVerticalDensity(NormTerm([0.0, 0.0]), NormTerm([0.0]))
    # f(z, zeta) = |z| + |zeta|; project a far point onto {f <= 1}
    p = np.array([[2.0, 0.0, 2.0], [0.2, 0.0, 0.3], [0.0, 3.0, 0.0]])
    q = f.sublevel_project(p, 1.0)
    vals = f.eval(q)
    assert np.all(vals <= 1.0 + 1e-8)
    assert np.allclose(q[1], p[1])  # already feasible
    assert np.allclose(q[2], [0.0, 1.0, 0.0], atol=1e-8)
    # optimality for the first point: compare against a dense scan
    best = None
    for r in np.linspace(0, 1, 201):
        z = np.array([r, 0.0])
        zeta = 1.0 - r
        cand = np.linalg.norm([2.0 - r, 0.0, 2.0 - zeta])
        if best is None or cand < best:
            best = cand
    got = np.linalg.norm(p[0] - q[0])
    assert got <= best + 1e-6


def test_quadratic_separable_projection():
    f = PlanarVerticalDensity(NormTerm([0.0, 0.0], power=2), NormTerm([0.0], power=2))
    p = np.array([[2.0, 2.0, 2.0]])
    q = f.sublevel_project(p, 1.0)
    assert abs(f.eval(q)[0] - 1.0) < 1e-8
    # KKT for the euclidean ball: projection is radial
    assert np.allclose(q[0] / np.linalg.norm(q[0]), p[0] / np.linalg.norm(p[0]))


def test_well_term_minima():
    f = PlanarVerticalDensity(NormTerm([1.0, 0.0]), WellAbsTerm(1.0))
    assert not f.is_convex
    assert sorted(f.vertical_minima()) == [-1.0, 1.0]
    v = f.eval([[1.0, 0.0, 1.0], [1.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    assert np.allclose(v, [0.0, 0.0, 1.0])


def test_two_well_planar():
    f = TwoWellPlanarDensity((1, 0), (-1, 0))
    v = f.eval([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(v, [0.0, 1.0, 2.0])
    assert level_convexity_defect(f) > 0.0  # genuinely not level convex


def test_indicator_cylinder_projection():
    f = IndicatorDensity(Cylinder(radius=1.0), NormDensity(3, power=2))
    p = np.array([[2.0, 0.0, 3.0]])
    q = f.dom_project(p)
    assert np.allclose(q, [[1.0, 0.0, 1.0]])
    assert np.isinf(f.eval(p)[0])
    assert np.isfinite(f.eval(q)[0])


def test_indicator_box_and_ball():
    b = IndicatorDensity(Box([-1, -1], [1, 1]))
    assert np.isinf(b.eval([[2.0, 0.0]])[0])
    assert b.eval([[0.5, 0.5]])[0] == 0.0
    ball = IndicatorDensity(Ball([0, 0], 1.0))
    assert ball.argmin() @ ball.argmin() <= 1.0


def test_expr_density():
    f = ExprDensity("abs(x0)**2 + (x1**2 - 1)**2", 2)
    v = f.eval([[2.0, 1.0], [0.0, 0.0]])
    assert np.allclose(v, [4.0, 1.0])
    with pytest.raises(FormatError):
        ExprDensity("nope(x0)", 1)
    with pytest.raises(FormatError):
        ExprDensity("x0 +* 1", 1)


def test_gaussian_bumps_deterministic_and_coercive():
    f = GaussianBumps(3, seed=9)
    g = GaussianBumps(3, seed=9)
    pts = np.random.default_rng(1).uniform(-2, 2, (50, 3))
    assert np.array_equal(f.eval(pts), g.eval(pts))
    assert np.all(f.eval(pts) >= 0.5 * np.linalg.norm(pts, axis=1) - 1e-12)


def test_density_from_spec_roundtrip_families():
    specs = [
        {"kind": "norm", "dim": 3, "power": 2},
        {
            "kind": "planar_vertical",
            "planar": {"kind": "norm", "center": [1.0, 0.0]},
            "vertical": {"kind": "well_abs", "radius": 1.0},
        },
        {"kind": "two_well_planar", "wells": [[1, 0], [-1, 0]]},
        {"kind": "double_well_radial", "dim": 2},
        {"kind": "indicator", "region": {"kind": "cylinder", "radius": 1.0},
         "base": {"kind": "norm", "dim": 3, "power": 2}},
        {"kind": "expr", "expr": "r", "dim": 2},
        {"kind": "gaussian_bumps", "dim": 3, "seed": 4},
    ]
    for spec in specs:
        f = density_from_spec(spec)
        pts = np.zeros((2, f.dim)) + 0.25
        vals = f.eval(pts)
        assert vals.shape == (2,)
    with pytest.raises(FormatError):
        density_from_spec({"kind": "mystery"})
    with pytest.raises(FormatError):
        density_from_spec("norm")


def test_scan_vertical_minima():
    f = PlanarVerticalDensity(NormTerm([1.0, 0.0]), WellAbsTerm(1.0))
    minima = scan_vertical_minima(f, [1.0, 0.0])
    zs = sorted(z for z, _ in minima)
    assert len(zs) == 2
    assert abs(zs[0] + 1.0) < 1e-2 and abs(zs[1] - 1.0) < 1e-2


def test_convexity_defect_detects_double_well():
    f = DoubleWellRadial(2)
    assert convexity_defect(f) > 0.1
    assert level_convexity_defect(NormDensity(2)) == 0.0
