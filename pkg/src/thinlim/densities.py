"""Analytic gradient densities: the built-in families, their descriptors, and
the projections solvers need (sublevel sets, effective domains, subgradients).

Projections onto sublevel sets of the convex built-ins are exact: separable
densities are projected through their proximal maps with a scalar dual
bisection (the KKT multiplier of the constraint is monotone).
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .geometry import ConvexPolygon, project_onto_convex_polygon

__all__ = [
    "Density",
    "NormDensity",
    "PlanarVerticalDensity",
    "NormTerm",
    "WellAbsTerm",
    "TwoWellTerm",
    "TwoWellPlanarDensity",
    "DoubleWellRadial",
    "IndicatorDensity",
    "Ball",
    "Box",
    "Cylinder",
    "PointSet",
    "ExprDensity",
    "GaussianBumps",
    "density_from_spec",
    "convexity_defect",
    "level_convexity_defect",
    "scan_vertical_minima",
]


class Density:
    """Base class: a Borel density on R^dim with values in [0, +inf]."""

    dim: int
    is_convex: bool = False
    is_level_convex: bool = False

    def eval(self, points) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points):
        return self.eval(points)

    @property
    def min_value(self) -> float:
        return 0.0

    def argmin(self) -> np.ndarray:
        raise NotImplementedError

    def sublevel_project(self, points, t: float) -> np.ndarray:
        """Euclidean projection onto {f <= t}."""
        raise NotImplementedError(f"{type(self).__name__} has no sublevel projection")

    def dom_project(self, points) -> np.ndarray:
        """Projection onto dom f (identity for finite densities)."""
        return np.atleast_2d(np.asarray(points, dtype=float)).copy()

    def subgradient(self, points) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no subgradient")

    def lower_floor(self, z) -> float:
        """Exact lower bound for the discrete sup energy under affine data
        with boundary gradient z (level-convex Jensen on the mean gradient);
        densities without one return the global minimum."""
        return self.min_value


def _pts(points, dim):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[1] != dim:
        raise ValueError(f"expected points in R^{dim}, got shape {p.shape}")
    return p


class NormDensity(Density):
    """scale * |xi - center|^power + offset (Euclidean norm, integer power >= 1)."""

    def __init__(self, dim, center=None, scale=1.0, power=1, offset=0.0):
        self.dim = int(dim)
        self.center = np.zeros(self.dim) if center is None else np.asarray(
            center, dtype=float
        )
        self.scale = float(scale)
        self.power = int(power)
        self.offset = float(offset)
        if self.power < 1:
            raise ValueError("power must be a positive integer")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        self.is_convex = True
        self.is_level_convex = True

    def eval(self, points):
        p = _pts(points, self.dim)
        r = np.linalg.norm(p - self.center, axis=1)
        return self.scale * r ** self.power + self.offset

    @property
    def min_value(self):
        return self.offset

    def argmin(self):
        return self.center.copy()

    def lower_floor(self, z):
        z = np.asarray(z, dtype=float)
        if len(z) == self.dim:
            return float(self.eval(z[None, :])[0])
        # planar data for a 3D density: the vertical slot minimizes at center
        r = np.linalg.norm(z - self.center[: len(z)])
        return self.scale * r ** self.power + self.offset

    def sublevel_project(self, points, t):
        p = _pts(points, self.dim)
        budget = (t - self.offset) / self.scale
        radius = 0.0 if budget <= 0 else budget ** (1.0 / self.power)
        d = p - self.center
        r = np.linalg.norm(d, axis=1)
        shrink = np.ones_like(r)
        outside = r > radius
        shrink[outside] = np.where(r[outside] > 0, radius / r[outside], 0.0)
        return self.center + d * shrink[:, None]

    def subgradient(self, points):
        p = _pts(points, self.dim)
        d = p - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        if self.power == 2:
            return 2.0 * self.scale * d
        safe = np.where(r > 0, r, 1.0)
        # p * scale * r^(p-2) * d, with the 0 subgradient chosen at the center
        return self.power * self.scale * np.where(r > 0, safe ** (self.power - 2) * d, 0.0)


# --- separable planar + vertical densities ---------------------------------


class NormTerm:
    """scale * |x - center|^power on R^k (k = 1 for vertical terms)."""

    def __init__(self, center, scale=1.0, power=1):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.scale = float(scale)
        self.power = int(power)
        if self.power not in (1, 2):
            raise ValueError("power must be 1 or 2")
        self.is_convex = True
        self.min_value = 0.0

    def minima(self):
        return [self.center.copy()]

    def eval(self, x):
        r = np.linalg.norm(np.atleast_2d(x) - self.center, axis=1)
        return self.scale * r ** self.power

    def prox(self, x, mu):
        """argmin_y 0.5|y-x|^2 + mu * term(y)."""
        x = np.atleast_2d(x)
        d = x - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        if self.power == 2:
            return self.center + d / (1.0 + 2.0 * mu * self.scale)
        shrink = np.maximum(0.0, 1.0 - mu * self.scale / np.where(r > 0, r, 1.0))
        return self.center + d * np.where(r > 0, shrink, 0.0)

    def subgradient(self, x):
        x = np.atleast_2d(x)
        d = x - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        if self.power == 2:
            return 2.0 * self.scale * d
        return self.scale * np.where(r > 0, d / np.where(r > 0, r, 1.0), 0.0)


class WellAbsTerm:
    """scale * |x^2 - radius^2|^power on R (two wells at +-radius); not convex."""

    def __init__(self, radius=1.0, scale=1.0, power=1):
        self.radius = float(radius)
        self.scale = float(scale)
        self.power = int(power)
        self.is_convex = False
        self.min_value = 0.0

    def minima(self):
        return [np.array([-self.radius]), np.array([self.radius])]

    def eval(self, x):
        x = np.atleast_2d(x)[:, 0]
        return self.scale * np.abs(x ** 2 - self.radius ** 2) ** self.power


class TwoWellTerm:
    """scale * dist(x, {w1, w2})^power; the planar double well."""

    def __init__(self, w1, w2, scale=1.0, power=2):
        self.w1 = np.asarray(w1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.scale = float(scale)
        self.power = int(power)
        self.is_convex = False
        self.min_value = 0.0

    def minima(self):
        return [self.w1.copy(), self.w2.copy()]

    def eval(self, x):
        x = np.atleast_2d(x)
        d1 = np.linalg.norm(x - self.w1, axis=1)
        d2 = np.linalg.norm(x - self.w2, axis=1)
        return self.scale * np.minimum(d1, d2) ** self.power


class PlanarVerticalDensity(Density):
    """f(z, zeta) = planar(z) + vertical(zeta) on R^3."""

    def __init__(self, planar, vertical):
        self.dim = 3
        self.planar = planar
        self.vertical = vertical
        self.is_convex = planar.is_convex and vertical.is_convex
        # a sum of convex terms is convex, hence level convex; nothing more is claimed
        self.is_level_convex = self.is_convex

    def eval(self, points):
        p = _pts(points, 3)
        return self.planar.eval(p[:, :2]) + self.vertical.eval(p[:, 2:3])

    @property
    def min_value(self):
        return self.planar.min_value + self.vertical.min_value

    def argmin(self):
        return np.concatenate([self.planar.minima()[0], self.vertical.minima()[0]])

    def planar_minima(self):
        return self.planar.minima()

    def vertical_minima(self):
        return [float(m[0]) for m in self.vertical.minima()]

    def lower_floor(self, z):
        # planar terms are convex, so max over cells >= planar(mean gradient),
        # and the vertical term is bounded below by its minimum
        return float(self.planar.eval(np.asarray(z, dtype=float)[None, :])[0]
                     + self.vertical.min_value)

    def sublevel_project(self, points, t):
        if not self.is_convex:
            raise NotImplementedError("sublevel projection needs a convex density")
        p = _pts(points, 3)
        out = p.copy()
        if t < self.min_value:
            return np.tile(self.argmin(), (len(p), 1))
        vals = self.eval(p)
        todo = vals > t
        if not todo.any():
            return out
        z, y = p[todo, :2], p[todo, 2:3]

        def value(mu):
            zz = self.planar.prox(z, mu[:, None])
            yy = self.vertical.prox(y, mu[:, None])
            return self.planar.eval(zz) + self.vertical.eval(yy), zz, yy

        # KKT: the projection is the joint prox at the multiplier that pins
        # the constraint to t; the prox value is monotone in mu, so bracket
        # then bisect per point.
        m = int(todo.sum())
        mu_lo = np.zeros(m)
        mu_hi = np.full(m, 1.0)
        for _ in range(200):
            v, _, _ = value(mu_hi)
            need = v > t
            if not need.any():
                break
            mu_lo = np.where(need, mu_hi, mu_lo)
            mu_hi = np.where(need, mu_hi * 2.0, mu_hi)
        for _ in range(100):
            mid = 0.5 * (mu_lo + mu_hi)
            v, _, _ = value(mid)
            high = v > t
            mu_lo = np.where(high, mid, mu_lo)
            mu_hi = np.where(high, mu_hi, mid)
        _, zz, yy = value(mu_hi)
        out[todo, :2] = zz
        out[todo, 2:3] = yy
        return out

    def subgradient(self, points):
        p = _pts(points, 3)
        gz = self.planar.subgradient(p[:, :2])
        gy = self.vertical.subgradient(p[:, 2:3])
        return np.hstack([gz, gy])


class TwoWellPlanarDensity(Density):
    """dist^2(z, {w1, w2}) + vertical_scale * zeta^2; the in-plane double well."""

    def __init__(self, w1=(1.0, 0.0), w2=(-1.0, 0.0), vertical_scale=1.0):
        self.dim = 3
        self.planar = TwoWellTerm(w1, w2, power=2)
        self.vertical_scale = float(vertical_scale)

    def eval(self, points):
        p = _pts(points, 3)
        return self.planar.eval(p[:, :2]) + self.vertical_scale * p[:, 2] ** 2

    def argmin(self):
        return np.array([*self.planar.w1, 0.0])

    def planar_minima(self):
        return self.planar.minima()

    def vertical_minima(self):
        return [0.0]


class DoubleWellRadial(Density):
    """scale * (|x|^2 - radius^2)^2; wells on the sphere |x| = radius."""

    def __init__(self, dim, radius=1.0, scale=1.0):
        self.dim = int(dim)
        self.radius = float(radius)
        self.scale = float(scale)

    def eval(self, points):
        p = _pts(points, self.dim)
        r2 = (p ** 2).sum(axis=1)
        return self.scale * (r2 - self.radius ** 2) ** 2

    def argmin(self):
        out = np.zeros(self.dim)
        out[0] = self.radius
        return out


# --- indicator-constrained densities ----------------------------------------


class Ball:
    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.is_convex = True

    @property
    def dim(self):
        return len(self.center)

    def contains(self, p, tol=1e-12):
        return np.linalg.norm(p - self.center, axis=1) <= self.radius + tol

    def project(self, p):
        d = p - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        shrink = np.minimum(1.0, self.radius / np.where(r > 0, r, 1.0))
        return self.center + d * np.where(r > 0, shrink, 0.0)


class Box:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.is_convex = True

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, p, tol=1e-12):
        return np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)

    def project(self, p):
        return np.clip(p, self.lo, self.hi)


class Cylinder:
    """{(z, zeta): |z - center| <= radius, z_lo <= zeta <= z_hi} in R^3."""

    def __init__(self, radius=1.0, z_lo=-1.0, z_hi=1.0, center=(0.0, 0.0)):
        self.disk = Ball(center, radius)
        self.z_lo = float(z_lo)
        self.z_hi = float(z_hi)
        self.is_convex = True

    @property
    def dim(self):
        return 3

    def contains(self, p, tol=1e-12):
        ok_z = self.disk.contains(p[:, :2], tol)
        ok_v = (p[:, 2] >= self.z_lo - tol) & (p[:, 2] <= self.z_hi + tol)
        return ok_z & ok_v

    def project(self, p):
        out = p.copy()
        out[:, :2] = self.disk.project(p[:, :2])
        out[:, 2] = np.clip(p[:, 2], self.z_lo, self.z_hi)
        return out


class PointSet:
    """Finite set of points; not convex for two or more points."""

    def __init__(self, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.is_convex = len(self.points) <= 1

    @property
    def dim(self):
        return self.points.shape[1]

    def contains(self, p, tol=1e-9):
        d = np.linalg.norm(p[:, None, :] - self.points[None, :, :], axis=2)
        return d.min(axis=1) <= tol

    def project(self, p):
        d = np.linalg.norm(p[:, None, :] - self.points[None, :, :], axis=2)
        return self.points[d.argmin(axis=1)]


class PolygonRegion:
    def __init__(self, polygon: ConvexPolygon):
        self.polygon = polygon
        self.is_convex = True

    @property
    def dim(self):
        return 2

    def contains(self, p, tol=1e-9):
        return self.polygon.contains(p, tol)

    def project(self, p):
        return project_onto_convex_polygon(self.polygon, p)


class IndicatorDensity(Density):
    """base(xi) on the region, +inf off it (base defaults to 0)."""

    def __init__(self, region, base: Density | None = None):
        self.region = region
        self.base = base
        self.dim = region.dim
        if base is not None and base.dim != region.dim:
            raise ValueError("region and base dimensions differ")
        base_convex = True if base is None else base.is_convex
        self.is_convex = region.is_convex and base_convex
        self.is_level_convex = self.is_convex

    def eval(self, points):
        p = _pts(points, self.dim)
        vals = np.zeros(len(p)) if self.base is None else np.asarray(
            self.base.eval(p), dtype=float
        )
        return np.where(self.region.contains(p), vals, np.inf)

    @property
    def min_value(self):
        return 0.0 if self.base is None else self.base.min_value

    def argmin(self):
        if self.base is None:
            return self.region.project(np.zeros((1, self.dim)))[0]
        cand = np.atleast_2d(self.base.argmin())
        return self.region.project(cand)[0]

    def dom_project(self, points):
        return self.region.project(_pts(points, self.dim))

    def subgradient(self, points):
        p = _pts(points, self.dim)
        if self.base is None:
            return np.zeros_like(p)
        return self.base.subgradient(p)

    def sublevel_project(self, points, t):
        if self.base is None:
            return self.dom_project(points)
        if not self.is_convex:
            raise NotImplementedError
        # alternate between the base sublevel and the region (both convex)
        p = self.dom_project(points)
        for _ in range(200):
            q = self.base.sublevel_project(p, t)
            p_next = self.region.project(q)
            if np.max(np.linalg.norm(p_next - p, axis=1)) < 1e-13:
                p = p_next
                break
            p = p_next
        return p


# --- misc densities ----------------------------------------------------------


class ExprDensity(Density):
    """Custom expression over x0 [, x1 [, x2]] with numpy semantics."""

    _NAMESPACE = {
        "abs": np.abs,
        "sqrt": np.sqrt,
        "exp": np.exp,
        "log": np.log,
        "sin": np.sin,
        "cos": np.cos,
        "minimum": np.minimum,
        "maximum": np.maximum,
        "where": np.where,
        "inf": np.inf,
        "pi": np.pi,
    }

    def __init__(self, expr: str, dim: int):
        self.expr = str(expr)
        self.dim = int(dim)
        try:
            self._code = compile(self.expr, "<density expr>", "eval")
        except SyntaxError as exc:
            raise FormatError(f"bad density expression {expr!r}: {exc}") from exc
        # fail fast on unknown names
        self.eval(np.zeros((1, self.dim)) + 0.5)

    def eval(self, points):
        p = _pts(points, self.dim)
        local = {f"x{k}": p[:, k] for k in range(self.dim)}
        local["r"] = np.linalg.norm(p, axis=1)
        try:
            vals = eval(self._code, {"__builtins__": {}}, {**self._NAMESPACE, **local})
        except Exception as exc:
            raise FormatError(f"density expression failed: {exc}") from exc
        return np.broadcast_to(np.asarray(vals, dtype=float), (len(p),)).copy()


class GaussianBumps(Density):
    """Coercive random-smooth density: slope * |x| + positive Gaussian bumps.

    Deterministic for a fixed seed; used as the 'random smooth' family in the
    test batteries.
    """

    def __init__(self, dim, seed=0, n_bumps=4, slope=0.5, amplitude=1.0, width=0.7, box=2.0):
        self.dim = int(dim)
        self.slope = float(slope)
        rng = np.random.default_rng(seed)
        self.centers = rng.uniform(-box * 0.8, box * 0.8, size=(n_bumps, self.dim))
        self.amps = rng.uniform(0.2, 1.0, size=n_bumps) * float(amplitude)
        self.width = float(width)

    def eval(self, points):
        p = _pts(points, self.dim)
        out = self.slope * np.linalg.norm(p, axis=1)
        for c, a in zip(self.centers, self.amps):
            out = out + a * np.exp(-((p - c) ** 2).sum(axis=1) / (2 * self.width ** 2))
        return out


# --- descriptors -------------------------------------------------------------


def _term_from_spec(spec):
    kind = spec.get("kind")
    if kind == "norm":
        return NormTerm(
            spec.get("center", 0.0),
            scale=spec.get("scale", 1.0),
            power=spec.get("power", 1),
        )
    if kind == "well_abs":
        return WellAbsTerm(
            radius=spec.get("radius", 1.0),
            scale=spec.get("scale", 1.0),
            power=spec.get("power", 1),
        )
    if kind == "two_well":
        w1, w2 = spec["wells"]
        return TwoWellTerm(w1, w2, scale=spec.get("scale", 1.0), power=spec.get("power", 2))
    raise FormatError(f"unknown term kind {kind!r}")


def _region_from_spec(spec):
    kind = spec.get("kind")
    if kind == "ball":
        return Ball(spec.get("center", [0.0] * spec.get("dim", 3)), spec["radius"])
    if kind == "box":
        return Box(spec["lo"], spec["hi"])
    if kind == "cylinder":
        return Cylinder(
            radius=spec.get("radius", 1.0),
            z_lo=spec.get("z_lo", -1.0),
            z_hi=spec.get("z_hi", 1.0),
            center=spec.get("center", (0.0, 0.0)),
        )
    if kind == "points":
        return PointSet(spec["points"])
    raise FormatError(f"unknown region kind {kind!r}")


def density_from_spec(spec) -> Density:
    """Build a density from a flat descriptor dictionary (the config format)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise FormatError("density descriptor must be a dict with a 'kind' key")
    kind = spec["kind"]
    if kind == "norm":
        return NormDensity(
            spec.get("dim", 3),
            center=spec.get("center"),
            scale=spec.get("scale", 1.0),
            power=spec.get("power", 1),
            offset=spec.get("offset", 0.0),
        )
    if kind == "planar_vertical":
        return PlanarVerticalDensity(
            _term_from_spec(spec["planar"]), _term_from_spec(spec["vertical"])
        )
    if kind == "two_well_planar":
        w1, w2 = spec.get("wells", [[1.0, 0.0], [-1.0, 0.0]])
        return TwoWellPlanarDensity(w1, w2, vertical_scale=spec.get("vertical_scale", 1.0))
    if kind == "double_well_radial":
        return DoubleWellRadial(
            spec.get("dim", 2), radius=spec.get("radius", 1.0), scale=spec.get("scale", 1.0)
        )
    if kind == "indicator":
        base = density_from_spec(spec["base"]) if "base" in spec else None
        return IndicatorDensity(_region_from_spec(spec["region"]), base)
    if kind == "expr":
        return ExprDensity(spec["expr"], spec.get("dim", 3))
    if kind == "gaussian_bumps":
        return GaussianBumps(
            spec.get("dim", 3),
            seed=spec.get("seed", 0),
            n_bumps=spec.get("n_bumps", 4),
            slope=spec.get("slope", 0.5),
            amplitude=spec.get("amplitude", 1.0),
            width=spec.get("width", 0.7),
        )
    raise FormatError(f"unknown density kind {kind!r}")


# --- sampled validation helpers ----------------------------------------------


def _sample_pairs(dim, box, n, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-box, box, size=(n, dim))
    b = rng.uniform(-box, box, size=(n, dim))
    return a, b


def convexity_defect(density, box=2.0, n=2000, seed=0) -> float:
    """Worst positive midpoint-convexity violation over sampled segment pairs
    with finite endpoint values."""
    a, b = _sample_pairs(density.dim, box, n, seed)
    fa, fb = density.eval(a), density.eval(b)
    fm = density.eval(0.5 * (a + b))
    ok = np.isfinite(fa) & np.isfinite(fb)
    gap = fm[ok] - 0.5 * (fa[ok] + fb[ok])
    return float(max(0.0, gap.max())) if ok.any() else 0.0


def level_convexity_defect(density, box=2.0, n=2000, seed=0) -> float:
    """Worst positive violation of f(mid) <= max(f(a), f(b)) over samples."""
    a, b = _sample_pairs(density.dim, box, n, seed)
    fa, fb = density.eval(a), density.eval(b)
    fm = density.eval(0.5 * (a + b))
    ok = np.isfinite(fa) & np.isfinite(fb)
    gap = fm[ok] - np.maximum(fa[ok], fb[ok])
    return float(max(0.0, gap.max())) if ok.any() else 0.0


def scan_vertical_minima(density, z, lo=-3.0, hi=3.0, n=2001):
    """Local minima of zeta -> f(z, zeta): grid scan followed by a ternary
    refinement of each bracket.  Returns a list of (zeta, value) sorted by
    value then zeta; used to seed vertical-profile competitors."""
    z = np.asarray(z, dtype=float)
    zs = np.linspace(lo, hi, n)
    pts = np.column_stack([np.tile(z, (n, 1)), zs])
    vals = density.eval(pts)
    finite = np.isfinite(vals)

    def f1(zeta):
        return float(density.eval(np.array([[*z, zeta]]))[0])

    out = []
    for i in range(n):
        if not finite[i]:
            continue
        left = vals[i - 1] if i > 0 and finite[i - 1] else np.inf
        right = vals[i + 1] if i < n - 1 and finite[i + 1] else np.inf
        if vals[i] <= left and vals[i] <= right:
            a = zs[i - 1] if i > 0 else zs[i]
            b = zs[i + 1] if i < n - 1 else zs[i]
            for _ in range(100):  # ternary refinement on the local bracket
                m1 = a + (b - a) / 3.0
                m2 = b - (b - a) / 3.0
                if f1(m1) <= f1(m2):
                    b = m2
                else:
                    a = m1
            zeta = round(0.5 * (a + b), 9)  # snap away refinement dust
            out.append((float(zeta), f1(zeta)))
    out.sort(key=lambda p: (p[1], p[0]))
    # collapse plateau duplicates
    dedup = []
    for zeta, v in out:
        if all(abs(zeta - z0) > 1e-6 for z0, _ in dedup):
            dedup.append((zeta, v))
    return dedup
