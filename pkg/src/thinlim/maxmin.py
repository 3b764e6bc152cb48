"""Max-min representation of continuous piecewise-affine functions on convex
domains.

The construction is per-active-piece: the group of piece i collects every
affine whose plane dominates piece i's plane on the clipped polygon P_i cap
omega (a vertex test, exact for affine data).  Validity is established by
verification against the source function, not assumed from the construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, NonConvexDomainError
from .geometry import ConvexPolygon, Polygon, clip_convex, cross2
from .piecewise import PAFunction

__all__ = [
    "MaxMinForm",
    "maxmin_representation",
    "eval_maxmin",
    "verify_representation",
    "VerificationReport",
    "write_maxmin_form",
    "read_maxmin_form",
]


@dataclass
class MaxMinForm:
    """Affine pieces (z_j, s_j) and groups N_i of indices into them; the value
    is max over groups of (min over the group's affines)."""

    affines: list  # of (gradient (2,), offset)
    groups: list  # of index lists

    def __post_init__(self):
        if not self.groups:
            raise ValueError("a max-min form needs at least one group")
        m = len(self.affines)
        for grp in self.groups:
            if len(grp) == 0:
                raise ValueError("groups must be nonempty")
            if any(not (0 <= j < m) for j in grp):
                raise ValueError("group references a missing affine")


def eval_maxmin(form: MaxMinForm, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    plane_vals = np.stack(
        [pts @ np.asarray(z, dtype=float) + s for z, s in form.affines], axis=1
    )
    group_vals = np.stack(
        [plane_vals[:, grp].min(axis=1) for grp in form.groups], axis=1
    )
    return group_vals.max(axis=1)


def _clip_piece(poly: ConvexPolygon, omega: Polygon, tol: float):
    """Clipped piece polygon vertices; convex windows use exact clipping,
    otherwise the piece must already sit inside omega."""
    if isinstance(omega, ConvexPolygon):
        verts = clip_convex(poly.vertices, omega)
        if len(verts) < 3:
            return None
        area = 0.5 * abs(
            sum(cross2(verts[i], verts[(i + 1) % len(verts)]) for i in range(len(verts)))
        )
        if area <= tol * max(1.0, omega.diameter()) ** 2:
            return None
        return verts
    inside = omega.contains(poly.vertices, tol=1e-7)
    return poly.vertices if inside.all() else None


def _certified_groups(grad_mat, offs, anchors, u_anchor, member_tol):
    """Index sets J(x) = {j : g_j(x) >= u(x)} at each anchor.  On a convex
    domain, min over J(x) never exceeds u anywhere (segment-crossing lemma)
    and equals u throughout x's arrangement cell."""
    vals = anchors @ grad_mat.T + offs  # (A, m)
    mask = vals >= (u_anchor - member_tol)[:, None]
    return mask


def _minimal_unique_rows(mask: np.ndarray) -> np.ndarray:
    """Deduplicate boolean rows and drop strict supersets (a superset's min is
    pointwise smaller, hence redundant under the outer max)."""
    rows = np.unique(mask, axis=0)
    keep = []
    for i in range(len(rows)):
        ri = rows[i]
        redundant = False
        for j in range(len(rows)):
            if i != j and np.all(rows[j] <= ri) and not np.array_equal(rows[j], ri):
                redundant = True
                break
        if not redundant:
            keep.append(ri)
    return np.array(keep) if keep else rows


def maxmin_representation(
    pa: PAFunction, omega, *, require_convex: bool = True, tol: float = 1e-9,
    max_rounds: int = 60,
) -> MaxMinForm:
    """Build a max-min form for a continuous PA function on omega.

    Pieces whose interior misses omega are discarded.  Groups are the anchored
    dominance sets J(x) = {j : g_j(x) >= u(x)} at a deterministic anchor
    family (clipped-piece vertices, edge midpoints, centroids), refined by
    adding anchors wherever verification still finds a gap; on a convex domain
    each J(x) group is provably a lower bound for u, so the refinement
    converges to an exact form.  Non-convex domains are rejected unless
    ``require_convex=False`` (the representation is then not guaranteed).
    """
    if require_convex and not (isinstance(omega, ConvexPolygon) or omega.is_convex()):
        raise NonConvexDomainError(
            "max-min representation requires a convex domain; pass "
            "require_convex=False to build an unguaranteed form"
        )
    defect = pa.continuity_defect(tol)
    if defect > 1e-9:
        raise ValueError(f"input is discontinuous across piece edges (defect {defect})")
    active = []
    clipped = []
    for z, s, poly in pa.pieces:
        verts = _clip_piece(poly, omega, tol)
        if verts is not None:
            active.append((z, s))
            clipped.append(verts)
    if not active:
        raise ValueError("no piece meets the domain")
    grad_mat = np.array([z for z, _ in active])
    offs = np.array([s for _, s in active])

    anchors = []
    for verts in clipped:
        anchors.append(verts)
        anchors.append(0.5 * (verts + np.roll(verts, -1, axis=0)))
        anchors.append(verts.mean(axis=0, keepdims=True))
    anchors = np.vstack(anchors)

    def u_of(pts):
        vals = pts @ grad_mat.T + offs
        located = np.full(len(pts), np.nan)
        for i, verts in enumerate(clipped):
            todo = np.isnan(located)
            if not todo.any():
                break
            poly = ConvexPolygon(verts) if len(verts) >= 3 else None
            if poly is None:
                continue
            hit = poly.contains(pts[todo], tol)
            sel = np.flatnonzero(todo)[hit]
            located[sel] = vals[sel, i]
        return located

    vscale = max(1.0, float(np.max(np.abs(anchors @ grad_mat.T + offs))))
    member_tol = 1e-13 * vscale
    u_anchor = u_of(anchors)
    ok = np.isfinite(u_anchor)
    mask = _minimal_unique_rows(
        _certified_groups(grad_mat, offs, anchors[ok], u_anchor[ok], np.full(ok.sum(), member_tol))
    )
    check_pts = np.vstack([anchors, _stratified_samples(omega, 4096, seed=1)])
    u_check = u_of(check_pts)
    finite = np.isfinite(u_check)
    check_pts, u_check = check_pts[finite], u_check[finite]
    plane_check = check_pts @ grad_mat.T + offs
    for _ in range(max_rounds):
        best = np.full(len(check_pts), -np.inf)
        for row in mask:
            best = np.maximum(best, plane_check[:, row].min(axis=1))
        gap = u_check - best
        worst = np.flatnonzero(gap > 0.5e-12 * vscale)
        if len(worst) == 0:
            break
        worst = worst[np.argsort(gap[worst])[::-1][:64]]
        extra = _certified_groups(
            grad_mat, offs, check_pts[worst], u_check[worst],
            np.full(len(worst), member_tol),
        )
        mask = _minimal_unique_rows(np.vstack([mask, extra]))
    affines = [(tuple(z), float(s)) for z, s in active]
    groups = [list(np.flatnonzero(row)) for row in mask]
    return MaxMinForm(affines, groups)


@dataclass
class VerificationReport:
    max_deviation: float
    witness: tuple
    n_points: int
    passes: bool
    guaranteed: bool
    note: str


def _stratified_samples(omega: Polygon, n: int, seed: int = 0) -> np.ndarray:
    """Deterministic jittered-lattice samples inside omega."""
    lo, hi = omega.bounding_box()
    span = hi - lo
    k = max(1, int(np.ceil(np.sqrt(n * span[0] * span[1] / max(omega.area, 1e-12)))))
    rng = np.random.default_rng(seed)
    ii, jj = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    base = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(float)
    pts = lo + (base + rng.uniform(0.2, 0.8, size=base.shape)) * (span / k)
    inside = omega.contains(pts, tol=1e-12)
    pts = pts[inside]
    return pts[:n] if len(pts) > n else pts


def verify_representation(
    pa: PAFunction, form: MaxMinForm, omega, n_samples: int = 10_000, seed: int = 0
) -> VerificationReport:
    """Max |pa - form| over stratified interior samples plus all piece
    vertices and edge midpoints inside omega; passes at 1e-12.

    On non-convex domains the representation is not guaranteed and the report
    says so instead of asserting.
    """
    pts = [_stratified_samples(omega, max(1, n_samples), seed)]
    for _, _, poly in pa.pieces:
        v = poly.vertices
        mids = 0.5 * (v + np.roll(v, -1, axis=0))
        cand = np.vstack([v, mids])
        pts.append(cand[omega.contains(cand, tol=0.0)])
    pts = np.vstack([p for p in pts if len(p)])
    # keep points the PA function can evaluate (guards non-covering pieces)
    ok = pa.locate(pts) >= 0
    pts = pts[ok]
    got = eval_maxmin(form, pts)
    want = pa.eval(pts)
    dev = np.abs(got - want)
    worst = int(np.argmax(dev))
    convex = isinstance(omega, ConvexPolygon) or omega.is_convex()
    max_dev = float(dev[worst])
    passes = max_dev <= 1e-12
    note = "" if convex else "non-convex domain — representation not guaranteed"
    return VerificationReport(
        max_dev, tuple(pts[worst]), len(pts), passes, convex, note
    )


# Serialization: one `z_x z_y s` line per affine, then one index-set line per
# group (whitespace separated).

def write_maxmin_form(form: MaxMinForm, path) -> None:
    lines = [f"{len(form.affines)} {len(form.groups)}"]
    for z, s in form.affines:
        lines.append(f"{float(z[0])!r} {float(z[1])!r} {float(s)!r}")
    for grp in form.groups:
        lines.append(" ".join(str(int(j)) for j in grp))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_maxmin_form(path) -> MaxMinForm:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    try:
        na, ng = (int(t) for t in raw[0].split())
        affines = []
        for ln in raw[1 : 1 + na]:
            zx, zy, s = (float(t) for t in ln.split())
            affines.append(((zx, zy), s))
        groups = [[int(t) for t in ln.split()] for ln in raw[1 + na : 1 + na + ng]]
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed max-min form") from exc
    return MaxMinForm(affines, groups)
