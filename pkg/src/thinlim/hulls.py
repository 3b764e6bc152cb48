"""Exact lower convex hulls of finite samples.

The convex lsc envelope of a sampled extended-real function (finite on a
finite node set, +inf elsewhere) is the lower boundary of the convex hull of
the lifted sample points.  This module evaluates that envelope exactly at
query points, with a full degeneracy ladder (rank-deficient domains, affine
data), so envelope identities hold to floating-point precision.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import hull_contains

__all__ = ["lower_hull_1d", "lower_hull_values", "lower_hull_facets"]

_TOL = 1e-9


def lower_hull_1d(xs: np.ndarray, vals: np.ndarray):
    """Monotone-chain lower hull of 1D samples; returns (hx, hv) vertex arrays
    sorted by x."""
    order = np.argsort(xs, kind="stable")
    xs, vals = np.asarray(xs, float)[order], np.asarray(vals, float)[order]
    hx, hv = [], []
    for x, v in zip(xs, vals):
        if hx and x == hx[-1]:
            if v < hv[-1]:
                hx.pop()
                hv.pop()
            else:
                continue
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (v - hv[-2]) - (hv[-1] - hv[-2]) * (x - hx[-2])
            if cross <= 0:
                hx.pop()
                hv.pop()
            else:
                break
        hx.append(x)
        hv.append(v)
    return np.array(hx), np.array(hv)


def _eval_hull_1d(hx, hv, queries):
    q = np.asarray(queries, float).ravel()
    out = np.full(q.shape, np.inf)
    span = max(1.0, float(hx[-1] - hx[0]), float(np.abs(hx).max()))
    inside = (q >= hx[0] - _TOL * span) & (q <= hx[-1] + _TOL * span)
    qc = np.clip(q[inside], hx[0], hx[-1])
    if len(hx) == 1:
        out[inside] = hv[0]
        return out
    idx = np.clip(np.searchsorted(hx, qc, side="right") - 1, 0, len(hx) - 2)
    t = (qc - hx[idx]) / (hx[idx + 1] - hx[idx])
    out[inside] = hv[idx] + t * (hv[idx + 1] - hv[idx])
    return out


def _affine_fit(points, values, scale):
    a = np.hstack([points, np.ones((len(points), 1))])
    coef, *_ = np.linalg.lstsq(a, values, rcond=None)
    resid = float(np.abs(a @ coef - values).max()) if len(values) else 0.0
    return coef, resid <= _TOL * 100 * scale


def lower_hull_facets(points: np.ndarray, values: np.ndarray):
    """Affine pieces (gradients, offsets) of the lower hull of lifted samples.

    Only valid for full-dimensional, non-affine data; callers should go
    through :func:`lower_hull_values` unless they know the input is generic.
    The envelope inside the domain hull is max_k (gradients[k] . x + offsets[k]).
    """
    d = points.shape[1]
    lifted = np.hstack([points, values[:, None]])
    hull = ConvexHull(lifted)
    eq = hull.equations  # n . p + off <= 0 inside, |n| = 1
    low = eq[:, d] < -1e-12
    n_x, n_v, off = eq[low, :d], eq[low, d], eq[low, d + 1]
    grads = -n_x / n_v[:, None]
    offsets = -off / n_v
    return grads, offsets


def lower_hull_values(points, values, queries, tol: float = _TOL) -> np.ndarray:
    """Exact lower convex hull of (points, values), evaluated at queries.

    Returns +inf outside the convex hull of the points (within an inclusive
    tolerance at the hull boundary).
    """
    pts = np.atleast_2d(np.asarray(points, float))
    vals = np.asarray(values, float).ravel()
    qs = np.atleast_2d(np.asarray(queries, float))
    if len(pts) == 0:
        return np.full(len(qs), np.inf)
    d = pts.shape[1]
    scale = max(1.0, float(np.abs(pts).max()))
    vscale = max(1.0, float(np.abs(vals).max()))

    # rank-deficient domain: recurse inside the affine hull
    base = pts[0]
    centered = pts - base
    if len(pts) == 1:
        rank = 0
        basis = np.zeros((d, 0))
    else:
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        rank = int(np.sum(s > tol * scale * 10))
        basis = vt[:rank].T
    if rank == 0:
        out = np.full(len(qs), np.inf)
        at_pt = np.linalg.norm(qs - base, axis=1) <= tol * scale
        out[at_pt] = vals.min()
        return out
    if rank < d:
        resid = (qs - base) - (qs - base) @ basis @ basis.T
        on_plane = np.linalg.norm(resid, axis=1) <= tol * scale
        out = np.full(len(qs), np.inf)
        if on_plane.any():
            out[on_plane] = lower_hull_values(
                centered @ basis, vals, (qs[on_plane] - base) @ basis, tol
            )
        return out

    if d == 1:
        hx, hv = lower_hull_1d(pts[:, 0], vals)
        return _eval_hull_1d(hx, hv, qs[:, 0])

    inside = hull_contains(pts, qs, tol)
    out = np.full(len(qs), np.inf)
    if not inside.any():
        return out
    coef, is_affine = _affine_fit(pts, vals, vscale)
    if is_affine:
        out[inside] = qs[inside] @ coef[:d] + coef[d]
        return out
    try:
        grads, offsets = lower_hull_facets(pts, vals)
    except QhullError:
        # nearly-affine data that defeated the residual test
        out[inside] = qs[inside] @ coef[:d] + coef[d]
        return out
    cand = qs[inside] @ grads.T + offsets
    out[inside] = cand.max(axis=1)
    return out
