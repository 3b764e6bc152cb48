import numpy as np
import pytest

from thinlim import ConvexPolygon, PAFunction, unit_square
from thinlim.errors import NonConvexDomainError
from thinlim.geometry import Polygon, regular_polygon
from thinlim.maxmin import (
    MaxMinForm,
    eval_maxmin,
    maxmin_representation,
    read_maxmin_form,
    verify_representation,
    write_maxmin_form,
)
from thinlim.meshing import structured_rect_mesh, triangulate_polygon


def square(x0, y0, x1, y1):
    return ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def max_of_planes_pa(a1, a2, box=(-1, -1, 1, 1)):
    """u = max(a1, a2) with the two pieces split by the line a1 = a2 (assumed
    to be the vertical axis for the data used in the tests)."""
    x0, y0, x1, y1 = box
    return PAFunction(
        [
            (a1[0], a1[1], square(0, y0, x1, y1)),
            (a2[0], a2[1], square(x0, y0, 0, y1)),
        ]
    )


def pa_from_mesh(mesh, values):
    pieces = []
    for cell in mesh.cells:
        v = mesh.vertices[cell]
        coef = np.linalg.solve(np.hstack([v, np.ones((3, 1))]), values[cell])
        pieces.append((coef[:2], coef[2], ConvexPolygon(v)))
    return PAFunction(pieces)


def test_max_of_two_planes():
    # u = max(x, -x) on [-1,1]^2
    pa = max_of_planes_pa(((1.0, 0.0), 0.0), ((-1.0, 0.0), 0.0))
    omega = square(-1, -1, 1, 1)
    form = maxmin_representation(pa, omega)
    rep = verify_representation(pa, form, omega, 2000)
    assert rep.passes
    # evaluation picks the dominating plane away from the interface
    assert eval_maxmin(form, [(0.5, 0.0)])[0] == 0.5
    assert eval_maxmin(form, [(-0.5, 0.0)])[0] == 0.5


def test_min_of_two_planes():
    # u = min(x, -x): every group contains both indices
    pa = max_of_planes_pa(((-1.0, 0.0), 0.0), ((1.0, 0.0), 0.0))
    omega = square(-1, -1, 1, 1)
    form = maxmin_representation(pa, omega)
    for grp in form.groups:
        assert sorted(grp) == [0, 1]
    rep = verify_representation(pa, form, omega, 2000)
    assert rep.passes


def test_saddle_four_pieces():
    # continuous saddle-like PA interpolant on a crossed mesh
    mesh = structured_rect_mesh(2, 2, origin=(-1.0, -1.0), size=(2.0, 2.0), pattern="crossed")
    vals = np.abs(mesh.vertices[:, 0]) - np.abs(mesh.vertices[:, 1])
    pa = pa_from_mesh(mesh, vals)
    omega = square(-1, -1, 1, 1)
    form = maxmin_representation(pa, omega)
    rep = verify_representation(pa, form, omega, 10_000)
    assert rep.passes
    assert rep.max_deviation <= 1e-12


def test_form_gradients_come_from_source():
    mesh = triangulate_polygon(regular_polygon(5, 1.0), 0.5)
    rng = np.random.default_rng(1)
    vals = rng.normal(size=mesh.num_vertices)
    pa = pa_from_mesh(mesh, vals)
    omega = regular_polygon(5, 1.0)
    form = maxmin_representation(pa, omega)
    src = {tuple(np.round(z, 10)) for z, _, _ in pa.pieces}
    for z, _ in form.affines:
        assert tuple(np.round(z, 10)) in src
    rep = verify_representation(pa, form, omega, 5000)
    assert rep.passes


def test_inactive_pieces_discarded():
    pa = PAFunction(
        [
            ((1.0, 0.0), 0.0, square(0, 0, 1, 1)),
            ((1.0, 0.0), 0.0, square(5, 5, 6, 6)),  # misses omega entirely
        ]
    )
    omega = square(0, 0, 1, 1)
    form = maxmin_representation(pa, omega)
    assert len(form.groups) == 1
    rep = verify_representation(pa, form, omega, 1000)
    assert rep.passes


def test_deleted_group_fails_verification():
    pa = max_of_planes_pa(((1.0, 0.0), 0.0), ((-1.0, 0.0), 0.0))
    omega = square(-1, -1, 1, 1)
    form = maxmin_representation(pa, omega)
    broken = MaxMinForm(form.affines, form.groups[:1])
    rep = verify_representation(pa, broken, omega, 2000)
    assert not rep.passes
    assert rep.max_deviation > 0.1
    # the witness point is reported
    assert len(rep.witness) == 2


def test_nonconvex_domain_rejected_then_reported():
    # L-shaped domain with a genuine obstruction: u rises up the vertical leg
    # (so that plane must form a singleton group) but falls along the
    # horizontal leg below every other plane (so it must join every group);
    # only a convex domain can reconcile the two demands.
    L = Polygon([(0, 0), (3, 0), (3, 1), (1, 1), (1, 3), (0, 3)])
    assert not L.is_convex()
    pieces = [
        ((0.0, 0.0), 0.0, square(0, 0, 1, 2)),    # corner strip: u = 0
        ((0.0, 1.0), -2.0, square(0, 2, 1, 3)),   # upper leg: u = y - 2
        ((-1.0, 0.0), 1.0, square(1, 0, 3, 1)),   # right leg: u = 1 - x
    ]
    pa = PAFunction(pieces)
    with pytest.raises(NonConvexDomainError):
        maxmin_representation(pa, L)
    form = maxmin_representation(pa, L, require_convex=False)
    rep = verify_representation(pa, form, L, 4000)
    assert not rep.guaranteed
    assert rep.note == "non-convex domain — representation not guaranteed"
    # the obstruction is real here: the vertex-dominance form fails in a leg
    assert not rep.passes
    assert rep.max_deviation > 0.1


def test_discontinuous_input_rejected():
    pa = PAFunction(
        [
            ((1.0, 0.0), 0.0, square(0, 0, 1, 1)),
            ((1.0, 0.0), 0.5, square(1, 0, 2, 1)),
        ]
    )
    with pytest.raises(ValueError):
        maxmin_representation(pa, square(0, 0, 2, 1))


def test_eval_maxmin_single():
    form = MaxMinForm([((1.0, 2.0), 0.5)], [[0]])
    assert eval_maxmin(form, [(1.0, 1.0)])[0] == 3.5


def test_maxmin_lipschitz_bound():
    pa = max_of_planes_pa(((1.0, 0.5), 0.0), ((-1.0, 0.5), 0.0))
    omega = square(-1, -1, 1, 1)
    form = maxmin_representation(pa, omega)
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, (500, 2))
    q = p + rng.normal(scale=0.05, size=p.shape)
    q = np.clip(q, -1, 1)
    fp, fq = eval_maxmin(form, p), eval_maxmin(form, q)
    lip = max(np.linalg.norm(z) for z, _ in form.affines)
    gaps = np.abs(fp - fq) - lip * np.linalg.norm(p - q, axis=1)
    assert np.max(gaps) <= 1e-12


def test_form_io_roundtrip(tmp_path):
    pa = max_of_planes_pa(((1.0, 0.0), 0.25), ((-1.0, 0.0), 0.25))
    omega = square(-1, -1, 1, 1)
    form = maxmin_representation(pa, omega)
    path = tmp_path / "form.mm"
    write_maxmin_form(form, path)
    back = read_maxmin_form(path)
    pts = np.random.default_rng(2).uniform(-1, 1, (200, 2))
    assert np.array_equal(eval_maxmin(back, pts), eval_maxmin(form, pts))
