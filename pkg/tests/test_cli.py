import json
import os

import numpy as np
import pytest

from thinlim.cli import (
    EXIT_IO,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    ExperimentConfig,
    emit_csv,
    emit_svg_plot,
    main,
    run_sweep,
)
from thinlim.errors import FormatError
from thinlim.grids import Grid, read_grid_function, sample_density, write_grid_function
from thinlim.densities import NormDensity


SUP_CFG = {
    "pipeline": "supremal",
    "density": {
        "kind": "planar_vertical",
        "planar": {"kind": "norm", "center": [0.0, 0.0]},
        "vertical": {"kind": "norm", "center": 0.0},
    },
    "epsilons": [0.25, 0.125],
    "bc_gradient": [1.0, 0.0],
    "n_xy": 4,
    "n3": 2,
    "grid_n": 9,
    "output_dir": "out",
}

INT_CFG = {
    "pipeline": "integral",
    "density": {"kind": "norm", "dim": 3, "power": 2},
    "epsilons": [0.25, 0.125],
    "bc_gradient": [1.0, 0.0],
    "n_xy": 4,
    "n3": 2,
    "grid_n": 9,
    "output_dir": "out",
}


def test_config_roundtrip():
    cfg = ExperimentConfig.from_json(json.dumps(SUP_CFG))
    again = ExperimentConfig.from_json(cfg.to_json())
    assert cfg == again


def test_config_validation_errors():
    bad = dict(SUP_CFG, epsilons=[0.125, 0.25])
    with pytest.raises(FormatError):
        ExperimentConfig.from_json(json.dumps(bad))
    bad = dict(SUP_CFG, pipeline="nope")
    with pytest.raises(FormatError):
        ExperimentConfig.from_json(json.dumps(bad))
    bad = dict(SUP_CFG, epsilons=[])
    with pytest.raises(FormatError):
        ExperimentConfig.from_json(json.dumps(bad))
    bad = dict(SUP_CFG, mystery=1)
    with pytest.raises(FormatError):
        ExperimentConfig.from_json(json.dumps(bad))


def test_run_sweep_supremal_exact_rows():
    cfg = ExperimentConfig.from_json(json.dumps(SUP_CFG))
    table = run_sweep(cfg)
    assert table.consistent()
    assert table.limit_value == pytest.approx(1.0, abs=2e-3)
    for row in table.rows:
        assert row["m3d"] == pytest.approx(1.0, abs=2e-3)
        assert abs(row["gap"]) <= 4e-3


def test_run_sweep_integral_jensen_and_lower_bound():
    cfg = ExperimentConfig.from_json(json.dumps(INT_CFG))
    table = run_sweep(cfg)
    assert table.limit_value == pytest.approx(2.0, rel=1e-9)
    for row in table.rows:
        assert row["m3d"] == pytest.approx(2.0, rel=1e-9)
    assert table.lower_bound is not None and table.lower_bound.passes


def test_emit_csv_deterministic(tmp_path):
    cfg = ExperimentConfig.from_json(json.dumps(INT_CFG))
    table = run_sweep(cfg)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(table, p1)
    emit_csv(run_sweep(cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == "epsilon,m3d,mlimit,gap,runtime_s,iterations,status"
    assert len(p1.read_text().splitlines()) == 3


def test_workers_byte_identical(tmp_path):
    cfg = ExperimentConfig.from_json(json.dumps(INT_CFG))
    t1 = run_sweep(cfg, workers=1)
    t4 = run_sweep(cfg, workers=4)
    p1, p4 = tmp_path / "w1.csv", tmp_path / "w4.csv"
    emit_csv(t1, p1)
    emit_csv(t4, p4)
    assert p1.read_bytes() == p4.read_bytes()


def test_emit_svg(tmp_path):
    cfg = ExperimentConfig.from_json(json.dumps(INT_CFG))
    table = run_sweep(cfg)
    path = tmp_path / "plot.svg"
    emit_svg_plot(table, path)
    text = path.read_text()
    assert text.startswith("<svg")
    assert 'width="640" height="480"' in text
    assert text.count("<circle") == len(table.rows)


def test_cli_envelope_roundtrip(tmp_path):
    g = Grid.from_box([-2.0], [2.0], [41])
    from thinlim.densities import DoubleWellRadial

    gf = sample_density(DoubleWellRadial(1), g)
    src = tmp_path / "g.grid"
    dst = tmp_path / "gss.grid"
    write_grid_function(gf, src)
    code = main(["envelope", "--kind", "biconjugate", "--in", str(src), "--out", str(dst),
                 "--report", str(tmp_path / "rep.csv")])
    assert code == EXIT_OK
    out = read_grid_function(dst)
    xs = g.axis_coords(0)
    inside = np.abs(xs) <= 1.0
    assert np.max(out.values[inside]) <= 1e-10
    assert (tmp_path / "rep.csv").read_text().startswith("node,input,output,violation")


def test_cli_sweep_end_to_end(tmp_path, monkeypatch):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text(json.dumps(dict(INT_CFG, output_dir=str(tmp_path / "out"))))
    code = main(["sweep", "--config", str(cfg_path)])
    assert code == EXIT_OK
    assert (tmp_path / "out" / "sweep.csv").exists()
    assert (tmp_path / "out" / "sweep.svg").exists()


def test_cli_out_env_override(tmp_path, monkeypatch):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text(json.dumps(dict(INT_CFG, output_dir=str(tmp_path / "ignored"))))
    monkeypatch.setenv("THINLIM_OUT", str(tmp_path / "envout"))
    code = main(["sweep", "--config", str(cfg_path)])
    assert code == EXIT_OK
    assert (tmp_path / "envout" / "sweep.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_cli_maxmin_roundtrip(tmp_path):
    from thinlim.geometry import write_polygon, unit_square
    from thinlim.piecewise import PAFunction, write_pa
    from thinlim.geometry import ConvexPolygon

    pa = PAFunction(
        [
            ((1.0, 0.0), 0.0, ConvexPolygon([(0.5, 0), (1, 0), (1, 1), (0.5, 1)])),
            ((-1.0, 0.0), 1.0, ConvexPolygon([(0, 0), (0.5, 0), (0.5, 1), (0, 1)])),
        ]
    )
    pa_path = tmp_path / "roof.pa"
    poly_path = tmp_path / "square.poly"
    write_pa(pa, pa_path)
    write_polygon(unit_square(), poly_path)
    code = main(
        ["maxmin", "--pa", str(pa_path), "--omega", str(poly_path), "--verify", "2000",
         "--out", str(tmp_path / "form.mm")]
    )
    assert code == EXIT_OK
    assert (tmp_path / "form.mm").exists()


def test_cli_check_passes():
    assert main(["check", "--grid-n", "9"]) == EXIT_OK


def test_cli_exit_codes(tmp_path):
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("{not json")
    assert main(["sweep", "--config", str(bad_cfg)]) == EXIT_VALIDATION
    missing = main(["envelope", "--kind", "convex", "--in", str(tmp_path / "nope.grid"),
                    "--out", str(tmp_path / "x.grid")])
    assert missing == EXIT_IO


def test_cli_recover_vertical(tmp_path):
    out = tmp_path / "u.field"
    code = main(["recover", "--kind", "vertical", "--epsilon", "0.25", "--zx", "1.0",
                 "--zeta", "1.0", "--n-xy", "4", "--n3", "2", "--out", str(out)])
    assert code == EXIT_OK
    vals = [float(v) for v in out.read_text().split()]
    assert len(vals) == 25 * 3  # 5x5 lattice, 3 layers
