import csv
import io
import json

import pytest

from hdaloha import experiments as ex
from hdaloha.core import ParameterError, validate_params


def test_sweep_spec_validation():
    spec = ex.SweepSpec(p_pairs=[(0.5, 0.5)], lambda_grid={"start": 0, "stop": 0.2, "num": 5})
    assert spec.lambda_grid == pytest.approx([0, 0.05, 0.1, 0.15, 0.2])
    with pytest.raises(ParameterError):
        ex.SweepSpec(p_pairs=[(0.5, 0.5)], lambda_grid=[0.2, 0.1])
    with pytest.raises(ParameterError):
        ex.SweepSpec(p_pairs=[(0.0, 0.5)])
    with pytest.raises(ParameterError):
        ex.SweepSpec(p_pairs=[(0.5, 0.5)], lambda_grid=[float("inf")])
    with pytest.raises(ParameterError):
        ex.SweepSpec(p_pairs=[(0.5, 0.5)], seeds=[])


def test_format_value():
    assert ex.format_value(0.1) == "0.1"
    assert ex.format_value(2 / 3) == "0.6666666666666666"
    assert float(ex.format_value(2 / 7)) == 2 / 7
    assert ex.format_value(None) == "" and ex.format_value("unstable") == "unstable"
    assert ex.format_value(float("inf")) == "inf"


def test_region_figure(tmp_path):
    out = tmp_path / "region.csv"
    spec = ex.SweepSpec(p_pairs=[(2 / 3, 2 / 3)], lambda_grid=[0, 2 / 7, 0.4], output_path=str(out))
    table = ex.run_region_figure(spec)
    assert table.header == ex.REGION_HEADER
    assert table.column("lambda2_analytic") == pytest.approx([0.4, 2 / 7, 0], abs=1e-15)
    for row in table.rows:
        _, _, _, a, s, hw, status = row
        assert status == "ok"
        assert abs(s - a) <= hw + 0.02
    assert out.read_text() == table.to_csv()
    manifest = json.loads((tmp_path / "region.csv.manifest.json").read_text())
    assert manifest["figure"] == "region" and manifest["seeds"] == [0]
    assert "numpy" in manifest["versions"]


def test_region_figure_half(tmp_path):
    table = ex.run_region_figure(ex.SweepSpec(p_pairs=[(0.5, 0.5)], lambda_grid=[0.1, 0.5]))
    assert table.rows[0][3] == pytest.approx(0.3, abs=1e-15)
    assert abs(table.rows[0][4] - 0.3) <= 0.02
    assert table.rows[1][-1] == "outside_region"


def test_area_figure():
    table = ex.run_area_figure(ex.SweepSpec(p_pairs=[(0.2, 0.2), (0.9, 0.9), (1, 1)]))
    hd, fd = table.column("area_hd"), table.column("area_fd")
    assert hd[0] == pytest.approx(0.0238095238, abs=1e-9) and fd[0] == pytest.approx(0.032)
    assert hd[0] < fd[0]
    assert hd[1] == pytest.approx(0.15225564, abs=1e-8) and fd[1] == pytest.approx(0.081)
    assert hd[1] > fd[1]
    assert fd[2] == 0


def test_delay_figure():
    spec = ex.SweepSpec(p_pairs=[(0.5, 0.5)], lambda_grid=[0.0, 0.1, 0.25], seeds=[0, 1, 2])
    table = ex.run_delay_figure(spec)
    assert table.header == ex.DELAY_HEADER
    zero, mid, corner = table.rows
    assert zero[2] == "undefined" and zero[3] == "undefined"
    assert mid[2] == pytest.approx(10 / 3)
    assert mid[3] == pytest.approx(10 / 3, rel=0.05)
    assert mid[4] > 0 and isinstance(mid[5], float)
    assert corner[2] == "unstable"


def test_delay_figure_requires_symmetric_p():
    with pytest.raises(ParameterError):
        ex.run_delay_figure(ex.SweepSpec(p_pairs=[(0.5, 0.4)], lambda_grid=[0.1]))


def test_csv_reproducible_and_seed_independent_analytics():
    kw = dict(p_pairs=[(0.4, 0.4)], lambda_grid=[0.05, 0.1], sim_slots=20_000, include_fd=False)
    a = ex.run_delay_figure(ex.SweepSpec(seeds=[3, 4], **kw)).to_csv()
    b = ex.run_delay_figure(ex.SweepSpec(seeds=[3, 4], **kw)).to_csv()
    c = ex.run_delay_figure(ex.SweepSpec(seeds=[5, 6], **kw))
    assert a == b
    assert [r["d_analytic"] for r in csv.DictReader(io.StringIO(a))] == [ex.format_value(v) for v in c.column("d_analytic")]


def test_parallel_rows_in_grid_order():
    kw = dict(p_pairs=[(0.5, 0.5), (2 / 3, 2 / 3)], lambda_grid=[0.02, 0.05, 0.08], sim_slots=10_000,
              seeds=[1, 2], include_fd=False)
    serial = ex.run_delay_figure(ex.SweepSpec(**kw))
    parallel = ex.run_delay_figure(ex.SweepSpec(n_jobs=2, **kw))
    assert serial.to_csv() == parallel.to_csv()


def test_verification_suite_passes(params_a, params_b):
    rep = ex.run_verification_suite([params_a, params_b], window=20)
    assert rep.passed
    assert all(e.tv_distance <= 1e-6 for e in rep.entries)
    d = json.loads(rep.to_json())
    assert d["passed"] and len(d["entries"]) == 2
    assert set(d["entries"][0]) >= {"params", "window", "max_abs_error", "worst_pair", "nu_consistency_ok", "tv_distance"}


def test_verification_suite_random():
    plist = ex.random_stable_params(20, seed=3)
    assert len(plist) == 20
    assert ex.run_verification_suite(plist, window=15).passed


def test_verification_suite_detects_swapped_nu(params_b):
    rep = ex.run_verification_suite([params_b], window=10, swap_nu_p=True)
    assert not rep.passed
    worst = rep.entries[0].worst_pair
    assert worst is not None and rep.entries[0].max_abs_error > 1e-12


def test_default_specs():
    assert len(ex.default_area_spec().p_pairs) == 400
    d = ex.default_delay_spec()
    assert len(d.lambda_grid) == 30 and d.lambda_scale == "corner_fraction"
    assert [p for p, _ in ex.default_region_spec().p_pairs] == list(ex.DEFAULT_P_VALUES)


def test_simstats_row_matches_header(params_a):
    from hdaloha.sim import SimConfig, simulate

    cfg = SimConfig(params_a, 1000, seed=2)
    row = ex.simstats_row(simulate(cfg), cfg)
    assert len(row) == len(ex.SIMSTATS_HEADER)
