import json

import numpy as np
import pytest

import mxfar


@pytest.fixture(scope="module")
def expar():
    panel, spec = mxfar.simulate("expar", seed=3)
    return panel, json.loads(spec)


def test_simulated_panel_shape(expar):
    panel, spec = expar
    assert (panel.n_subjects, panel.n_channels, panel.n_time) == (10, 2, 500)
    assert panel.values.shape == (10, 2, 500)
    assert spec["kind"] == "expar"
    assert panel.subject_ids[0] == "S001"


def test_panel_from_numpy_and_csv_echo(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((3, 2, 50))
    panel = mxfar.Panel(values, groups=[0, 1, 1], subject_ids=["a", "b", "c"])
    assert panel.n_groups == 2
    path = tmp_path / "panel.csv"
    mxfar.write_panel_csv(panel, str(path))
    ok, violations = mxfar.validate_panel_file(str(path))
    assert ok and violations == []
    back = mxfar.read_panel_csv(str(path))
    np.testing.assert_array_equal(back.values, values)


def test_gap_reported_with_subject_and_line(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("subject_id,group_id,time_index,ch_1\ns1,0,1,0\ns1,0,3,0\n")
    ok, violations = mxfar.validate_panel_file(str(path))
    assert not ok
    assert violations[0]["subject"] == "s1" and violations[0]["line"] == 3
    with pytest.raises(mxfar.MxfarError, match="ingestion"):
        mxfar.read_panel_csv(str(path))


def test_fit_recovers_expar_peak(expar):
    panel, _ = expar
    fit = mxfar.fit(panel, p=1, ref_channel=1, ref_lag=2)
    u0 = np.asarray(fit["u0"])
    alpha = fit["alpha"]
    assert alpha.shape == (1, 50, 2, 2)
    assert fit["a"].shape == (10, 50, 2, 2)
    centre = np.argmin(np.abs(u0))
    assert abs(alpha[0, centre, 0, 1] - 0.6) < 0.15
    summary = json.loads(fit["summary_json"])
    assert summary["config"]["reference"]["lag"] == 2


def test_fpdc_is_column_normalized(expar):
    panel, _ = expar
    u0, omega, values = mxfar.mean_fpdc(panel, ref_channel=1, ref_lag=2, grid_size=10, omega_points=8)
    assert values.shape == (10, 8, 2, 2)
    np.testing.assert_allclose((np.abs(values) ** 2).sum(axis=2), 1.0, atol=1e-12)
    direct = mxfar.fpdc(np.array([[0.5, 0.2], [0.0, 0.3]]), 0.1)
    np.testing.assert_allclose((np.abs(direct) ** 2).sum(axis=0), 1.0, atol=1e-12)


def test_bootstrap_operations_are_seeded(expar):
    panel, _ = expar
    a = mxfar.nonlinearity_test(panel, ref_channel=1, ref_lag=2, replicates=10, seed=4)
    b = mxfar.nonlinearity_test(panel, ref_channel=1, ref_lag=2, replicates=10, seed=4, threads=2)
    assert a["L_boot"] == b["L_boot"] and a["B"] == 10
    bands = mxfar.coefficient_bands(panel, ref_channel=1, ref_lag=2, replicates=10, seed=4)
    assert np.all(bands["lower"] <= bands["upper"])


def test_selection_and_errors(expar):
    panel, _ = expar
    best, rows = mxfar.select_model(panel, [1.0], [1], [(1, 2), (0, 1)])
    assert len(rows) == 2 and 0 <= best < 2
    with pytest.raises(mxfar.MxfarError, match="bandwidth"):
        mxfar.fit(panel, bandwidth=-1.0)
