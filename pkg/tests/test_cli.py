"""Command line front end: subcommands, exit codes, file formats."""
import json

import numpy as np
import pytest

from lindblad_ramp.cli import main


def _usage_error(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def _read_csv(path):
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def _config_of(path):
    first = path.read_text().splitlines()[0]
    assert first.startswith("# config: ")
    return json.loads(first[len("# config: "):])


def test_usage_errors():
    _usage_error([])
    _usage_error(["evolve", "--p", "1"])                      # missing tau
    _usage_error(["evolve", "--p", "1", "--tau", "1", "--frob", "2"])
    _usage_error(["series", "--orders", "0"])
    _usage_error(["series"])                                  # missing orders
    _usage_error(["collapse", "--tau-list", "100"])           # single tau
    _usage_error(["defect-profile", "--collapse", "--tau-list", "50,500"])
    _usage_error(["density-sweep", "--tau-list", "50,100", "--threads", "0"])
    _usage_error(["fit"])                                     # missing input


def test_evolve_full_trace_constant(tmp_path):
    out = tmp_path / "traj.csv"
    rc = main(["evolve", "--p", "0", "--delta", "1", "--gamma0", "1",
               "--tau", "100", "--kind", "full", "--out", str(out)])
    assert rc == 0
    cfg = _config_of(out)
    assert cfg["tau"] == 100.0 and cfg["kind"] == "full"
    data = _read_csv(out)
    assert np.max(np.abs(data[:, 1] - 0.5)) < 1e-10


def test_evolve_nojump_trace_moves(tmp_path):
    out = tmp_path / "traj.csv"
    rc = main(["evolve", "--p", "0.5", "--tau", "50", "--kind", "nojump",
               "--out", str(out)])
    assert rc == 0
    data = _read_csv(out)
    assert np.max(np.abs(data[:, 1] - 0.5)) > 1e-3


def test_defect_profile_full(tmp_path):
    out = tmp_path / "profile.csv"
    rc = main(["defect-profile", "--tau", "300", "--p-max", "4",
               "--p-count", "17", "--out", str(out)])
    assert rc == 0
    data = _read_csv(out)
    assert data.shape == (17, 3)
    # numeric tau*n_z tracks the analytic leading order along the profile
    assert np.max(np.abs(data[:, 1] - data[:, 2])) < 0.05


def test_defect_profile_nojump(tmp_path):
    out = tmp_path / "profile.csv"
    rc = main(["defect-profile", "--kind", "nojump", "--tau", "60",
               "--p-min", "2", "--p-max", "4", "--p-count", "5",
               "--x-end", "0.9", "--out", str(out)])
    assert rc == 0
    data = _read_csv(out)
    assert data.shape == (5, 3)
    lead = -1.0 / (2.0 * (1.0 + data[:, 0] ** 2 - 0.81))
    assert np.allclose(data[:, 2], lead, rtol=1e-12)


def test_defect_profile_collapse_mode(tmp_path):
    out = tmp_path / "overlay.csv"
    rc = main(["defect-profile", "--kind", "nojump", "--collapse",
               "--tau-list", "30,300", "--p-max", "1.2", "--p-count", "12",
               "--out", str(out)])
    assert rc == 0
    text = out.read_text().splitlines()
    assert "residual" in text[1]
    data = _read_csv(out)
    assert data.shape[1] == 3
    assert set(np.unique(data[:, 2])) == {30.0, 300.0}


def test_density_sweep_with_fit(tmp_path):
    out = tmp_path / "density.csv"
    fout = tmp_path / "fit.json"
    rc = main(["density-sweep", "--kind", "full", "--case", "gapped",
               "--tau-list", "40,80,160,400", "--nodes", "16",
               "--max-nodes", "64", "--qtol", "1e-3",
               "--out", str(out), "--fit-out", str(fout)])
    assert rc == 0
    data = _read_csv(out)
    assert data.shape == (4, 3)
    assert np.all(data[:, 1] < 0.0)
    doc = json.loads(fout.read_text())
    assert set(doc) >= {"config", "exponent", "stderr", "tau_range", "n_used"}
    assert -1.3 < doc["exponent"] < -0.7


def test_series_json(tmp_path):
    out = tmp_path / "series.json"
    rc = main(["series", "--case", "gapped", "--epsilon", "1",
               "--orders", "12", "--y-list", "0,1", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["orders"] == 12
    assert doc["config"]["y-list"] == [0.0, 1.0]
    assert len(doc["c_at_x1"]["0"]) == 12
    assert doc["c_at_x1"]["0"][0] == pytest.approx(1.0 / 18.0, rel=1e-14)
    radii = doc["report"]["radius_estimate"]
    assert all(5.0 < r < 50.0 for r in radii)


def test_series_without_report(tmp_path):
    out = tmp_path / "series.json"
    rc = main(["series", "--orders", "3", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["report"] is None


def test_fit_roundtrip(tmp_path):
    table = tmp_path / "density.csv"
    taus = np.logspace(2, 4, 5)
    lines = ["# columns: tau, n_z, err"]
    lines += [f"{t:.6g},{2.0 / t:.12g},0" for t in taus]
    table.write_text("\n".join(lines) + "\n")
    out = tmp_path / "fit.json"
    rc = main(["fit", "--in", str(table), "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["exponent"] == pytest.approx(-1.0, abs=1e-12)


def test_fit_sign_change_is_numerical_failure(tmp_path, capsys):
    table = tmp_path / "density.csv"
    rows = [(100.0, 1e-3), (1000.0, -1e-4), (10000.0, 1e-5)]
    table.write_text("\n".join(f"{t:g},{v:g},0" for t, v in rows) + "\n")
    rc = main(["fit", "--in", str(table)])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error: SignChange:")


def test_fit_missing_file_is_failure(tmp_path, capsys):
    rc = main(["fit", "--in", str(tmp_path / "absent.csv")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_config_file_defaults_and_precedence(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"p": 0.5, "tau": 40.0, "kind": "full"}))
    out = tmp_path / "a.csv"
    rc = main(["evolve", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    assert _config_of(out)["tau"] == 40.0
    out2 = tmp_path / "b.csv"
    rc = main(["evolve", "--config", str(cfg), "--tau", "20",
               "--out", str(out2)])
    assert rc == 0
    assert _config_of(out2)["tau"] == 20.0  # explicit flag wins


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"p": 0.5, "tau": 40.0, "frobnicate": 1}))
    _usage_error(["evolve", "--config", str(cfg)])


def test_collapse_summary(tmp_path, capsys):
    out = tmp_path / "overlay.csv"
    summary = tmp_path / "summary.json"
    rc = main(["collapse", "--tau-list", "30,300", "--p-count", "10",
               "--out", str(out), "--summary-out", str(summary)])
    assert rc == 0
    doc = json.loads(summary.read_text())
    assert doc["exponent"] == pytest.approx(1.0 / 3.0)
    assert np.isfinite(doc["residual"])
    assert "residual=" in capsys.readouterr().out
