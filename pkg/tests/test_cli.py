import csv
import json

import numpy as np
import pytest

from caqns.algebra import pauli_matrix
from caqns.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main
from caqns.digital_control import WindowGrid, toggled_observable
from caqns.noise_models import SpectrumTable
from caqns.qns_protocols import load_fixture, save_protocol_table
from caqns.symmetry_engine import enumerate_learnable


def run(args, out):
    return main(list(args) + ["--out", str(out)])


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.mark.parametrize("L,q,total", [(4, 1, 80), (2, 2, 80), (1, 1, 2)])
def test_count(tmp_path, capsys, L, q, total):
    assert run(["count", "--L", str(L), "--qubits", str(q), "--noise-class", "classical"], tmp_path) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert printed["total"] == total
    assert json.loads((tmp_path / "count.json").read_text())["total"] == total


def test_design_gaussian(tmp_path):
    assert run(["design", "--learnable", "gaussian", "--L", "4", "--seed", "1"], tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "design.json").read_text())
    assert doc["rows"] == 14
    assert np.isfinite(doc["condition_number"])
    assert (tmp_path / "protocol.json").exists()


def test_symmetry_report(tmp_path):
    assert run(["symmetry-report", "--L", "2", "--K", "4"], tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "symmetry_report.json").read_text())
    assert len(rep["classes"]) > 0


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_simulate_manifest_and_rerun(tmp_path):
    cfg = write_config(tmp_path / "sim.json", {
        "model": {"gamma": 1.0, "g": 1.0}, "protocol": "k2c", "T": 0.5, "n_traj": 500})
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", cfg, "--seed", "5"], a) == EXIT_OK
    assert run(["simulate", "--config", cfg, "--seed", "5"], b) == EXIT_OK
    assert _files(a) == _files(b)
    assert {"measurements.csv", "measurements.png"} <= set(_files(a))
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["seed"] == 5 and ma["command"] == "simulate"
    assert set(ma["artifacts"]) == {"measurements.csv", "measurements.png"}
    for k in ("started", "finished", "argv"):
        ma.pop(k), mb.pop(k)
    assert ma == mb
    rows = list(csv.DictReader(open(a / "measurements.csv")))
    assert len(rows) == 14


def test_pipeline_through_files(tmp_path):
    sim = write_config(tmp_path / "sim.json", {
        "model": {"gamma": 1.0, "g": 0.5}, "protocol": "k2c", "T": 0.5, "n_traj": 2000})
    assert run(["simulate", "--config", sim, "--seed", "2"], tmp_path / "m") == EXIT_OK
    rec = write_config(tmp_path / "rec.json", {
        "protocol": "k2c", "T": 0.5, "K": 2, "measurements": str(tmp_path / "m" / "measurements.csv")})
    assert run(["reconstruct", "--config", rec], tmp_path / "r") == EXIT_OK
    table = SpectrumTable.load(tmp_path / "r" / "spectra.json", WindowGrid(2, 0.5))
    assert len(table) == 14
    assert (tmp_path / "r" / "spectra.png").exists()


def test_predict_zero_spectra_gives_offsets(tmp_path):
    grid = WindowGrid(2, 0.5)
    table = SpectrumTable({i: 0j for i in enumerate_learnable(2, 1, "classical", 2)}, "bound", grid)
    table.save(tmp_path / "zero.json")
    cfg = write_config(tmp_path / "p.json", {"protocol": "k2c", "T": 0.5, "table": "zero.json", "K": 2})
    assert run(["predict", "--config", cfg], tmp_path / "out") == EXIT_OK
    got = [float(r["value"]) for r in csv.DictReader(open(tmp_path / "out" / "predictions.csv"))]
    want = [np.trace(pauli_matrix(e.rho) @ toggled_observable(e.control, e.obs)).real
            for e in load_fixture("k2c", 0.5)]
    assert np.allclose(got, want, atol=1e-12)


def test_predict_pipeline_writes_curve_and_figure(tmp_path):
    cfg = write_config(tmp_path / "p.json", {
        "model": {"gamma": 1.0, "g": 0.5}, "T_M": 0.4, "n_T": 2, "L": 4, "n_traj": 300})
    assert run(["predict", "--config", cfg], tmp_path / "o") == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "o" / "coherence.csv")))
    assert len(rows) == 8
    assert max(abs(float(r["predicted"]) - float(r["mc"])) for r in rows) < 1e-6
    assert (tmp_path / "o" / "coherence.png").stat().st_size > 0
    assert (tmp_path / "o" / "spectra_T02.json").exists()


def test_optimize_exact(tmp_path):
    cfg = write_config(tmp_path / "o.json", {
        "model": {"gamma": 1.0, "g": 5.0}, "T": 0.1, "L": 2, "qubits": 1, "spectra": "exact",
        "fold_order": 10, "n_traj": 2000, "options": {"max_iter": 200, "restarts": 1}})
    assert run(["optimize", "--config", cfg], tmp_path / "o") == EXIT_OK
    res = json.loads((tmp_path / "o" / "optimization.json").read_text())
    assert res["fidelity"] >= res["bare_fidelity"]
    assert 0 <= res["mc_fidelity"] <= 1


def test_invalid_input_exit_code(tmp_path, capsys):
    assert run(["simulate", "--config", str(tmp_path / "missing.json")], tmp_path) == EXIT_INPUT
    bad = write_config(tmp_path / "bad.json", {"model": {"gamma": -1.0}, "protocol": "k2c", "T": 1.0})
    assert run(["simulate", "--config", bad], tmp_path) == EXIT_INPUT
    assert "error" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{not json")
    assert run(["spectra", "--config", str(tmp_path / "broken.json")], tmp_path) == EXIT_INPUT


def test_numerical_failure_exit_code(tmp_path):
    # a single repeated experiment cannot determine 14 spectra
    fx = load_fixture("k2c", 1.0)
    save_protocol_table([fx[0]] * 14, tmp_path / "rank1.json", name="rank1", T=1.0)
    meas = tmp_path / "m.csv"
    meas.write_text("experiment_id,value\n" + "".join(f"{i},1.0\n" for i in range(14)))
    cfg = write_config(tmp_path / "r.json", {"protocol": str(tmp_path / "rank1.json"), "K": 2,
                                             "measurements": str(meas)})
    assert run(["reconstruct", "--config", cfg], tmp_path / "o") == EXIT_NUMERIC
