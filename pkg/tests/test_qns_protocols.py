import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caqns.digital_control import DigitalControl, WindowGrid
from caqns.dyson_engine import expectation
from caqns.noise_models import NoiseModel, SpectrumIndex, SpectrumTable, exact_table
from caqns.qns_protocols import (
    FIXTURES,
    Experiment,
    assemble_design_matrix,
    build_protocol,
    design_protocol,
    load_fixture,
    load_protocol_table,
    pivoted_rank_select,
    predict_measurements,
    random_experiments,
    reconstruct,
    sample_shots,
    save_protocol_table,
)
from caqns.symmetry_engine import all_indices, bound_form, classify, enumerate_learnable
from caqns.trajectory_sim import SimulationConfig, trajectory_values

S = SpectrumIndex


@pytest.fixture(scope="module")
def fundamental():
    learn = enumerate_learnable(4)
    return build_protocol(load_fixture("fundamental_1q_L4", 1.0), learn, 8)


def planted(learn, rng, quantum=False):
    vals = rng.normal(size=len(learn)) * 0.1
    if quantum:
        vals = vals + 1j * rng.normal(size=len(learn)) * 0.1
    return SpectrumTable(dict(zip(learn, vals)))


def test_experiment_validation():
    c = DigitalControl.identity(2)
    with pytest.raises(ValueError):
        Experiment(c, "Z", "I", WindowGrid(2, 1.0))
    with pytest.raises(ValueError):
        Experiment(c, "Z", "Z", WindowGrid(3, 1.0))
    e = Experiment(c, "Y", "X", WindowGrid(2, 1.0))
    assert e.rho.label == "Y"


def test_identity_experiment_row():
    learn = enumerate_learnable(2)
    e = Experiment(DigitalControl.identity(2), "Z", "Z", WindowGrid(2, 1.0))
    A, off = assemble_design_matrix([e], learn, 4)
    assert off[0] == pytest.approx(2.0)
    k1 = [j for j, i in enumerate(learn) if i.k == 1]
    assert np.allclose(A[0, k1], 0)


def test_dark_columns_absent():
    learn = enumerate_learnable(3, 1, "quantum", 4)
    assert not any(i.mu == (1,) and i.n[0] == i.n[1] for i in learn)


def test_rows_match_expectation(rng):
    learn = enumerate_learnable(3, 1, "quantum", 6)
    grid = WindowGrid(3, 1.0)
    exps = random_experiments(5, grid, 1, rng)
    tab = planted(learn, rng, quantum=True)
    A, off = assemble_design_matrix(exps, learn, 6)
    x = np.array([tab[i] for i in learn])
    for e, row, o in zip(exps, A, off):
        assert row @ x + o == pytest.approx(expectation(e.control, e.rho, e.obs, tab, 6), abs=1e-12)


def test_gaussian_design_has_14_rows(rng):
    learn = enumerate_learnable(4, 1, "classical", 2)
    prot = design_protocol(learn, WindowGrid(4, 1.0), 1, 2, M=10, rng=rng)
    assert len(prot.experiments) == 14
    assert np.isfinite(prot.condition_number)
    assert np.linalg.matrix_rank(prot.design_matrix) == 14


def test_fundamental_design_has_80_rows(rng):
    learn = enumerate_learnable(4)
    prot = design_protocol(learn, WindowGrid(4, 1.0), 1, M=3, rng=rng)
    assert prot.design_matrix.shape == (80, 80)
    assert np.linalg.matrix_rank(prot.design_matrix) == 80


def test_design_returns_minimum_condition_number():
    learn = enumerate_learnable(3, 1, "classical", 2)
    grid = WindowGrid(3, 1.0)
    cand = random_experiments(40, grid, 1, np.random.default_rng(0))
    prot = design_protocol(learn, grid, 1, 2, M=8, rng=np.random.default_rng(5), candidates=cand)
    A, _ = assemble_design_matrix(cand, learn, 2)
    r = np.random.default_rng(5)
    kappas = []
    for _ in range(8):
        sel = sorted(pivoted_rank_select(A, len(learn), r.permutation(len(cand))))
        kappas.append(np.linalg.cond(A[sel]))
    assert prot.condition_number == pytest.approx(min(kappas))
    assert prot.condition_number <= max(kappas)


def test_design_fails_on_small_pool(rng):
    learn = enumerate_learnable(3)
    with pytest.raises(RuntimeError):
        design_protocol(learn, WindowGrid(3, 1.0), 1, m=5, M=1, rng=rng)


def test_rank_select_ignores_roundoff_rows():
    rows = np.array([[1.0, 0.0], [1e-17, 1e-17], [0.0, 1.0]])
    assert pivoted_rank_select(rows, 2, [1, 0, 2]) == [0, 2]


def test_round_trip_recovery(fundamental, rng):
    tab = planted(fundamental.learnable, rng)
    y = predict_measurements(fundamental, tab)
    rec = reconstruct(fundamental, y)
    assert rec.provenance == "reconstructed"
    for i in fundamental.learnable:
        assert rec[i] == pytest.approx(tab[i], rel=1e-6, abs=1e-9)


def test_zero_signal_reconstructs_zero(fundamental):
    rec = reconstruct(fundamental, fundamental.offset)
    assert np.allclose([rec[i] for i in fundamental.learnable], 0, atol=1e-12)


def test_reconstruct_validation(fundamental):
    with pytest.raises(ValueError):
        reconstruct(fundamental, np.zeros(3))
    learn = enumerate_learnable(2)
    exps = [Experiment(DigitalControl.identity(2), "Z", "Z", WindowGrid(2, 1.0))] * len(learn)
    with pytest.raises(np.linalg.LinAlgError):
        reconstruct(build_protocol(exps, learn, 4), np.zeros(len(learn)))


def test_row_permutation_invariance(rng):
    learn = enumerate_learnable(3, 1, "classical", 4)
    grid = WindowGrid(3, 1.0)
    prot = design_protocol(learn, grid, 1, 4, M=3, rng=rng)
    y = rng.normal(size=len(learn))
    rec = reconstruct(prot, y)
    perm = rng.permutation(len(learn))
    prot2 = build_protocol([prot.experiments[j] for j in perm], learn, 4)
    rec2 = reconstruct(prot2, y[perm])
    for i in learn:
        assert rec2[i] == pytest.approx(rec[i], abs=1e-12 * max(1, abs(rec[i])) * prot.condition_number)


def test_dark_spectra_do_not_change_predictions(rng):
    L, K = 3, 4
    grid = WindowGrid(L, 1.0)
    learn = enumerate_learnable(L, 1, "quantum", K)
    tab = planted(learn, rng, quantum=True)
    dark = [i for i in all_indices(L, 1, "quantum", K) if classify(i).kind == "dark"]
    assert dark
    noisy = SpectrumTable({**tab.entries, **{i: complex(rng.normal(), rng.normal()) for i in dark}})
    for e in random_experiments(10, grid, 1, rng):
        assert expectation(e.control, e.rho, e.obs, noisy, K) == pytest.approx(
            expectation(e.control, e.rho, e.obs, tab, K), abs=1e-12)


def test_bound_member_blindness(rng):
    L, K = 2, 4
    grid = WindowGrid(L, 1.0)
    m = NoiseModel(gamma=1.0, g=0.6)
    raw = exact_table(m, grid, all_indices(L, 1, "classical", K))
    member = S((2, 1, 1, 1))
    moved = SpectrumTable(dict(raw.entries))
    moved.entries[member] = 0.0
    b1, b2 = bound_form(raw), bound_form(moved)
    learn = enumerate_learnable(L, 1, "classical", K)
    exps = random_experiments(10, grid, 1, rng)
    p1 = predict_measurements(build_protocol(exps, learn, K), b1)
    # representative carries the member's contribution
    assert b1[S((2, 1))] != b2[S((2, 1))]
    for e, v in zip(exps, p1):
        assert expectation(e.control, e.rho, e.obs, raw, K) == pytest.approx(v, abs=1e-10)


def test_fixtures():
    exps = load_fixture("fundamental_1q_L4", 2.0)
    assert len(exps) == 80
    assert np.allclose(exps[0].control.vectors, [[1, 0, 0]] * 4)
    assert exps[0].rho.label == "Z" and exps[0].obs.label == "Z"
    assert exps[0].grid.T == 2.0
    assert len(load_fixture("k2c")) == 14
    assert len(load_fixture("fundamental_2q_L2")) == 80
    assert set(FIXTURES) >= {"k2c", "k2q", "k4c", "k4q"}
    with pytest.raises(KeyError):
        load_fixture("table_x")


@pytest.mark.parametrize("name, noise, K, rows", [
    ("k2c", "classical", 2, 14), ("k4c", "classical", 4, 49),
    ("k2q", "quantum", 2, 20), ("k4q", "quantum", 4, 85), ("fundamental_1q_L4", "classical", 8, 80),
])
def test_single_qubit_fixtures_full_rank(name, noise, K, rows):
    learn = enumerate_learnable(4, 1, noise, K)
    prot = build_protocol(load_fixture(name), learn, K)
    assert prot.design_matrix.shape == (rows, rows)
    assert np.linalg.matrix_rank(prot.design_matrix) == rows


def test_protocol_file_round_trip(tmp_path, rng):
    exps = random_experiments(6, WindowGrid(3, 2.0), 1, rng) + []
    p = tmp_path / "p.json"
    save_protocol_table(exps, p, "demo", T=2.0)
    back = load_protocol_table(p)
    assert back[0].grid.T == 2.0
    assert load_protocol_table(p, 5.0)[0].grid.T == 5.0
    for a, b in zip(exps, back):
        assert np.array_equal(a.control.toggled, b.control.toggled)
        assert (a.rho, a.obs) == (b.rho, b.obs)
    q = tmp_path / "q.json"
    save_protocol_table(back, q, "demo", T=2.0)
    assert q.read_bytes() == p.read_bytes()
    two = random_experiments(3, WindowGrid(2, 1.0), 2, rng)
    save_protocol_table(two, q)
    assert np.array_equal(load_protocol_table(q)[2].control.kak, two[2].control.kak)


def test_malformed_rows(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"experiments": [{"windows": [[1, 0, 0]], "rho": "Z", "obs": "Z"},
                                             {"windows": [[0.5, 0, 0]], "rho": "Z", "obs": "Z"}]}))
    with pytest.raises(ValueError, match=r"experiments\[1\]"):
        load_protocol_table(p)
    p.write_text(json.dumps({"experiments": [{"windows": [[1, 0, 0]], "obs": "Z"}]}))
    with pytest.raises(ValueError, match="rho"):
        load_protocol_table(p)
    p.write_text(json.dumps({"experiments": [{"windows": [[1.0004, 0, 0]], "rho": "Z", "obs": "X"}]}))
    assert np.allclose(load_protocol_table(p)[0].control.vectors, [[1, 0, 0]])


def test_sample_shots(rng):
    e = np.array([2.0, -2.0, 0.0, 1.0])
    s = sample_shots(e, 200_000, rng, dim=2)
    assert s[0] == 2.0 and s[1] == -2.0
    assert np.allclose(s, e, atol=0.02)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=5))
def test_sample_shots_bounded(vals):
    s = sample_shots(np.array(vals), 10, np.random.default_rng(0))
    assert np.all(np.abs(s) <= 1)


def test_reconstruction_from_monte_carlo_matches_bound_form():
    # saturation: L=2 fundamental protocol, strong coupling
    L = 2
    grid = WindowGrid(L, 0.2)
    m = NoiseModel(gamma=1.0, g=5.0)
    learn = enumerate_learnable(L)
    prot = design_protocol(learn, grid, 1, rng=np.random.default_rng(2), M=10)
    vals = trajectory_values(prot.experiments, m, SimulationConfig(20000, 3))
    per_traj = np.linalg.solve(prot.design_matrix.real, vals - prot.offset[:, None])
    est, se = per_traj.mean(axis=1), per_traj.std(axis=1, ddof=1) / np.sqrt(vals.shape[1])
    rec = reconstruct(prot, vals.mean(axis=1))
    ref = bound_form(exact_table(m, grid, all_indices(L, 1, "classical", 14)))
    for j, i in enumerate(learn):
        assert rec[i] == pytest.approx(est[j], abs=1e-9)
        assert abs(rec[i] - ref[i]) <= 3 * se[j] + 0.05 * abs(ref[i]) + 1e-12
