import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caqns.algebra import pauli_matrix
from caqns.closed_forms import closed_form_traces
from caqns.digital_control import DigitalControl, WindowGrid, toggled_observable
from caqns.dyson_engine import (
    coefficient_matrix,
    control_tensor,
    control_tensor_bruteforce,
    expectation,
    permutation_codes,
    sign_function,
)
from caqns.noise_models import NoiseModel, SpectrumIndex, SpectrumTable, exact_table
from caqns.symmetry_engine import all_indices

from conftest import random_vectors

vectors = st.integers(0, 2**32 - 1).map(lambda s: random_vectors(3, np.random.default_rng(s)))


def ordered_index(draw_n, mu, q=None):
    return SpectrumIndex(tuple(sorted(draw_n, reverse=True)), mu, q or ())


def test_sign_function_examples():
    assert sign_function((1,), (1,)) == 1
    assert all(sign_function(c.pi_e, (0, 0)) == 0 for c in permutation_codes(3))
    assert sign_function((1, 0, 1), (1, 1, 1)) == 0
    with pytest.raises(ValueError):
        sign_function((1,), (1, 0))


def test_permutation_codes():
    codes = list(permutation_codes(3))
    assert len(codes) == 8
    assert all(c.pi_e == c.pi_q[1:] for c in codes)


def test_first_order_tensor_vanishes_for_commuting_observable():
    c = DigitalControl.identity(2)
    T = control_tensor(c, "Z", SpectrumIndex((1,))).matrix
    assert np.allclose(T, 0)


def test_dark_k2_tensor(rng):
    c = DigitalControl.from_vectors(random_vectors(3, rng))
    for n in (1, 2, 3):
        assert np.allclose(control_tensor(c, "X", SpectrumIndex((n, n), (1,))).matrix, 0, atol=1e-12)


def test_three_streak_contracts(rng):
    for _ in range(5):
        c = DigitalControl.from_vectors(random_vectors(4, rng))
        O = "Y"
        T4 = control_tensor(c, O, SpectrumIndex((4, 3, 3, 3))).matrix
        T2 = control_tensor(c, O, SpectrumIndex((4, 3))).matrix
        ratio = np.vdot(T2, T4) / np.vdot(T2, T2)
        assert np.allclose(T4, ratio * T2, atol=1e-10)


@given(vectors, st.lists(st.integers(1, 3), min_size=1, max_size=5), st.data())
def test_recursive_tensor_equals_bruteforce(y, n, data):
    k = len(n)
    mu = tuple(data.draw(st.lists(st.integers(0, 1), min_size=k - 1, max_size=k - 1)))
    idx = ordered_index(n, mu)
    c = DigitalControl.from_vectors(y)
    O = data.draw(st.sampled_from(["X", "Y", "Z"]))
    assert np.allclose(control_tensor(c, O, idx).matrix, control_tensor_bruteforce(c, O, idx).matrix, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 2), min_size=1, max_size=4), st.data())
def test_two_qubit_tensor_equals_bruteforce(seed, n, data):
    rng = np.random.default_rng(seed)
    k = len(n)
    mu = tuple(data.draw(st.lists(st.integers(0, 1), min_size=k - 1, max_size=k - 1)))
    q = tuple(data.draw(st.lists(st.integers(0, 1), min_size=k, max_size=k)))
    idx = ordered_index(n, mu, q)
    c = DigitalControl.from_kak(rng.uniform(-1, 1, (2, 15)))
    assert np.allclose(control_tensor(c, "ZX", idx).matrix, control_tensor_bruteforce(c, "ZX", idx).matrix, atol=1e-12)


def test_zero_noise_expectation():
    c = DigitalControl.identity(2)
    tab = SpectrumTable({i: 0j for i in all_indices(2, 1, "classical", 2)})
    assert expectation(c, "Z", "Z", tab, 2) == pytest.approx(2.0)


def test_zero_mean_first_order_is_silent(rng):
    grid = WindowGrid(3, 1.0)
    m = NoiseModel(gamma=1.0, g=0.5, init_law="symmetric_pm_one")
    tab = exact_table(m, grid, all_indices(3, 1, "classical", 2))
    c = DigitalControl.from_vectors(random_vectors(3, rng))
    e0 = expectation(c, "X", "Y", tab, 0)
    e1 = expectation(c, "X", "Y", tab, 1)
    assert e1 == pytest.approx(e0, abs=1e-15)


@pytest.mark.parametrize("K", [2, 4, 6, 8])
def test_static_field_matches_cosine_taylor_series(K):
    # beta = 1 always: Tr[X U^dag X U] = 2 cos(2 g T) with U = exp(-i g T Z)
    g, T, L = 0.7, 1.3, 2
    grid = WindowGrid(L, T)
    m = NoiseModel(gamma=0.0, g=g)
    tab = exact_table(m, grid, all_indices(L, 1, "classical", K))
    c = DigitalControl.identity(L)
    x = 2 * g * T
    taylor = 2 * sum((-1) ** j * x ** (2 * j) / math.factorial(2 * j) for j in range(K // 2 + 1))
    assert expectation(c, "X", "X", tab, K) == pytest.approx(taylor, rel=1e-12)


def test_second_order_weight_identity_control():
    # for the identity control only F_z survives: E = 2 - 8 sum S(0)(n1, n2)
    grid = WindowGrid(3, 1.0)
    m = NoiseModel(gamma=2.0, g=0.3)
    idx = [i for i in all_indices(3, 1, "classical", 2) if i.k == 2]
    tab = exact_table(m, grid, idx)
    c = DigitalControl.identity(3)
    assert expectation(c, "X", "X", tab, 2) == pytest.approx(2 - 8 * sum(tab[i] for i in idx))


def test_missing_spectra_and_coverage():
    c = DigitalControl.identity(2)
    tab = SpectrumTable({SpectrumIndex((1,)): 0.1})
    with pytest.raises(ValueError):
        expectation(c, "Z", "Z", tab, 3)
    with pytest.raises(KeyError):
        expectation(c, "Z", "Z", tab, 2, indices=[SpectrumIndex((2, 1))])


def _random_table(L, k, rng, quantum=True):
    idx = [i for i in all_indices(L, 1, "quantum" if quantum else "classical", k) if i.k == k]
    vals = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
    return SpectrumTable(dict(zip(idx, vals)))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_closed_forms_match_engine(k):
    rng = np.random.default_rng(100 + k)
    L = 3
    labels = "IXYZ"
    worst = 0.0
    for _ in range(25):
        c = DigitalControl.from_vectors(random_vectors(L, rng))
        tab = _random_table(L, k, rng)
        g, r = rng.choice([1, 2, 3], size=2, replace=False)
        cf = closed_form_traces(c, tab, k, int(g), int(r))
        for key, rho in (("0", "I"), ("gamma", labels[g]), ("r", labels[r])):
            eng = expectation(c, rho, labels[g], tab, k) - np.trace(pauli_matrix(rho) @ pauli_matrix(labels[g]))
            worst = max(worst, abs(eng - cf[key]))
    assert worst <= 1e-10


def test_linearity_of_expectation(rng):
    L = 3
    idx = list(all_indices(L, 1, "quantum", 4))
    vals = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
    tab = SpectrumTable(dict(zip(idx, vals)))
    c = DigitalControl.from_vectors(random_vectors(L, rng))
    Ot = toggled_observable(c, "Y")
    rho = pauli_matrix("Z")
    row = coefficient_matrix(c.toggled[None], Ot[None], rho[None], idx)[0]
    assert row @ vals + np.trace(rho @ Ot) == pytest.approx(expectation(c, "Z", "Y", tab, 4), abs=1e-12)


def test_predictions_real_for_physical_states(rng):
    L = 2
    grid = WindowGrid(L, 1.0)
    m = NoiseModel(gamma=1.0, g=0.8, bath="toy", shift=1.0)
    tab = exact_table(m, grid, all_indices(L, 1, "quantum", 4))
    for _ in range(10):
        c = DigitalControl.from_vectors(random_vectors(L, rng))
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        rho = 0.5 * (np.eye(2) + np.einsum("u,uij->ij", v, np.array([pauli_matrix(p) for p in "XYZ"])))
        for O in "XYZ":
            assert abs(expectation(c, rho, O, tab, 4).imag) <= 1e-9
