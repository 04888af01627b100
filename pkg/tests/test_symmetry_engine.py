import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caqns.digital_control import DigitalControl, WindowGrid
from caqns.dyson_engine import coefficient_matrix, expectation, tensor_stack
from caqns.noise_models import NoiseModel, SpectrumIndex, SpectrumTable, exact_table
from caqns.symmetry_engine import (
    all_indices,
    bound_form,
    classify,
    count_learnable_closed_form,
    detect_contraction,
    enumerate_learnable,
    is_dark,
    learnable_by_order,
    linear_basis,
    make_resolver,
    max_streak,
    random_controls,
    resource_ratio,
    saturation_order,
    swap_representative,
    symmetry_report,
)

S = SpectrumIndex


def brute_force_count(L):
    # ordered strings with every run of equal windows at most 2 long
    total = 0
    for k in range(1, 2 * L + 1):
        for n in itertools.combinations_with_replacement(range(L, 0, -1), k):
            total += max_streak(n) <= 2
    return total


def test_saturation_order():
    assert saturation_order(4, 1) == 8
    assert saturation_order(2, 2) == 8


def test_contraction_examples():
    assert detect_contraction(S((4, 3, 3, 3), (1, 0, 1))) == S((4, 3), (1,))
    assert detect_contraction(S((4, 3, 2, 1))) is None
    assert detect_contraction(S((2, 1, 1, 1), (0, 0, 0), (0, 0, 1, 0)), 2) is None
    assert detect_contraction(S((1, 1, 1, 1, 1), (0,) * 4, (0, 1, 0, 1, 0)), 2) is not None


def test_dark_examples():
    assert is_dark(S((2, 2), (1,)))
    assert not is_dark(S((2, 2), (0,)))
    assert not is_dark(S((3, 3, 3, 3)))
    assert is_dark(S((2, 2, 1), (1, 1)))


def test_swap_examples():
    assert swap_representative(S((1, 1), (0,), (1, 0))) == S((1, 1), (0,), (0, 1))
    assert swap_representative(S((2, 1), (0,), (1, 0))) == S((2, 1), (0,), (1, 0))
    assert swap_representative(S((2, 2, 1), (0, 0), (1, 0, 1))) == S((2, 2, 1), (0, 0), (0, 1, 1))


def test_classify_kinds():
    assert classify(S((2, 1))).kind == "learnable"
    c = classify(S((2, 1, 1, 1)))
    assert c.kind == "bound" and c.representative == S((2, 1))
    assert classify(S((1, 1), (1,))).kind == "dark"
    c = classify(S((1, 1), (0,), (1, 0)), 2)
    assert c.kind == "swap_bound" and c.representative == S((1, 1), (0,), (0, 1))
    with pytest.raises(ValueError):
        classify(S((1, 2)))


def test_enumeration_examples():
    assert set(enumerate_learnable(1)) == {S((1,)), S((1, 1))}
    assert len(enumerate_learnable(2)) == 8
    assert len(enumerate_learnable(4)) == 80
    assert len(enumerate_learnable(2, 2)) == 80


@pytest.mark.parametrize("L", [1, 2, 3, 4, 5])
def test_closed_form_matches_brute_force(L):
    assert count_learnable_closed_form(L).total == brute_force_count(L)


def test_counts_and_report():
    r = count_learnable_closed_form(4)
    assert r.total == sum(r.per_order_counts) == 80
    assert r.saturation_order == 8
    assert count_learnable_closed_form(2, 2).total == 80
    assert count_learnable_closed_form(40).total == sum(count_learnable_closed_form(40).per_order_counts)
    with pytest.raises(ValueError):
        count_learnable_closed_form(0)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_quantum_count_within_envelope(L):
    r = count_learnable_closed_form(L, 1, "quantum")
    assert r.total <= r.upper_bound


def test_quantum_linear_reduction():
    # the linear reduction gives 85 spectra up to fourth order on four windows
    learn = enumerate_learnable(4, 1, "quantum", 4)
    assert len(learn) == 85
    k4_mu111 = [i for i in learn if i.k == 4 and i.mu == (1, 1, 1)]
    assert k4_mu111 == [S((4, 3, 2, 1), (1, 1, 1))]
    assert learnable_by_order(4, 1, "quantum") == [4, 16, 30, 35, 28, 15, 5, 1]


def test_linear_relations_hold_on_fresh_controls():
    cand = enumerate_learnable(3, 1, "quantum", 4, linear=False)
    lb = linear_basis(cand)
    assert lb.relations
    h, Ot = random_controls(1, 3, 10, seed=999)
    idx = list(lb.basis) + list(lb.relations)
    T = tensor_stack(h, Ot, idx)
    T = T * np.array([(-1j) ** i.k for i in idx])[None, :, None, None]
    col = {i: j for j, i in enumerate(idx)}
    for m, rel in lb.relations.items():
        rhs = sum(c * T[:, col[b]] for b, c in rel.items())
        assert np.allclose(T[:, col[m]], rhs, atol=1e-8)


def test_resource_ratio():
    assert resource_ratio(5, 5, 3) == 1
    assert resource_ratio(4, 40, 2) == pytest.approx(0.01)
    r = [resource_ratio(4, 40, k) for k in range(1, 6)]
    assert all(a > b for a, b in zip(r, r[1:]))


def test_bound_form_examples():
    grid = WindowGrid(3, 1.0)
    free = SpectrumTable({S((3, 2)): 0.5, S((2,)): 0.25}, grid=grid)
    assert bound_form(free).entries == free.entries
    swap = SpectrumTable({S((1, 1), (0,), (0, 1)): 0.3, S((1, 1), (0,), (1, 0)): 0.2}, grid=WindowGrid(1, 1.0))
    assert bound_form(swap, 2).entries == {S((1, 1), (0,), (0, 1)): pytest.approx(0.5)}
    dark = SpectrumTable({S((2, 2), (1,)): 1.0j, S((2, 1), (1,)): 0.1j}, grid=grid)
    assert S((2, 2), (1,)) not in bound_form(dark)


@pytest.mark.parametrize("K", [4, 6, 8])
def test_bound_form_preserves_predictions(K, rng):
    grid = WindowGrid(2, 0.5)
    m = NoiseModel(gamma=1.0, g=1.0)
    raw = exact_table(m, grid, all_indices(2, 1, "classical", K))
    b = bound_form(raw)
    learn = [i for i in enumerate_learnable(2, 1, "classical", K)]
    for _ in range(5):
        y = rng.normal(size=(2, 3))
        c = DigitalControl.from_vectors(y / np.linalg.norm(y, axis=1, keepdims=True))
        full = expectation(c, "X", "Y", raw, K)
        folded = expectation(c, "X", "Y", b, K, indices=learn)
        assert folded == pytest.approx(full, abs=1e-12)


def test_bound_form_preserves_quantum_predictions(rng):
    K = 4
    grid = WindowGrid(2, 0.5)
    m = NoiseModel(gamma=1.0, g=1.0, bath="toy", shift=0.5)
    raw = exact_table(m, grid, all_indices(2, 1, "quantum", K))
    b = bound_form(raw)
    learn = enumerate_learnable(2, 1, "quantum", K)
    assert set(b) == set(learn)
    for _ in range(5):
        y = rng.normal(size=(2, 3))
        c = DigitalControl.from_vectors(y / np.linalg.norm(y, axis=1, keepdims=True))
        assert expectation(c, "Z", "X", b, K, indices=learn) == pytest.approx(
            expectation(c, "Z", "X", raw, K), abs=1e-10)


def test_swap_pairs_share_design_coefficients(rng):
    L = 2
    pairs = []
    for i in all_indices(L, 2, "classical", 4):
        r = swap_representative(i)
        if r != i:
            pairs.append((i, r))
    assert pairs
    idx = [p for pair in pairs for p in pair]
    for _ in range(50):
        c = DigitalControl.from_kak(rng.uniform(-1, 1, (L, 15)))
        Ot = np.kron(np.diag([1, -1]), np.array([[0, 1], [1, 0]])).astype(complex)
        rho = np.kron(np.array([[0, -1j], [1j, 0]]), np.eye(2))
        row = coefficient_matrix(c.toggled[None], Ot[None], rho[None], idx)[0]
        assert np.allclose(row[0::2], row[1::2], atol=1e-10)


def test_resolver():
    res = make_resolver(1)
    assert res(S((2, 1, 1, 1))) == S((2, 1))
    assert res(S((1, 1), (1,))) == "dark"
    assert res(S((2, 1))) == S((2, 1))


def test_symmetry_report_counts():
    rep = symmetry_report(2)
    assert len(rep["classes"]) == 8
    assert rep["complexity"]["total"] == 8


@given(st.lists(st.integers(1, 3), min_size=1, max_size=6))
def test_representatives_are_streak_admissible(n):
    idx = S(tuple(sorted(n, reverse=True)))
    c = classify(idx)
    assert max_streak(c.representative.n) <= 2
