import numpy as np
import pytest
from hypothesis import given, strategies as st

from cipt.bits import bits_to_index
from cipt.ensembles import haar_unitaries
from cipt.state import PureState, new_product_state

from conftest import random_state
from oracles import dense_gate


def test_product_state():
    s = new_product_state("0110")
    assert s.amplitudes[bits_to_index("0110")] == 1
    assert s.expect_diagonal("Mz") == (0.0, 0.0)
    assert s.l1_coherence() == 0.0


def test_requires_normalisation():
    with pytest.raises(ValueError):
        PureState(np.ones(4))
    assert abs(PureState(np.ones(4), normalize=True).norm() - 1) < 1e-15


def test_cyclic_shift_of_basis_state():
    s = new_product_state("1101")
    s.apply_cyclic_shift("left")
    assert abs(s.amplitudes[bits_to_index("1011")]) == 1
    s.apply_cyclic_shift("right")
    assert abs(s.amplitudes[bits_to_index("1101")]) == 1


@given(st.integers(2, 6), st.integers(0, 2**31))
def test_gate_matches_dense_matrix(L, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.choice(np.arange(1, L + 1), size=2, replace=False)
    U = haar_unitaries(rng, 1, 4)[0]
    psi = random_state(rng, L)
    s = PureState(psi.copy(), L).apply_two_qubit_gate(U, int(a), int(b))
    assert np.allclose(s.amplitudes, dense_gate(U, a, b, L) @ psi, atol=1e-12)


def test_measure_projects(rng):
    psi = random_state(rng, 5)
    s = PureState(psi, 5)
    out = s.measure_site(2, rng)
    w = s.probabilities().reshape(2, 2, 8)  # site 2 is the second axis
    assert w[:, 1 - out.outcome].sum() == 0
    assert abs(s.norm() - 1) < 1e-12


def test_measure_born_frequencies(rng):
    amp = np.array([np.sqrt(0.3), np.sqrt(0.7)])
    ones = sum(PureState(amp.copy(), 1).measure_site(1, rng).outcome for _ in range(20000))
    assert abs(ones / 20000 - 0.7) < 4 * np.sqrt(0.21 / 20000)


def test_apply_x():
    s = new_product_state("00").apply_x(1)
    assert abs(s.amplitudes[bits_to_index("10")]) == 1


def test_shot_does_not_collapse(rng):
    psi = random_state(rng, 4)
    s = PureState(psi.copy(), 4)
    s.sample_shot(rng)
    assert np.array_equal(s.amplitudes, psi)


def test_coherence_uniform_superposition():
    L = 6
    s = PureState(np.full(1 << L, 2 ** (-L / 2)), L)
    assert abs(s.l1_coherence() - (2**L - 1)) < 1e-9


def test_haar_coherence_small(rng):
    # (sum |z|)^2 / 2**L -> pi/4 for Haar states; finite-size correction is O(2**-L)
    L = 10
    psi = random_state(rng, L, 200)
    c = (np.abs(psi).sum(axis=0) ** 2 - 1) / 2**L
    assert abs(c.mean() - np.pi / 4) < 0.01
