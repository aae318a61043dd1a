"""Both kernel backends against each other and against dense references."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cipt import _pykernels
from cipt.ensembles import PERM8_TABLE, block_1u3_unitaries, haar_unitaries

from conftest import random_state

_ck = pytest.importorskip("cipt._ckernels")
BACKENDS = [_pykernels, _ck]

sizes = st.integers(3, 8)
seeds = st.integers(0, 2**31)


def ref_bernoulli(psi, U, L):
    # rotate left, then U on the last two sites
    N = 1 << L
    n = np.arange(N)
    rot = ((n << 1) & (N - 1)) | (n >> (L - 1))
    out = np.zeros_like(psi)
    out[rot] = psi
    v = out.reshape(N // 4, 4, -1)
    return np.einsum("ij,ajb->aib", U, v).reshape(psi.shape)


@pytest.mark.parametrize("k", BACKENDS, ids=["python", "cython"])
@given(L=sizes, B=st.integers(1, 5), seed=seeds)
def test_bernoulli_step(k, L, B, seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, L, B)
    U = haar_unitaries(rng, 1, 4)[0]
    out = np.empty_like(psi)
    k.bernoulli_step(psi, U, out)
    assert np.allclose(out, ref_bernoulli(psi, U, L), atol=1e-12)


@given(L=sizes, B=st.integers(1, 5), seed=seeds)
def test_control_step_backends_agree(L, B, seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, L, B)
    u = rng.random(B)
    res = []
    for k in BACKENDS:
        out = np.empty_like(psi)
        m, p = np.zeros(B, np.int8), np.zeros(B)
        k.control_step(psi, u, out, m, p)
        res.append((out, m, p))
    assert np.array_equal(res[0][1], res[1][1])
    assert np.allclose(res[0][0], res[1][0], atol=1e-13)
    assert np.allclose(res[0][2], res[1][2], atol=1e-13)
    out, m, p = res[1]
    # after control b_1 = 0: the upper half of every column is empty
    assert np.abs(out[(1 << L) // 2:]).max() <= 1e-12
    assert np.allclose(np.linalg.norm(out, axis=0), 1, atol=1e-12)


def test_control_step_probabilities(rng):
    L, B = 5, 3
    psi = random_state(rng, L, B)
    u = np.array([0.0, 0.5, 0.999999])
    for k in BACKENDS:
        out = np.empty_like(psi)
        m, p = np.zeros(B, np.int8), np.zeros(B)
        k.control_step(psi, u, out, m, p)
        w = np.abs(psi) ** 2
        p1 = w[1::2].sum(axis=0)
        assert np.allclose(p, np.where(m == 1, p1, 1 - p1))
        assert m[0] == 0 and m[2] == 1


@pytest.mark.parametrize("k", BACKENDS, ids=["python", "cython"])
@given(L=sizes, seed=seeds)
def test_pair_and_block_gate(k, L, seed):
    rng = np.random.default_rng(seed)
    a, b = (int(x) for x in rng.choice(L, size=2, replace=False))
    psi = random_state(rng, L, 3)
    U = haar_unitaries(rng, 1, 4)[0]
    G = block_1u3_unitaries(rng, 1)[0]
    ref = psi.copy()
    _pykernels.pair_gate(ref, U, a, b)
    got = psi.copy()
    k.pair_gate(got, U, a, b)
    assert np.allclose(got, ref, atol=1e-12)
    got = psi.copy()
    k.block_gate(got, G, a, b)
    ref = psi.copy()
    _pykernels.pair_gate(ref, G, a, b)
    assert np.allclose(got, ref, atol=1e-12)


@given(L=sizes, seed=seeds)
def test_measure_reset_backends_agree(L, seed):
    rng = np.random.default_rng(seed)
    pos = int(rng.integers(L))
    psi = random_state(rng, L, 4)
    u = rng.random(4)
    res = []
    for k in BACKENDS:
        w = psi.copy()
        m, p = np.zeros(4, np.int8), np.zeros(4)
        k.measure_reset(w, pos, u, m, p)
        res.append((w, m, p))
    assert np.array_equal(res[0][1], res[1][1])
    assert np.allclose(res[0][0], res[1][0], atol=1e-13)
    w = res[1][0].reshape(-1, 2, 1 << pos, 4)
    assert np.all(w[:, 1] == 0)  # the measured site is reset to 0


def test_vacuum_fixed_by_block_gate(rng):
    L = 6
    psi = np.zeros((1 << L, 2), dtype=complex)
    psi[0] = 1
    for k in BACKENDS:
        w = psi.copy()
        k.block_gate(w, block_1u3_unitaries(rng, 1)[0], 2, 3)
        assert np.array_equal(w, psi)


def test_classical_evolve_agree(rng):
    L, C, T = 10, 40, 60
    kinds = (rng.random((C, T)) < 0.4).astype(np.uint8)
    perms = rng.integers(0, len(PERM8_TABLE), size=(C, T)).astype(np.uint16)
    rec = np.ones(T + 1, dtype=np.uint8)
    n0 = rng.integers(0, 1 << L, size=C).astype(np.uint64)
    outs = []
    for k in BACKENDS:
        out = np.zeros((C, T + 1), dtype=np.uint64)
        k.classical_evolve(n0.copy(), kinds, perms, PERM8_TABLE, L, rec, out)
        outs.append(out)
    assert np.array_equal(outs[0], outs[1])
    # reference: explicit integer loop for one circuit
    n = int(n0[0])
    for t in range(T):
        if kinds[0, t]:
            n >>= 1
        else:
            r = ((n << 1) & ((1 << L) - 1)) | (n >> (L - 1))
            n = (r & ~7) | int(PERM8_TABLE[perms[0, t], r & 7])
        assert outs[0][0, t + 1] == n


def test_fallback_selected_by_env(monkeypatch):
    import importlib
    import cipt.kernels as kernels
    monkeypatch.setenv("CIPT_BACKEND", "python")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
        assert mod.bernoulli_step is _pykernels.bernoulli_step
    finally:
        monkeypatch.delenv("CIPT_BACKEND")
        importlib.reload(kernels)
