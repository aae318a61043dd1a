"""numpy implementations of the inner loops, used when the extension is absent.

Every function mirrors the signature and semantics of ``cipt._ckernels``.
State batches are ``(2**L, B)`` arrays with one column per trajectory.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

CUTOFF = 1e-12


def _choose(p0: np.ndarray, p1: np.ndarray, u: np.ndarray) -> np.ndarray:
    tot = p0 + p1
    if np.any(tot <= 0.0):
        raise FloatingPointError("state has zero norm before measurement")
    m = (u * tot >= p0).astype(np.int8)
    m[(p0 < CUTOFF) & (p1 >= CUTOFF)] = 1
    m[p1 < CUTOFF] = 0
    return m


def bernoulli_step(psi, U, out):
    N, B = psi.shape
    # rows of the left-shifted state, grouped by the last two qubits
    rot = psi.reshape(2, N // 4, 2, B).transpose(1, 2, 0, 3).reshape(N // 4, 4, B)
    out[...] = np.matmul(np.asarray(U), rot).reshape(N, B)


def _measure(psi, mk, u):
    sel = (np.arange(psi.shape[0]) & mk) != 0
    w = psi.real**2 + psi.imag**2
    p1 = w[sel].sum(axis=0)
    p0 = w[~sel].sum(axis=0)
    m = _choose(p0, p1, np.asarray(u))
    pm = np.where(m == 1, p1, p0)
    return m, pm, p0 + p1


def control_step(psi, u, out, outcomes, probs):
    N, B = psi.shape
    m, pm, tot = _measure(psi, 1, u)
    pairs = psi.reshape(N // 2, 2, B)
    kept = np.where(m[None, :] == 1, pairs[:, 1, :], pairs[:, 0, :])
    out[: N // 2] = kept / np.sqrt(pm)[None, :]
    out[N // 2 :] = 0.0
    outcomes[:] = m
    probs[:] = pm / tot


@lru_cache(maxsize=256)
def _pair_indices(N: int, pos_a: int, pos_b: int) -> np.ndarray:
    ma, mb = 1 << pos_a, 1 << pos_b
    n = np.arange(N, dtype=np.int64)
    base = n[(n & (ma | mb)) == 0]
    idx = np.stack([base, base | mb, base | ma, base | ma | mb], axis=0)
    idx.setflags(write=False)
    return idx


def pair_gate(psi, U, pos_a, pos_b):
    idx = _pair_indices(psi.shape[0], int(pos_a), int(pos_b))
    psi[idx] = np.tensordot(np.asarray(U), psi[idx], axes=(1, 0))


def block_gate(psi, U, pos_a, pos_b):
    idx = _pair_indices(psi.shape[0], int(pos_a), int(pos_b))[1:]
    psi[idx] = np.tensordot(np.asarray(U)[1:, 1:], psi[idx], axes=(1, 0))


def measure_reset(psi, pos, u, outcomes, probs):
    mk = 1 << int(pos)
    m, pm, tot = _measure(psi, mk, u)
    v = psi.reshape(psi.shape[0] // (2 * mk), 2, mk, psi.shape[1])
    v[:, 0] = np.where(m == 1, v[:, 1], v[:, 0]) / np.sqrt(pm)
    v[:, 1] = 0.0
    outcomes[:] = m
    probs[:] = pm / tot


def classical_evolve(n0, kinds, perm_idx, table, L, record, out):
    kinds = np.asarray(kinds, dtype=bool)
    perm_idx = np.asarray(perm_idx)
    table = np.asarray(table, dtype=np.uint64)
    n = np.array(n0, dtype=np.uint64)
    mask = np.uint64((1 << L) - 1)
    one, seven, shift = np.uint64(1), np.uint64(7), np.uint64(L - 1)
    r = 0
    if record[0]:
        out[:, 0] = n
        r = 1
    for t in range(kinds.shape[1]):
        rot = ((n << one) & mask) | (n >> shift)
        scrambled = (rot & ~seven) | table[perm_idx[:, t], (rot & seven).astype(np.int64)]
        n = np.where(kinds[:, t], n >> one, scrambled)
        if record[t + 1]:
            out[:, r] = n
            r += 1
