"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--L 12] [--batch 50] [--repeat 20]

Both backends are checked to agree before anything is timed.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from cipt import _pykernels
from cipt.ensembles import PERM8_TABLE, block_1u3_unitaries, haar_unitaries

try:
    from cipt import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def _state(rng, N, B):
    psi = rng.standard_normal((N, B)) + 1j * rng.standard_normal((N, B))
    return psi / np.linalg.norm(psi, axis=0)


def cases(L: int, B: int, rng):
    N = 1 << L
    U4 = haar_unitaries(rng, 1, 4)[0]
    G = block_1u3_unitaries(rng, 1)[0]
    psi = _state(rng, N, B)
    u = rng.random(B)
    out = np.empty_like(psi)
    m = np.zeros(B, dtype=np.int8)
    pr = np.zeros(B)

    def bern(k):
        return lambda: k.bernoulli_step(psi, U4, out)

    def ctrl(k):
        return lambda: k.control_step(psi, u, out, m, pr)

    def block(k):
        w = psi.copy()
        return lambda: k.block_gate(w, G, L - 3, L - 4)

    def meas(k):
        w = psi.copy()
        # keep the state measurable by restoring it before each call
        def f():
            w[...] = psi
            k.measure_reset(w, L // 2, u, m, pr)
        return f

    C, T = 2000, 2 * L * L
    kinds = (rng.random((C, T)) < 0.5).astype(np.uint8)
    perms = rng.integers(0, len(PERM8_TABLE), size=(C, T)).astype(np.uint16)
    rec = np.zeros(T + 1, dtype=np.uint8)
    rec[-1] = 1
    cout = np.zeros((C, 1), dtype=np.uint64)
    n0 = np.full(C, 1 << (L // 2), dtype=np.uint64)

    def classical(k):
        return lambda: k.classical_evolve(n0, kinds, perms, PERM8_TABLE, L, rec, cout)

    return dict(bernoulli_step=bern, control_step=ctrl, block_gate=block,
                measure_reset=meas, classical_evolve=classical)


def check_agreement(L: int, B: int, seed: int = 1):
    rng = np.random.default_rng(seed)
    N = 1 << L
    psi = _state(rng, N, B)
    U4 = haar_unitaries(rng, 1, 4)[0]
    a, b = np.empty_like(psi), np.empty_like(psi)
    _pykernels.bernoulli_step(psi, U4, a)
    _ckernels.bernoulli_step(psi, U4, b)
    assert np.allclose(a, b, atol=1e-13)
    u = rng.random(B)
    m1, m2 = np.zeros(B, np.int8), np.zeros(B, np.int8)
    p1, p2 = np.zeros(B), np.zeros(B)
    _pykernels.control_step(psi, u, a, m1, p1)
    _ckernels.control_step(psi, u, b, m2, p2)
    assert np.array_equal(m1, m2) and np.allclose(a, b, atol=1e-13)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=12)
    ap.add_argument("--batch", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `python setup.py build_ext --inplace`")
    check_agreement(min(args.L, 10), 4)
    rng = np.random.default_rng(0)
    table = cases(args.L, args.batch, rng)
    print(f"L={args.L}  batch={args.batch}  (best of 3, mean per call)")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
    for name, make in table.items():
        n = max(1, args.repeat // (10 if name == "classical_evolve" else 1))
        tp = min(timeit.repeat(make(_pykernels), number=n, repeat=3)) / n
        tc = min(timeit.repeat(make(_ckernels), number=n, repeat=3)) / n
        print(f"{name:<18}{tp * 1e3:>12.3f}{tc * 1e3:>13.3f}{tp / tc:>9.1f}")


if __name__ == "__main__":
    main()
