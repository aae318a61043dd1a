"""Basis-index arithmetic for L-bit computational basis states.

Conventions
-----------
A basis index ``n`` in ``[0, 2**L)`` encodes the bit string ``b_1 b_2 ... b_L``
with ``b_1`` the most significant bit, so that ``x = n / 2**L``.  Sites are
numbered ``1..L`` from the left.
"""
from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np

__all__ = [
    "Observable",
    "check_index",
    "fdw_of_index",
    "magnetization_of_index",
    "defect_density_of_index",
    "bits_to_index",
    "index_to_bits",
    "rotate_left",
    "rotate_right",
    "eigenvalues",
]


class Observable(str, Enum):
    """Diagonal observables with state-independent eigenvalues."""

    FDW = "k"
    MAGNETIZATION = "Mz"
    DEFECT_DENSITY = "nd"

    def __call__(self, n: int, L: int) -> float:
        return _SCALAR[self](n, L)


def check_index(n: int, L: int) -> None:
    if L < 1:
        raise ValueError(f"site count must be positive, got L={L}")
    if n < 0 or n >= (1 << L):
        raise ValueError(f"basis index {n} outside [0, 2**{L})")


def fdw_of_index(n: int, L: int) -> int:
    """Position of the leftmost 1 counted from the right edge.

    Returns 0 for the all-zero string and ``floor(log2 n) + 1`` otherwise,
    so that ``2**(k-1) <= n < 2**k``.
    """
    check_index(n, L)
    return int(n).bit_length()


def magnetization_of_index(n: int, L: int) -> float:
    check_index(n, L)
    return (L - 2 * int(n).bit_count()) / L


def defect_density_of_index(n: int, L: int) -> float:
    check_index(n, L)
    return int(n).bit_count() / L


_SCALAR = {
    Observable.FDW: fdw_of_index,
    Observable.MAGNETIZATION: magnetization_of_index,
    Observable.DEFECT_DENSITY: defect_density_of_index,
}


def bits_to_index(bits) -> int:
    """Convert ``"0101"`` or a sequence of 0/1 (``b_1`` first) to an index."""
    if isinstance(bits, str):
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"not a bit string: {bits!r}")
        return int(bits, 2)
    n = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bits must be 0/1, got {b!r}")
        n = (n << 1) | int(b)
    return n


def index_to_bits(n: int, L: int) -> str:
    check_index(n, L)
    return format(n, f"0{L}b")


def rotate_left(n: int, L: int) -> int:
    """``|b_1 b_2 ... b_L> -> |b_2 ... b_L b_1>``."""
    return ((n << 1) & ((1 << L) - 1)) | (n >> (L - 1))


def rotate_right(n: int, L: int) -> int:
    """Inverse of :func:`rotate_left`."""
    return (n >> 1) | ((n & 1) << (L - 1))


def _popcount_table(L: int) -> np.ndarray:
    n = np.arange(1 << L, dtype=np.int64)
    counts = np.zeros_like(n)
    for i in range(L):
        counts += (n >> i) & 1
    return counts


@lru_cache(maxsize=64)
def _eigenvalues(kind: Observable, L: int) -> np.ndarray:
    if kind is Observable.FDW:
        n = np.arange(1 << L, dtype=np.int64)
        k = np.zeros(1 << L, dtype=np.float64)
        nz = n > 0
        # exact integer bit length, avoids log2 rounding at powers of two
        k[nz] = np.frexp(n[nz].astype(np.float64))[1]
        out = k
    elif kind is Observable.MAGNETIZATION:
        out = (L - 2 * _popcount_table(L)) / L
    elif kind is Observable.DEFECT_DENSITY:
        out = _popcount_table(L) / L
    else:  # pragma: no cover
        raise ValueError(kind)
    out = np.asarray(out, dtype=np.float64)
    out.setflags(write=False)
    return out


def eigenvalues(kind, L: int) -> np.ndarray:
    """Read-only table of eigenvalues of ``kind`` on every basis index."""
    return _eigenvalues(Observable(kind), L)
