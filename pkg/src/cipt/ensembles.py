"""Reproducible randomness: seed tree, Haar unitaries and random permutations.

Streams are :class:`numpy.random.Generator` objects backed by PCG64 and seeded
through :class:`numpy.random.SeedSequence`.  A stream is addressed by the
master seed plus a derivation path; the path is hashed into the SeedSequence
``spawn_key`` so that

* identical ``(master, path)`` pairs give bit-identical streams, and
* distinct paths give statistically independent streams.

Path layout used by the drivers::

    circuit stream     (point..., "circuit", c)
    trajectory stream  (point..., "traj", c, tau)
    shot stream        (point..., "shot", c, tau, s)

where ``point`` identifies the sweep point (model, mode, L, p) so that circuits
at different sweep points are independent.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ROLES",
    "SeedTree",
    "derive_stream",
    "haar_unitaries",
    "sample_haar_2q",
    "sample_block_1u3",
    "block_1u3_unitaries",
    "sample_perm8",
    "PERM8_TABLE",
]

ROLES = {"point": 0, "circuit": 1, "traj": 2, "shot": 3}
_MASK64 = (1 << 64) - 1


def _path_words(path) -> list[int]:
    words = []
    for role, *idx in path:
        if role not in ROLES:
            raise ValueError(f"unknown role tag {role!r}; expected one of {sorted(ROLES)}")
        words.append(ROLES[role])
        for i in idx:
            if isinstance(i, str):
                i = int.from_bytes(hashlib.sha256(i.encode()).digest()[:4], "little")
            i = int(i)
            if i < 0:
                raise ValueError("path indices must be non-negative")
            # split into 32-bit words, SeedSequence's native word size
            words.extend([i & 0xFFFFFFFF, (i >> 32) & 0xFFFFFFFF, len(idx)])
    return words


@dataclass(frozen=True)
class SeedTree:
    """Master seed plus a derivation prefix shared by every stream it spawns."""

    master: int
    prefix: tuple = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.master) <= _MASK64:
            raise ValueError("master seed must be a 64-bit unsigned integer")
        _path_words(self.prefix)

    def child(self, *path) -> "SeedTree":
        return SeedTree(self.master, self.prefix + tuple(path))

    def at_point(self, *key) -> "SeedTree":
        """Subtree for one sweep point; ``key`` items may be ints or strings."""
        return self.child(("point", *key))

    def stream(self, *path) -> np.random.Generator:
        return derive_stream(self, path)

    def circuit(self, c: int) -> np.random.Generator:
        return self.stream(("circuit", c))

    def trajectory(self, c: int, tau: int) -> np.random.Generator:
        return self.stream(("traj", c, tau))

    def shot(self, c: int, tau: int, s: int = 0) -> np.random.Generator:
        return self.stream(("shot", c, tau, s))


def derive_stream(tree: SeedTree, path) -> np.random.Generator:
    """Deterministic PCG64 stream for ``tree.prefix + path``."""
    words = _path_words(tuple(tree.prefix) + tuple(path))
    ss = np.random.SeedSequence(entropy=int(tree.master), spawn_key=tuple(words))
    return np.random.Generator(np.random.PCG64(ss))


def haar_unitaries(stream: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """``count`` Haar-random ``dim x dim`` unitaries, shape ``(count, dim, dim)``.

    Ginibre matrix, QR factorisation, then the columns of Q are re-phased so
    that R has a positive real diagonal; this makes the map from Ginibre
    matrices to unitaries single valued and the output Haar distributed.
    """
    z = stream.standard_normal((count, dim, dim, 2))
    g = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    return q * ph[:, None, :]


def sample_haar_2q(stream: np.random.Generator) -> np.ndarray:
    return haar_unitaries(stream, 1, 4)[0]


def block_1u3_unitaries(stream: np.random.Generator, count: int) -> np.ndarray:
    """Unitaries ``1 (+) U(3)``: identity on ``|00>``, Haar on the rest."""
    u3 = haar_unitaries(stream, count, 3)
    out = np.zeros((count, 4, 4), dtype=np.complex128)
    out[:, 0, 0] = 1.0
    out[:, 1:, 1:] = u3
    return out


def sample_block_1u3(stream: np.random.Generator) -> np.ndarray:
    return block_1u3_unitaries(stream, 1)[0]


PERM8_TABLE = np.array(list(itertools.permutations(range(8))), dtype=np.uint8)
PERM8_TABLE.setflags(write=False)


def sample_perm8(stream: np.random.Generator, count: int | None = None) -> np.ndarray:
    """Uniform element(s) of S_8 as image arrays of the 8 three-bit states.

    One unbiased integer in ``[0, 8!)`` is drawn per permutation and decoded
    through the lexicographic table of all permutations.
    """
    if count is None:
        return PERM8_TABLE[int(stream.integers(len(PERM8_TABLE)))].copy()
    idx = stream.integers(len(PERM8_TABLE), size=count)
    return PERM8_TABLE[idx]
