"""Dense pure states and the primitive operations acting on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bits import bits_to_index, check_index, eigenvalues

__all__ = [
    "MeasurementOutcome",
    "PureState",
    "new_product_state",
    "l1_coherence",
    "diagonal_moments",
    "NORM_TOL",
    "MAX_QUANTUM_L",
]

NORM_TOL = 1e-10
UNITARY_TOL = 1e-12
MAX_QUANTUM_L = 24


@dataclass(frozen=True)
class MeasurementOutcome:
    site: int
    outcome: int
    probability: float


def _check_unitary(U: np.ndarray) -> np.ndarray:
    U = np.ascontiguousarray(U, dtype=np.complex128)
    if U.shape != (4, 4):
        raise ValueError(f"two-qubit gate must be 4x4, got {U.shape}")
    err = np.abs(U.conj().T @ U - np.eye(4)).max()
    if err > UNITARY_TOL:
        raise ValueError(f"gate is not unitary (max deviation {err:.2e})")
    return U


class PureState:
    """State vector of ``L`` qubits; ``amplitudes[n]`` is the weight of ``|n>``.

    Mutating methods act in place and return ``self``.
    """

    __slots__ = ("L", "_psi")

    def __init__(self, amplitudes, L: int | None = None, *, normalize: bool = False):
        psi = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        if L is None:
            L = int(psi.size).bit_length() - 1
        if psi.size != 1 << L:
            raise ValueError(f"amplitude vector of length {psi.size} is not 2**{L}")
        if not 1 <= L <= MAX_QUANTUM_L:
            raise ValueError(f"dense states support 1 <= L <= {MAX_QUANTUM_L}")
        norm = np.linalg.norm(psi)
        if normalize:
            psi /= norm
        elif abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalised (norm {norm!r})")
        self.L = L
        self._psi = psi

    @property
    def amplitudes(self) -> np.ndarray:
        return self._psi

    def _batch(self) -> np.ndarray:
        return self._psi.reshape(-1, 1)

    def _site(self, i: int) -> int:
        if not 1 <= i <= self.L:
            raise ValueError(f"site {i} outside 1..{self.L}")
        return self.L - i  # bit position, LSB = 0

    def copy(self) -> "PureState":
        return PureState(self._psi.copy(), self.L)

    def norm(self) -> float:
        return float(np.linalg.norm(self._psi))

    def apply_cyclic_shift(self, direction: str = "left") -> "PureState":
        n = self._psi.size
        if direction == "left":
            self._psi = np.ascontiguousarray(self._psi.reshape(2, n // 2).T).reshape(n)
        elif direction == "right":
            self._psi = np.ascontiguousarray(self._psi.reshape(n // 2, 2).T).reshape(n)
        else:
            raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
        return self

    def apply_two_qubit_gate(self, U, site_a: int, site_b: int) -> "PureState":
        """Apply ``U`` in the ordered basis ``|b_{site_a} b_{site_b}>``."""
        if site_a == site_b:
            raise ValueError("gate sites must be distinct")
        U = _check_unitary(U)
        kernels.pair_gate(self._batch(), U, self._site(site_a), self._site(site_b))
        return self

    def measure_site(self, i: int, rng: np.random.Generator) -> MeasurementOutcome:
        """Born-rule projective measurement of site ``i`` in the Z basis."""
        pos = self._site(i)
        psi = self._psi.reshape(-1, 2, 1 << pos)
        w = psi.real**2 + psi.imag**2
        p0, p1 = float(w[:, 0].sum()), float(w[:, 1].sum())
        u = float(rng.random())
        if p0 + p1 <= 0.0:
            raise FloatingPointError("state has zero norm before measurement")
        if p1 < kernels._pykernels.CUTOFF:
            m = 0
        elif p0 < kernels._pykernels.CUTOFF:
            m = 1
        else:
            m = 0 if u * (p0 + p1) < p0 else 1
        pm = p1 if m else p0
        psi[:, 1 - m] = 0.0
        psi[:, m] /= np.sqrt(pm)
        # renormalisation guard against drift over long evolutions
        self._psi /= np.linalg.norm(self._psi)
        return MeasurementOutcome(i, m, pm / (p0 + p1))

    def apply_x(self, i: int) -> "PureState":
        pos = self._site(i)
        psi = self._psi.reshape(-1, 2, 1 << pos)
        psi[:, [0, 1]] = psi[:, [1, 0]]
        return self

    def probabilities(self) -> np.ndarray:
        return self._psi.real**2 + self._psi.imag**2

    def expect_diagonal(self, obs) -> tuple[float, float]:
        """Mean and second moment of a diagonal observable."""
        mean, second = diagonal_moments(self._batch(), eigenvalues(obs, self.L))
        return float(mean[0]), float(second[0])

    def sample_shot(self, rng: np.random.Generator) -> int:
        """Basis index drawn from the Born distribution; the state is unchanged."""
        cdf = np.cumsum(self.probabilities())
        return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), cdf.size - 1))

    def l1_coherence(self) -> float:
        return float(l1_coherence(self._batch())[0])

    def __repr__(self) -> str:
        return f"PureState(L={self.L})"


def new_product_state(bits, L: int | None = None) -> PureState:
    """Computational basis state from a bit string (``b_1`` first) or an index."""
    if isinstance(bits, (int, np.integer)):
        if L is None:
            raise ValueError("L is required when passing a basis index")
        n = int(bits)
    else:
        if L is not None and len(bits) != L:
            raise ValueError(f"bit string has length {len(bits)}, expected L={L}")
        L = len(bits)
        n = bits_to_index(bits)
    check_index(n, L)
    psi = np.zeros(1 << L, dtype=np.complex128)
    psi[n] = 1.0
    return PureState(psi, L)


def diagonal_moments(psi: np.ndarray, table: np.ndarray):
    """Column-wise ``(sum |z|^2 O, sum |z|^2 O^2)`` for a ``(2**L, B)`` batch."""
    w = psi.real**2 + psi.imag**2
    return table @ w, (table * table) @ w


def l1_coherence(psi: np.ndarray) -> np.ndarray:
    """Column-wise ``(sum_x |z_x|)^2 - 1`` for a ``(2**L, B)`` batch."""
    s = np.abs(psi).sum(axis=0)
    return s * s - 1.0
