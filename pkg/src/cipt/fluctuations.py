"""Nested circuit/trajectory estimators and the variance decomposition.

For an observable O with per-trajectory moments ``<O>`` and ``<O^2>``::

    total   = circuit + E_C[quantum]
    quantum = trajectory + E_m[state]

All variances are population variances (divide by the count), so both
identities hold exactly on any finite ensemble.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "EPSILON",
    "NestedSample",
    "FluctuationDecomposition",
    "ShotFluctuation",
    "Histogram",
    "decompose_variance",
    "decompose_samples",
    "order_parameter_zero_fluct",
    "shot_fluctuation",
    "histogram",
]

EPSILON = 1e-5
NEG_TOL = 1e-10


@dataclass(frozen=True)
class NestedSample:
    circuit: int
    trajectory: int
    mean: float  # <O> in the trajectory's state
    second: float  # <O^2>
    shots: np.ndarray | None = None

    def __post_init__(self):
        if self.second < self.mean * self.mean - NEG_TOL:
            raise ValueError(
                f"second moment {self.second!r} below squared mean {self.mean**2!r}")


@dataclass
class FluctuationDecomposition:
    sigma_total: float
    sigma_circuit: float
    mean_quantum: float  # E_C[sigma_Q]
    sigma_quantum: np.ndarray  # (C,)
    sigma_traj: np.ndarray  # (C,)
    mean_state: np.ndarray  # (C,)  E_m[sigma_s]
    state_var: np.ndarray  # (C, T) per-trajectory sigma_s, NaN where padded
    circuit_mean: np.ndarray  # (C,)  E_m[<O>]
    mean: float  # grand mean E_M[O]
    order_traj: float
    order_state: float
    order_quantum: float
    epsilon: float

    @property
    def n_circuits(self) -> int:
        return int(self.sigma_traj.size)

    def identity_residuals(self) -> tuple[float, float]:
        """Deviations of the two decomposition identities."""
        r1 = abs(self.sigma_total - self.sigma_circuit - self.mean_quantum)
        r2 = float(np.max(np.abs(self.sigma_quantum - self.sigma_traj - self.mean_state)))
        return float(r1), r2


def _clamp(values: np.ndarray) -> np.ndarray:
    if np.any(values < -NEG_TOL):
        raise ValueError(f"variance {values.min():.3e} is negative beyond tolerance")
    return np.maximum(values, 0.0)


def order_parameter_zero_fluct(values, epsilon: float = EPSILON, weights=None) -> float:
    """Fraction (or weighted fraction) of variances below ``epsilon``."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("no values to average")
    v = _clamp(v)
    if weights is None:
        return float(np.mean(v < epsilon))
    w = np.asarray(weights, dtype=np.float64).ravel()
    return float(np.sum(w * (v < epsilon)) / np.sum(w))


def decompose_variance(means, seconds=None, *, weights=None, epsilon: float = EPSILON,
                       min_circuits: int = 2, min_trajectories: int = 2
                       ) -> FluctuationDecomposition:
    """Three-level decomposition from per-trajectory moments.

    Parameters
    ----------
    means, seconds : array_like, shape (C, T)
        ``<O>`` and ``<O^2>`` for trajectory ``tau`` of circuit ``c``.
        ``seconds=None`` treats the states as sharp (``<O^2> = <O>^2``).
    weights : array_like, shape (C, T), optional
        Probability of each trajectory within its circuit; rows are
        normalised here.  Zero weights mark padding.  Default is uniform.
    min_trajectories : int
        Lower bound on T.  Classical ensembles, whose trajectories are all
        identical, are decomposed with ``min_trajectories=1``.
    """
    m = np.atleast_2d(np.asarray(means, dtype=np.float64))
    s = m * m if seconds is None else np.atleast_2d(np.asarray(seconds, dtype=np.float64))
    if s.shape != m.shape:
        raise ValueError(f"moment arrays differ in shape: {m.shape} vs {s.shape}")
    C, T = m.shape
    if C < min_circuits:
        raise ValueError(f"need at least {min_circuits} circuits, got {C}")
    if T < min_trajectories:
        raise ValueError(f"need at least {min_trajectories} trajectories per circuit, got {T}")
    if weights is None:
        w = np.full((C, T), 1.0 / T)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != m.shape or np.any(w < 0):
            raise ValueError("weights must be non-negative with the shape of the moments")
        w = w / w.sum(axis=1, keepdims=True)
    live = w > 0
    m = np.where(live, m, 0.0)
    s = np.where(live, s, 0.0)

    state = _clamp(np.where(live, s - m * m, 0.0))
    mu = np.sum(w * m, axis=1)
    traj = np.sum(w * (m - mu[:, None]) ** 2, axis=1)
    mean_state = np.sum(w * state, axis=1)
    quantum = traj + mean_state

    grand = float(mu.mean())
    sigma_c = float(np.mean((mu - grand) ** 2))
    # total straight from the sample moments, independent of the split above
    sigma_total = float(np.mean(np.sum(w * s, axis=1)) - grand * grand)

    return FluctuationDecomposition(
        sigma_total=sigma_total,
        sigma_circuit=sigma_c,
        mean_quantum=float(quantum.mean()),
        sigma_quantum=quantum,
        sigma_traj=traj,
        mean_state=mean_state,
        state_var=np.where(live, state, np.nan),
        circuit_mean=mu,
        mean=grand,
        order_traj=order_parameter_zero_fluct(traj, epsilon),
        order_state=order_parameter_zero_fluct(state[live], epsilon, w[live]),
        order_quantum=order_parameter_zero_fluct(quantum, epsilon),
        epsilon=float(epsilon),
    )


def decompose_samples(samples: Iterable[NestedSample], **kwargs) -> FluctuationDecomposition:
    """:func:`decompose_variance` over NestedSample records.

    Every circuit must carry the same number of trajectories.
    """
    samples = sorted(samples, key=lambda x: (x.circuit, x.trajectory))
    if not samples:
        raise ValueError("no samples")
    circuits = sorted({x.circuit for x in samples})
    index = {c: i for i, c in enumerate(circuits)}
    counts = np.bincount([index[x.circuit] for x in samples])
    if np.any(counts != counts[0]):
        raise ValueError("circuits carry different numbers of trajectories")
    m = np.array([x.mean for x in samples]).reshape(len(circuits), counts[0])
    s = np.array([x.second for x in samples]).reshape(len(circuits), counts[0])
    return decompose_variance(m, s, **kwargs)


@dataclass
class ShotFluctuation:
    sigma_quantum: np.ndarray  # (C,) pooled shot variance per circuit
    stderr: np.ndarray  # (C,) standard error of sigma_quantum
    circuit_mean: np.ndarray  # (C,)
    order_quantum: float
    n_shots: int  # per circuit
    epsilon: float


def shot_fluctuation(shots, epsilon: float = EPSILON) -> ShotFluctuation:
    """Quantum variance per circuit from final-time shots.

    ``shots`` has shape ``(C, T, S)``: S shots for each of T trajectories of
    C circuits (``(C, T)`` means one shot per trajectory).  Trajectories are
    equally likely samples of the circuit's outcome history, so the pooled
    variance of one circuit's shots estimates its quantum variance with no
    post-selection.  The standard error is conditional on the sampled
    trajectories when S > 1 and the plain i.i.d. error when S = 1.
    """
    x = np.asarray(shots, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.size == 0:
        raise ValueError("shots must have shape (C, T) or (C, T, S)")
    C, T, S = x.shape
    flat = x.reshape(C, T * S)
    mu = flat.mean(axis=1)
    dev2 = (x - mu[:, None, None]) ** 2
    var = dev2.mean(axis=(1, 2))
    if S > 1:
        err = np.sqrt(dev2.var(axis=2, ddof=1).sum(axis=1) / S) / T
    else:
        err = dev2.reshape(C, T).std(axis=1, ddof=1) / np.sqrt(T) if T > 1 else np.full(C, np.inf)
    return ShotFluctuation(var, err, mu, order_parameter_zero_fluct(var, epsilon), T * S, float(epsilon))


@dataclass
class Histogram:
    edges: np.ndarray  # (n_bins + 2,); the first bin is the zero bin [0, epsilon)
    mass: np.ndarray  # (n_bins + 1,), sums to 1
    epsilon: float

    @property
    def zero_mass(self) -> float:
        return float(self.mass[0])


def histogram(values, bins: int | Sequence[float] = 20, *, epsilon: float = EPSILON,
              range: tuple[float, float] | None = None, log: bool = False) -> Histogram:
    """Probability mass per bin with a dedicated zero bin ``[0, epsilon)``.

    Regular bins cover ``[max(lo, epsilon), hi]``; ``log=True`` spaces them
    logarithmically.  Values above the last edge are counted in the last bin.
    """
    v = _clamp(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("no values to histogram")
    if np.isscalar(bins):
        nb = int(bins)
        if nb < 1:
            raise ValueError("need at least one bin")
        lo, hi = range if range is not None else (epsilon, float(v.max()))
        lo = max(lo, epsilon)
        if not hi > lo:
            hi = lo * 10.0 if log else lo + 1.0
        edges = np.geomspace(lo, hi, nb + 1) if log else np.linspace(lo, hi, nb + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be a strictly increasing sequence")
        if edges[0] < epsilon:
            raise ValueError("explicit bin edges must start at or above epsilon")
    zero = v < epsilon
    counts = np.zeros(edges.size, dtype=np.float64)
    counts[0] = zero.sum()
    rest = v[~zero]
    idx = np.clip(np.searchsorted(edges, rest, side="right") - 1, 0, edges.size - 2)
    np.add.at(counts, idx + 1, 1.0)
    return Histogram(np.concatenate([[0.0], edges]), counts / v.size, float(epsilon))
