"""Bricklayer circuit with an absorbing state ``|0...0>``.

Layers alternate between even pairs ``(1,2), (3,4), ...`` and odd pairs
``(2,3), ..., (L,1)`` with periodic boundaries.  Every gate has the form
``1 (+) U(3)`` and so never moves weight out of ``|00>``.  After the gates of
a layer each site is, with probability ``p_m`` (fixed per circuit), measured
and flipped back to 0 if the outcome is 1.

Trajectories of one circuit are evolved together as the columns of a
``(2**L, n_traj)`` array.  A trajectory whose weight outside the absorbing
state falls below ``prune_tol`` is frozen at exactly ``|0...0>``; from then on
every measurement it would see has outcome 0 with certainty, so freezing only
drops an amplitude tail of norm below ``sqrt(prune_tol)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .bernoulli import InvariantError, TrajectoryRecord, _initial_index, _record_mask
from .bits import Observable, eigenvalues
from .ensembles import haar_unitaries
from .state import MAX_QUANTUM_L, NORM_TOL, PureState, diagonal_moments

__all__ = [
    "Z_ABSORBING",
    "AbsorbingCircuit",
    "AbsorbingRun",
    "absorbing_t_layers",
    "layer_pairs",
    "generate_absorbing_circuit",
    "run_absorbing_circuit",
    "run_absorbing_trajectory",
]

Z_ABSORBING = 1.6
PRUNE_TOL = 1e-14


def absorbing_t_layers(L: int, factor: float = 6.0, z: float = Z_ABSORBING) -> int:
    """``factor * L**z`` rounded up to an even number of layers."""
    t = math.ceil(factor * L**z)
    return t + (t % 2)


def layer_pairs(L: int, parity: int) -> list[tuple[int, int]]:
    """Site pairs (1-based) of an even (0) or odd (1) layer."""
    if parity == 0:
        return [(i, i + 1) for i in range(1, L, 2)]
    return [(i, i + 1) for i in range(2, L, 2)] + [(L, 1)]


@dataclass
class AbsorbingCircuit:
    L: int
    p_m: float
    u3: np.ndarray  # (t_layers, L/2, 3, 3) Haar blocks
    measure: np.ndarray  # (t_layers, L) bool, column i-1 is site i

    @property
    def t_layers(self) -> int:
        return int(self.measure.shape[0])

    @property
    def n_measurements(self) -> int:
        return int(self.measure.sum())

    def parity(self, layer: int) -> int:
        return layer % 2

    def gates(self, layer: int) -> np.ndarray:
        """Full ``4 x 4`` gates ``1 (+) U3`` of one layer."""
        g = np.zeros((self.L // 2, 4, 4), dtype=np.complex128)
        g[:, 0, 0] = 1.0
        g[:, 1:, 1:] = self.u3[layer]
        return g


def generate_absorbing_circuit(L: int, p_m: float, t_layers: int,
                               stream: np.random.Generator) -> AbsorbingCircuit:
    if L % 2 or L < 4:
        raise ValueError(f"L must be even and at least 4, got {L}")
    if L > MAX_QUANTUM_L:
        raise ValueError(f"L={L} exceeds the dense-state limit {MAX_QUANTUM_L}")
    if not 0.0 <= p_m <= 1.0:
        raise ValueError(f"p_m must lie in [0, 1], got {p_m}")
    if t_layers < 1:
        raise ValueError("t_layers must be at least 1")
    measure = stream.random((t_layers, L)) < p_m
    u3 = haar_unitaries(stream, t_layers * (L // 2), 3).reshape(t_layers, L // 2, 3, 3)
    return AbsorbingCircuit(L, float(p_m), u3, measure)


@dataclass
class AbsorbingRun:
    times: np.ndarray  # layer counts
    outcomes: np.ndarray  # (n_traj, n_measurements) int8
    moments: dict  # observable -> (mean (R, B), second (R, B))
    absorbed_at: np.ndarray  # (n_traj,) layer at which the trajectory was frozen, -1 if never
    final_states: np.ndarray | None = None  # (2**L, B)


def run_absorbing_circuit(circuit: AbsorbingCircuit, initial, uniforms: np.ndarray,
                          record_times, observables=(Observable.DEFECT_DENSITY,), *,
                          prune_tol: float | None = PRUNE_TOL,
                          keep_states: bool = False) -> AbsorbingRun:
    """Evolve ``uniforms.shape[0]`` trajectories of ``circuit`` together.

    ``uniforms[tau, j]`` decides the j-th measurement of the circuit (layers
    in order, sites in increasing order within a layer) for trajectory tau.
    ``initial`` is a basis index or bit string; ``None`` means all ones.
    Pass ``prune_tol=None`` to evolve every trajectory to the end.
    """
    L, T = circuit.L, circuit.t_layers
    N = 1 << L
    uniforms = np.asarray(uniforms, dtype=np.float64)
    B = uniforms.shape[0]
    if uniforms.shape != (B, circuit.n_measurements):
        raise ValueError(f"need uniforms of shape ({B}, {circuit.n_measurements})")
    times, mask = _record_mask(record_times, T)
    observables = [Observable(o) for o in observables]
    tables = {o: eigenvalues(o, L) for o in observables}
    n0 = N - 1 if initial is None else _initial_index(initial, L)

    psi = np.zeros((N, B), dtype=np.complex128)
    psi[n0] = 1.0
    active = np.arange(B)
    u_cols = np.ascontiguousarray(uniforms.T)
    outcomes = np.zeros((circuit.n_measurements, B), dtype=np.int8)
    absorbed_at = np.full(B, -1, dtype=np.int64)
    R = times.size
    mom = {o: (np.zeros((R, B)), np.zeros((R, B))) for o in observables}
    gates = [circuit.gates(t) for t in range(T)]
    pos = {par: [(L - a, L - b) for a, b in layer_pairs(L, par)] for par in (0, 1)}
    m_buf = np.zeros(B, dtype=np.int8)
    p_buf = np.zeros(B)
    r = j = 0

    def record(row):
        for o in observables:
            m1, m2 = diagonal_moments(psi, tables[o])
            mom[o][0][row, active], mom[o][1][row, active] = m1, m2

    if mask[0]:
        record(r)
        r += 1
    for t in range(T):
        if active.size:
            for g, (pa, pb) in zip(gates[t], pos[t % 2]):
                kernels.block_gate(psi, g, pa, pb)
        for site in np.flatnonzero(circuit.measure[t]) + 1:
            if active.size:
                nb = active.size
                u = np.ascontiguousarray(u_cols[j, active])
                kernels.measure_reset(psi, L - site, u, m_buf[:nb], p_buf[:nb])
                outcomes[j, active] = m_buf[:nb]
            j += 1
        if prune_tol is not None and active.size:
            # cheap screen on the vacuum amplitude, then an exact tail sum
            cand = np.flatnonzero(np.abs(psi[0]) ** 2 > 1.0 - 1e3 * prune_tol)
            if cand.size:
                tail = (np.abs(psi[1:, cand]) ** 2).sum(axis=0)
                done = cand[tail < prune_tol]
                if done.size:
                    absorbed_at[active[done]] = t + 1
                    keep = np.setdiff1d(np.arange(active.size), done)
                    psi = np.ascontiguousarray(psi[:, keep])
                    active = active[keep]
        if mask[t + 1]:
            if active.size:
                record(r)
            r += 1

    if active.size:
        norms = (np.abs(psi) ** 2).sum(axis=0)
        err = float(np.max(np.abs(norms - 1.0)))
        if err > NORM_TOL:
            raise InvariantError(f"norm drift {err:.3e} exceeds tolerance")
    # frozen trajectories sit exactly in the absorbing state
    run = AbsorbingRun(times, outcomes.T.copy(), mom, absorbed_at)
    if keep_states:
        full = np.zeros((N, B), dtype=np.complex128)
        full[0] = 1.0
        full[:, active] = psi
        run.final_states = full
    return run


def run_absorbing_trajectory(circuit: AbsorbingCircuit, initial, stream: np.random.Generator,
                             record_times, observables=(Observable.DEFECT_DENSITY,),
                             *, prune_tol: float | None = PRUNE_TOL) -> TrajectoryRecord:
    """Single trajectory; stream draws one uniform per measurement up front."""
    u = stream.random(circuit.n_measurements)[None, :]
    run = run_absorbing_circuit(circuit, initial, u, record_times, observables,
                                prune_tol=prune_tol, keep_states=True)
    moments = {o: (m[:, 0].copy(), s[:, 0].copy()) for o, (m, s) in run.moments.items()}
    final = PureState(run.final_states[:, 0].copy(), circuit.L, normalize=True)
    return TrajectoryRecord(run.times, run.outcomes[0], moments, final_state=final)
