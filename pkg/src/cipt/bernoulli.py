"""The Bernoulli circuit model in classical (bit string) and quantum (state vector) form.

A circuit is a frozen sequence of time steps.  Each step is a Control step
with probability ``p_ctrl`` and a Bernoulli step otherwise:

* Bernoulli: cyclic left shift of the register followed by a scrambler on the
  rightmost bits (a permutation of the last three bits in classical mode, a
  Haar two-qubit unitary on sites ``L-1, L`` in quantum mode).
* Control: measure site ``L``, flip it if the outcome is 1, then cyclic right
  shift.  The register afterwards always has ``b_1 = 0``.

All trajectories of one circuit share its gates, so quantum trajectories are
evolved together as the columns of a ``(2**L, n_traj)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .bits import Observable, bits_to_index, check_index, eigenvalues
from .ensembles import PERM8_TABLE, haar_unitaries
from .state import MAX_QUANTUM_L, NORM_TOL, PureState, diagonal_moments, l1_coherence

__all__ = [
    "MAX_CLASSICAL_L",
    "InvariantError",
    "Step",
    "CircuitRealization",
    "TrajectoryRecord",
    "CircuitRun",
    "generate_circuit",
    "step_classical",
    "step_quantum",
    "run_trajectory",
    "run_quantum_circuit",
    "run_classical_circuits",
    "fdw_initial_index",
    "classical_observable",
    "fdw_distribution",
]

MAX_CLASSICAL_L = 48


class InvariantError(RuntimeError):
    """A numerical invariant (norm, support, identity) was violated."""


class Step(NamedTuple):
    control: bool
    gate: np.ndarray | None  # Perm8 images (classical) or 4x4 unitary (quantum)


@dataclass
class CircuitRealization:
    L: int
    p_ctrl: float
    mode: str
    control: np.ndarray  # bool, shape (t_max,)
    scramblers: np.ndarray  # (n_bernoulli,) perm indices or (n_bernoulli, 4, 4) unitaries

    @property
    def t_max(self) -> int:
        return int(self.control.size)

    @property
    def n_control(self) -> int:
        return int(self.control.sum())

    @property
    def steps(self) -> list[Step]:
        out, j = [], 0
        for c in self.control:
            if c:
                out.append(Step(True, None))
            else:
                g = self.scramblers[j]
                out.append(Step(False, PERM8_TABLE[g] if self.mode == "classical" else g))
                j += 1
        return out

    def perm_index_row(self) -> np.ndarray:
        """Per-step Perm8 index (0 on Control steps) for the classical kernel."""
        row = np.zeros(self.t_max, dtype=np.uint16)
        row[~self.control] = self.scramblers
        return row


def _check_mode(mode: str) -> str:
    if mode not in ("classical", "quantum"):
        raise ValueError(f"mode must be 'classical' or 'quantum', got {mode!r}")
    return mode


def generate_circuit(L: int, p_ctrl: float, t_max: int, mode: str,
                     stream: np.random.Generator) -> CircuitRealization:
    _check_mode(mode)
    if not 0.0 <= p_ctrl <= 1.0:
        raise ValueError(f"p_ctrl must lie in [0, 1], got {p_ctrl}")
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    cap = MAX_CLASSICAL_L if mode == "classical" else MAX_QUANTUM_L
    if not 4 <= L <= cap:
        raise ValueError(f"{mode} mode supports 4 <= L <= {cap}, got {L}")
    control = stream.random(t_max) < p_ctrl
    nb = int((~control).sum())
    if mode == "classical":
        scr = stream.integers(len(PERM8_TABLE), size=nb).astype(np.uint16)
    else:
        scr = haar_unitaries(stream, nb, 4)
    return CircuitRealization(L, float(p_ctrl), mode, control, scr)


def step_classical(n: int, step: Step, L: int) -> tuple[int, int | None]:
    if step.control:
        return n >> 1, n & 1
    n = ((n << 1) & ((1 << L) - 1)) | (n >> (L - 1))
    return (n & ~7) | int(step.gate[n & 7]), None


def step_quantum(state: PureState, step: Step,
                 stream: np.random.Generator) -> tuple[PureState, int | None]:
    L = state.L
    if step.control:
        out = state.measure_site(L, stream)
        if out.outcome:
            state.apply_x(L)
        state.apply_cyclic_shift("right")
        return state, out.outcome
    state.apply_cyclic_shift("left")
    state.apply_two_qubit_gate(step.gate, L - 1, L)
    return state, None


def fdw_initial_index(L: int, k: int) -> int:
    """Basis index ``0^(L-k) 1 0^(k-1)``: FDW at ``k`` with zeros to its right."""
    if not 0 <= k <= L:
        raise ValueError(f"FDW position {k} outside [0, {L}]")
    return 0 if k == 0 else 1 << (k - 1)


def _initial_index(initial, L: int) -> int:
    if isinstance(initial, (int, np.integer)):
        n = int(initial)
    else:
        if len(initial) != L:
            raise ValueError(f"initial bits have length {len(initial)}, expected {L}")
        n = bits_to_index(initial)
    check_index(n, L)
    return n


def _record_mask(record_times, t_max: int) -> tuple[np.ndarray, np.ndarray]:
    times = np.unique(np.asarray(list(record_times), dtype=np.int64))
    if times.size == 0:
        raise ValueError("at least one record time is required")
    if times[0] < 0 or times[-1] > t_max:
        raise ValueError(f"record times must lie in [0, {t_max}]")
    mask = np.zeros(t_max + 1, dtype=np.uint8)
    mask[times] = 1
    return times, mask


def fdw_distribution(probs: np.ndarray, L: int, axis: int = -1) -> np.ndarray:
    """Weight on each FDW position ``k = 0..L`` along ``axis``.

    Indices with a given FDW form the contiguous block ``[2**(k-1), 2**k)``.
    """
    starts = np.concatenate([[0], 1 << np.arange(L)])
    return np.add.reduceat(probs, starts, axis=axis)


@dataclass
class TrajectoryRecord:
    """One trajectory of one circuit."""

    times: np.ndarray
    outcomes: np.ndarray  # one bit per Control step
    moments: dict  # observable -> (mean over times, second moment over times)
    coherence: np.ndarray | None = None
    final_index: int | None = None  # classical mode
    final_state: PureState | None = None  # quantum mode


@dataclass
class CircuitRun:
    """All trajectories of one quantum circuit, stacked along the first axis."""

    times: np.ndarray
    outcomes: np.ndarray  # (n_traj, n_control) int8
    probabilities: np.ndarray  # (n_traj, n_control) Born probability of each outcome
    moments: dict  # observable -> (mean (R, B), second (R, B))
    coherence: np.ndarray | None = None  # (R, B)
    fdw_dist: np.ndarray | None = None  # (B, L+1) at final time
    bit_dist: np.ndarray | None = None  # (2**L,) trajectory mean at final time
    shots: dict = field(default_factory=dict)  # observable -> (B, n_shots)
    final_states: np.ndarray | None = None  # (2**L, B), one column per trajectory


def run_quantum_circuit(circuit: CircuitRealization, initial, uniforms: np.ndarray,
                        record_times, observables=(Observable.FDW, Observable.MAGNETIZATION),
                        *, coherence: bool = False, distributions: bool = False,
                        shot_uniforms: np.ndarray | None = None,
                        keep_states: bool = False) -> CircuitRun:
    """Evolve ``uniforms.shape[0]`` trajectories of ``circuit`` together.

    ``uniforms[tau, j]`` decides the outcome of the j-th Control step of
    trajectory ``tau``; ``shot_uniforms[tau, s]`` draws final-time shots.
    """
    if circuit.mode != "quantum":
        raise ValueError("run_quantum_circuit needs a quantum-mode circuit")
    L, T = circuit.L, circuit.t_max
    uniforms = np.asarray(uniforms, dtype=np.float64)
    B = uniforms.shape[0]
    if uniforms.shape != (B, circuit.n_control):
        raise ValueError(f"need uniforms of shape ({B}, {circuit.n_control})")
    times, mask = _record_mask(record_times, T)
    observables = [Observable(o) for o in observables]
    tables = {o: eigenvalues(o, L) for o in observables}

    n0 = _initial_index(initial, L)
    N = 1 << L
    psi = np.zeros((N, B), dtype=np.complex128)
    psi[n0] = 1.0
    buf = np.empty_like(psi)
    u_cols = np.ascontiguousarray(uniforms.T)
    outcomes = np.zeros((circuit.n_control, B), dtype=np.int8)
    probs = np.zeros((circuit.n_control, B), dtype=np.float64)
    gates = np.ascontiguousarray(circuit.scramblers)

    R = times.size
    mom = {o: (np.empty((R, B)), np.empty((R, B))) for o in observables}
    coh = np.empty((R, B)) if coherence else None
    r = 0

    def record(row):
        for o in observables:
            m1, m2 = diagonal_moments(psi, tables[o])
            mom[o][0][row], mom[o][1][row] = m1, m2
        if coh is not None:
            coh[row] = l1_coherence(psi)

    if mask[0]:
        record(r)
        r += 1
    jc = jb = 0
    for t in range(T):
        if circuit.control[t]:
            kernels.control_step(psi, u_cols[jc], buf, outcomes[jc], probs[jc])
            jc += 1
        else:
            kernels.bernoulli_step(psi, gates[jb], buf)
            jb += 1
        psi, buf = buf, psi
        if mask[t + 1]:
            record(r)
            r += 1

    norms = (psi.real**2 + psi.imag**2).sum(axis=0)
    if np.max(np.abs(norms - 1.0)) > NORM_TOL:
        raise InvariantError(f"norm drift {np.max(np.abs(norms - 1.0)):.3e} exceeds tolerance")

    run = CircuitRun(times, outcomes.T.copy(), probs.T.copy(), mom, coh)
    if distributions or shot_uniforms is not None:
        w = psi.real**2 + psi.imag**2
        if distributions:
            run.fdw_dist = fdw_distribution(w, L, axis=0).T.copy()
            run.bit_dist = w.mean(axis=1)
        if shot_uniforms is not None:
            idx = _sample_indices(w, np.asarray(shot_uniforms, dtype=np.float64))
            run.shots = {o: tables[o][idx] for o in observables}
    if keep_states:
        run.final_states = psi
    return run


def _sample_indices(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    # w is (2**L, B); u is (B, n_shots)
    cdf = np.cumsum(w, axis=0)
    out = np.empty(u.shape, dtype=np.int64)
    for b in range(w.shape[1]):
        out[b] = np.searchsorted(cdf[:, b], u[b] * cdf[-1, b], side="right")
    np.minimum(out, w.shape[0] - 1, out=out)
    return out


def classical_observable(n: np.ndarray, obs, L: int) -> np.ndarray:
    """Eigenvalues for arrays of basis indices, valid up to ``L = 48``."""
    obs = Observable(obs)
    n = np.asarray(n, dtype=np.uint64)
    if obs is Observable.FDW:
        k = np.frexp(n.astype(np.float64))[1].astype(np.float64)
        return np.where(n == 0, 0.0, k)
    pop = np.bitwise_count(n).astype(np.float64)
    if obs is Observable.MAGNETIZATION:
        return (L - 2.0 * pop) / L
    return pop / L


def run_classical_circuits(circuits, initial, record_times) -> tuple[np.ndarray, np.ndarray]:
    """Evolve a list of classical circuits of equal ``L`` and ``t_max``.

    Returns ``(times, states)`` with ``states`` of shape ``(n_circuits, R)``.
    """
    if not circuits:
        raise ValueError("no circuits given")
    L, T = circuits[0].L, circuits[0].t_max
    for c in circuits:
        if c.mode != "classical" or c.L != L or c.t_max != T:
            raise ValueError("circuits must all be classical with equal L and t_max")
    times, mask = _record_mask(record_times, T)
    n0 = _initial_index(initial, L)
    kinds = np.ascontiguousarray(np.stack([c.control for c in circuits]).astype(np.uint8))
    perms = np.ascontiguousarray(np.stack([c.perm_index_row() for c in circuits]))
    out = np.zeros((len(circuits), times.size), dtype=np.uint64)
    start = np.full(len(circuits), n0, dtype=np.uint64)
    kernels.classical_evolve(start, kinds, perms, PERM8_TABLE, L, mask, out)
    return times, out


def run_trajectory(circuit: CircuitRealization, initial, stream: np.random.Generator,
                   record_times, observables=(Observable.FDW, Observable.MAGNETIZATION),
                   *, coherence: bool = False) -> TrajectoryRecord:
    """Single trajectory; stream draws one uniform per Control step up front."""
    observables = [Observable(o) for o in observables]
    if circuit.mode == "classical":
        times, states = run_classical_circuits([circuit], initial, record_times)
        n = states[0]
        outcomes = _classical_outcomes(circuit, _initial_index(initial, circuit.L))
        moments = {}
        for o in observables:
            v = classical_observable(n, o, circuit.L)
            moments[o] = (v, v * v)
        coh = np.zeros(times.size) if coherence else None
        return TrajectoryRecord(times, outcomes, moments, coh, final_index=int(n[-1]))
    u = stream.random(circuit.n_control)[None, :]
    run = run_quantum_circuit(circuit, initial, u, record_times, observables,
                              coherence=coherence, keep_states=True)
    moments = {o: (m[:, 0].copy(), s[:, 0].copy()) for o, (m, s) in run.moments.items()}
    coh = run.coherence[:, 0].copy() if coherence else None
    final = PureState(run.final_states[:, 0].copy(), circuit.L, normalize=True)
    return TrajectoryRecord(run.times, run.outcomes[0], moments, coh, final_state=final)


def _classical_outcomes(circuit: CircuitRealization, n: int) -> np.ndarray:
    out = []
    for step in circuit.steps:
        n, m = step_classical(n, step, circuit.L)
        if m is not None:
            out.append(m)
    return np.array(out, dtype=np.int8)
