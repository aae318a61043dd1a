"""Sweep driver: configuration, deterministic parallel execution and CSV output.

Configuration files are flat ``key = value`` documents; ``#`` starts a
comment and list values are comma separated::

    model = bernoulli        # bernoulli | absorbing
    mode = quantum           # classical | quantum
    sizes = 8, 10, 12
    probs = 0.4, 0.45, 0.5
    circuits = 100
    trajectories = 50

Every key of :class:`ExperimentConfig` is accepted (``circuits`` and
``trajectories`` are aliases of ``n_circuits`` and ``n_trajectories``).

A sweep is split into work units of one circuit with all of its trajectories
(quantum) or a fixed block of circuits (classical).  Each unit draws its
randomness from the seed tree at ``(model, mode, L, p)``, so the merged
output does not depend on the number of workers or on scheduling.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .absorbing import absorbing_t_layers, generate_absorbing_circuit, run_absorbing_circuit
from .bernoulli import (MAX_CLASSICAL_L, InvariantError, classical_observable,
                        fdw_initial_index, generate_circuit, run_classical_circuits,
                        run_quantum_circuit)
from .bits import Observable
from .ensembles import SeedTree
from .fluctuations import EPSILON, decompose_variance, order_parameter_zero_fluct, shot_fluctuation
from .state import MAX_QUANTUM_L

__all__ = [
    "ConfigError",
    "InvariantError",
    "ExperimentConfig",
    "PointResult",
    "load_config",
    "parse_config",
    "run_sweep",
    "run",
    "summarize_point",
    "circuit_statistic",
    "read_table",
    "config_from_manifest",
    "RAW_COLUMNS",
    "SUMMARY_COLUMNS",
    "CIRCUIT_COLUMNS",
    "DISTRIBUTION_COLUMNS",
    "SHOT_COLUMNS",
]

CLASSICAL_BLOCK = 500  # circuits per classical work unit

SUMMARY_COLUMNS = [
    "model", "mode", "L", "p", "observable", "t", "n_circuits", "n_trajectories",
    "mean", "mean_stderr", "sigma_total", "sigma_circuit", "mean_sigma_quantum",
    "mean_sigma_traj", "mean_sigma_state", "order_traj", "order_state", "order_quantum",
    "shot_sigma_quantum", "shot_sigma_quantum_stderr", "order_quantum_shots",
    "coherence_mean", "coherence_stderr", "absorbed_fraction",
]
CIRCUIT_COLUMNS = [
    "L", "p", "observable", "circuit", "circuit_mean", "sigma_traj", "mean_sigma_state",
    "sigma_quantum", "state_zero_fraction", "shot_sigma_quantum", "shot_stderr",
    "coherence_mean",
]
DISTRIBUTION_COLUMNS = ["L", "p", "k", "weight", "stderr"]
SHOT_COLUMNS = ["L", "p", "circuit", "trajectory", "shot"]  # + one column per observable


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _default_observables(model: str) -> tuple[str, ...]:
    return ("nd",) if model == "absorbing" else ("k", "Mz")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "bernoulli"
    mode: str = "quantum"
    sizes: tuple = (8,)
    probs: tuple = (0.5,)
    n_circuits: int = 10
    n_trajectories: int = 10
    n_shots: int = 0  # final-time shots per trajectory
    time_factor: float | None = None  # t = factor * L**2 (bernoulli) or factor * L**1.6 layers
    record: str = "final"  # final | window
    observables: tuple | None = None
    initial: str | None = None  # fdw:<k> | fdw:half | index:<n> | bits:<b1...bL> | ones
    coherence: bool = True  # quantum bernoulli only
    seed: int = 0
    epsilon: float = EPSILON
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        obs = self.observables or _default_observables(self.model)
        object.__setattr__(self, "observables", tuple(Observable(o).value for o in obs))
        object.__setattr__(self, "sizes", tuple(int(x) for x in self.sizes))
        object.__setattr__(self, "probs", tuple(float(x) for x in self.probs))
        if self.mode == "classical" and self.n_trajectories != 1:
            # every trajectory of a classical circuit is identical
            object.__setattr__(self, "n_trajectories", 1)
        if self.initial is None:
            # FDW at k=1 for the Bernoulli sweeps, fully seeded for the absorbing model
            object.__setattr__(self, "initial", "ones" if self.model == "absorbing" else "fdw:1")
        self.validate()

    def validate(self) -> None:
        if self.model not in ("bernoulli", "absorbing"):
            raise ConfigError(f"model must be bernoulli or absorbing, got {self.model!r}")
        if self.mode not in ("classical", "quantum"):
            raise ConfigError(f"mode must be classical or quantum, got {self.mode!r}")
        if self.model == "absorbing" and self.mode != "quantum":
            raise ConfigError("the absorbing model runs in quantum mode only")
        if not self.sizes or not self.probs:
            raise ConfigError("sizes and probs must be non-empty")
        cap = MAX_QUANTUM_L if self.mode == "quantum" else MAX_CLASSICAL_L
        for L in self.sizes:
            if not 4 <= L <= cap:
                raise ConfigError(f"{self.mode} mode supports 4 <= L <= {cap}, got {L}")
            if self.model == "absorbing" and L % 2:
                raise ConfigError(f"the absorbing model needs even L, got {L}")
        for p in self.probs:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probabilities must lie in [0, 1], got {p}")
        if self.n_circuits < 1 or self.n_trajectories < 1 or self.n_shots < 0:
            raise ConfigError("need n_circuits >= 1, n_trajectories >= 1, n_shots >= 0")
        if self.n_shots and (self.model != "bernoulli" or self.mode != "quantum"):
            raise ConfigError("shots are supported for the quantum Bernoulli model only")
        if self.record not in ("final", "window"):
            raise ConfigError(f"record must be final or window, got {self.record!r}")
        if self.time_factor is not None and not self.time_factor > 0:
            raise ConfigError("time_factor must be positive")
        if self.model == "absorbing" and self.observables != ("nd",):
            raise ConfigError("the absorbing model records the defect density 'nd' only")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for L in self.sizes:
            self.initial_index(L)

    # -- derived quantities

    def t_max(self, L: int) -> int:
        if self.model == "absorbing":
            return absorbing_t_layers(L, 6.0 if self.time_factor is None else self.time_factor)
        return int(math.ceil((2.0 if self.time_factor is None else self.time_factor) * L * L))

    def record_times(self, L: int) -> np.ndarray:
        T = self.t_max(L)
        if self.record == "final":
            return np.array([T])
        # the second half of the run, [L**2, 2 L**2] for the default Bernoulli time
        return np.arange(T // 2, T + 1)

    def initial_index(self, L: int) -> int:
        spec = self.initial.strip()
        try:
            if spec == "ones":
                return (1 << L) - 1
            kind, _, val = spec.partition(":")
            if kind == "fdw":
                return fdw_initial_index(L, L // 2 if val == "half" else int(val))
            if kind == "index":
                n = int(val)
                if not 0 <= n < (1 << L):
                    raise ValueError(f"index {n} outside [0, 2**{L})")
                return n
            if kind == "bits":
                if len(val) != L or set(val) - {"0", "1"}:
                    raise ValueError(f"bit string must have {L} characters 0/1")
                return int(val, 2)
        except ValueError as err:
            raise ConfigError(f"bad initial state {spec!r} for L={L}: {err}") from None
        raise ConfigError(f"unknown initial state {spec!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"], d["probs"], d["observables"] = list(self.sizes), list(self.probs), list(self.observables)
        return d

    def content_hash(self) -> str:
        """Git blob hash of the canonical config (output location excluded)."""
        d = self.to_dict()
        d.pop("out"), d.pop("workers")
        d["version"] = __version__
        body = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


_ALIASES = {"circuits": "n_circuits", "trajectories": "n_trajectories", "shots": "n_shots"}
_LISTS = {"sizes": int, "probs": float, "observables": str}


def _coerce(key: str, value):
    if key in _LISTS:
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return tuple(_LISTS[key](v) for v in value)
    if key in ("n_circuits", "n_trajectories", "n_shots", "seed", "workers"):
        return int(value)
    if key in ("epsilon", "time_factor"):
        return None if value in (None, "", "none", "auto") else float(value)
    if key == "coherence":
        if isinstance(value, str):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {value!r}")
            return value.lower() in ("true", "1", "yes")
        return bool(value)
    return str(value).strip()


def parse_config(text: str = "", **overrides) -> ExperimentConfig:
    """Build a config from key-value text; keyword overrides take precedence."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None)
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as err:
        raise ConfigError(f"unreadable config: {err}") from None
    raw = dict(cp["config"])
    raw.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(ExperimentConfig)}
    kw = {}
    for key, value in raw.items():
        key = _ALIASES.get(key, key)
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kw[key] = _coerce(key, value)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for {key}: {err}") from None
    try:
        return ExperimentConfig(**kw)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from None


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


# ---------------------------------------------------------------- work units

def _p_key(p: float) -> int:
    return int(round(p * 1_000_000))


def _point_tree(cfg: ExperimentConfig, L: int, p: float) -> SeedTree:
    return SeedTree(cfg.seed).at_point(cfg.model, cfg.mode, L, _p_key(p))


def _digest(bits: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(bits, dtype=np.int8).tobytes(),
                           digest_size=8).hexdigest()


def _units(cfg: ExperimentConfig):
    for L in cfg.sizes:
        for p in cfg.probs:
            if cfg.mode == "classical":
                for c0 in range(0, cfg.n_circuits, CLASSICAL_BLOCK):
                    yield L, p, c0, min(c0 + CLASSICAL_BLOCK, cfg.n_circuits)
            else:
                for c in range(cfg.n_circuits):
                    yield L, p, c, c + 1


def _unit_quantum_bernoulli(cfg, L, p, c):
    tree = _point_tree(cfg, L, p)
    T, B = cfg.t_max(L), cfg.n_trajectories
    circ = generate_circuit(L, p, T, "quantum", tree.circuit(c))
    u = np.stack([tree.trajectory(c, tau).random(circ.n_control) for tau in range(B)])
    su = None
    if cfg.n_shots:
        su = np.stack([tree.shot(c, tau).random(cfg.n_shots) for tau in range(B)])
    run = run_quantum_circuit(circ, cfg.initial_index(L), u, cfg.record_times(L),
                              cfg.observables, coherence=cfg.coherence, distributions=True,
                              shot_uniforms=su)
    out = dict(
        times=run.times,
        moments={o.value: (m.T[None], s.T[None]) for o, (m, s) in run.moments.items()},
        coherence=None if run.coherence is None else run.coherence.T[None],
        digests=[[_digest(run.outcomes[tau]) for tau in range(B)]],
        fdw=run.fdw_dist.mean(axis=0)[None],
        shots={o.value: v[None] for o, v in run.shots.items()},
        absorbed=None,
    )
    return out


def _unit_absorbing(cfg, L, p, c):
    tree = _point_tree(cfg, L, p)
    T, B = cfg.t_max(L), cfg.n_trajectories
    circ = generate_absorbing_circuit(L, p, T, tree.circuit(c))
    u = np.stack([tree.trajectory(c, tau).random(circ.n_measurements) for tau in range(B)])
    run = run_absorbing_circuit(circ, cfg.initial_index(L), u, cfg.record_times(L),
                                observables=cfg.observables)
    return dict(
        times=run.times,
        moments={o.value: (m.T[None], s.T[None]) for o, (m, s) in run.moments.items()},
        coherence=None,
        digests=[[_digest(run.outcomes[tau]) for tau in range(B)]],
        fdw=None,
        shots={},
        absorbed=(run.absorbed_at >= 0)[None],
    )


def _unit_classical(cfg, L, p, c0, c1):
    tree = _point_tree(cfg, L, p)
    T = cfg.t_max(L)
    circuits = [generate_circuit(L, p, T, "classical", tree.circuit(c)) for c in range(c0, c1)]
    n0 = cfg.initial_index(L)
    # every state is kept so the control outcomes (the last bit before each
    # Control step) can be digested; only the requested times are reported
    _, states = run_classical_circuits(circuits, n0, range(T + 1))
    times = cfg.record_times(L)
    sel = states[:, times]
    control = np.stack([ci.control for ci in circuits])
    before = states[:, :-1]
    digests = [[_digest((before[i][control[i]] & np.uint64(1)).astype(np.int8))]
               for i in range(len(circuits))]
    moments = {}
    for o in cfg.observables:
        v = classical_observable(sel, o, L)[:, None, :]
        moments[o] = (v, v * v)
    k_final = classical_observable(sel[:, -1], Observable.FDW, L).astype(np.int64)
    fdw = np.zeros((len(circuits), L + 1))
    fdw[np.arange(len(circuits)), k_final] = 1.0
    return dict(times=times, moments=moments, coherence=None, digests=digests, fdw=fdw,
                shots={}, absorbed=None)


def _run_unit(args):
    cfg, L, p, c0, c1 = args
    if cfg.mode == "classical":
        return _unit_classical(cfg, L, p, c0, c1)
    if cfg.model == "absorbing":
        return _unit_absorbing(cfg, L, p, c0)
    return _unit_quantum_bernoulli(cfg, L, p, c0)


@dataclass
class PointResult:
    """All samples of one sweep point, circuits along the first axis."""

    L: int
    p: float
    times: np.ndarray
    moments: dict  # observable -> (mean (C, T, R), second (C, T, R))
    digests: list  # (C, T) outcome digests
    coherence: np.ndarray | None = None  # (C, T, R)
    fdw: np.ndarray | None = None  # (C, L+1) trajectory-averaged final FDW weights
    shots: dict = field(default_factory=dict)  # observable -> (C, T, S)
    absorbed: np.ndarray | None = None  # (C, T) frozen in the absorbing state


def _merge(L, p, parts) -> PointResult:
    cat = lambda xs: None if xs[0] is None else np.concatenate(xs, axis=0)
    first = parts[0]
    moments = {o: (cat([q["moments"][o][0] for q in parts]), cat([q["moments"][o][1] for q in parts]))
               for o in first["moments"]}
    return PointResult(
        L=L, p=p, times=first["times"], moments=moments,
        digests=[row for q in parts for row in q["digests"]],
        coherence=cat([q["coherence"] for q in parts]),
        fdw=cat([q["fdw"] for q in parts]),
        shots={o: cat([q["shots"][o] for q in parts]) for o in first["shots"]},
        absorbed=cat([q["absorbed"] for q in parts]),
    )


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[PointResult]:
    """Evaluate every work unit and merge them in index order."""
    workers = cfg.workers if workers is None else workers
    units = [(cfg,) + u for u in _units(cfg)]
    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_unit, units, chunksize=1))
    else:
        results = [_run_unit(u) for u in units]
    points, bucket = [], {}
    for u, r in zip(units, results):
        bucket.setdefault((u[1], u[2]), []).append(r)
    for L in cfg.sizes:
        for p in cfg.probs:
            points.append(_merge(L, p, bucket[(L, p)]))
    return points


# ---------------------------------------------------------------- statistics

def _nan_row(n):
    return np.full(n, np.nan)


def summarize_point(cfg: ExperimentConfig, pt: PointResult):
    """Summary rows (one per observable) and per-circuit rows at the final time.

    Coherence is the exception: with ``record = window`` it is averaged over
    every recorded time.
    """
    C = len(pt.digests)
    T = cfg.n_trajectories
    eps = cfg.epsilon
    summary, circuits = [], []
    coh = None
    if pt.coherence is not None:
        # windowed runs average coherence over the window, otherwise final time
        coh = pt.coherence.mean(axis=2) if cfg.record == "window" else pt.coherence[:, :, -1]
    coh_c = coh.mean(axis=1) if coh is not None else _nan_row(C)
    for o in cfg.observables:
        m = pt.moments[o][0][:, :, -1]
        s = pt.moments[o][1][:, :, -1]
        row = dict(model=cfg.model, mode=cfg.mode, L=pt.L, p=pt.p, observable=o,
                   t=int(pt.times[-1]), n_circuits=C, n_trajectories=T)
        circ_mean = m.mean(axis=1)
        row["mean"] = float(circ_mean.mean())
        row["mean_stderr"] = float(circ_mean.std(ddof=1) / math.sqrt(C)) if C > 1 else math.nan
        traj = st = quantum = zero_frac = _nan_row(C)
        keys = ("sigma_total", "sigma_circuit", "mean_sigma_quantum", "mean_sigma_traj",
                "mean_sigma_state", "order_traj", "order_state", "order_quantum")
        row.update({k: math.nan for k in keys})
        classical = cfg.mode == "classical"
        if C >= 2 and (classical or T >= 2):
            d = decompose_variance(m, None if classical else s, epsilon=eps,
                                   min_trajectories=1 if classical else 2)
            traj, st, quantum = d.sigma_traj, d.mean_state, d.sigma_quantum
            zero_frac = np.mean(np.nan_to_num(d.state_var, nan=np.inf) < eps, axis=1)
            row.update(sigma_total=d.sigma_total, sigma_circuit=d.sigma_circuit,
                       mean_sigma_quantum=d.mean_quantum, mean_sigma_traj=float(traj.mean()),
                       mean_sigma_state=float(st.mean()), order_traj=d.order_traj,
                       order_state=d.order_state, order_quantum=d.order_quantum)
        shot_var = shot_err = _nan_row(C)
        row.update(shot_sigma_quantum=math.nan, shot_sigma_quantum_stderr=math.nan,
                   order_quantum_shots=math.nan)
        if o in pt.shots:
            sf = shot_fluctuation(pt.shots[o], eps)
            shot_var, shot_err = sf.sigma_quantum, sf.stderr
            row.update(shot_sigma_quantum=float(shot_var.mean()),
                       shot_sigma_quantum_stderr=float(np.sqrt(np.sum(shot_err**2)) / C),
                       order_quantum_shots=sf.order_quantum)
        if coh is not None:
            row["coherence_mean"] = float(coh.mean())
            row["coherence_stderr"] = float(coh_c.std(ddof=1) / math.sqrt(C)) if C > 1 else math.nan
        else:
            row["coherence_mean"] = row["coherence_stderr"] = math.nan
        row["absorbed_fraction"] = (float(pt.absorbed.mean()) if pt.absorbed is not None
                                    else math.nan)
        summary.append(row)
        for c in range(C):
            circuits.append(dict(L=pt.L, p=pt.p, observable=o, circuit=c,
                                 circuit_mean=circ_mean[c], sigma_traj=traj[c],
                                 mean_sigma_state=st[c], sigma_quantum=quantum[c],
                                 state_zero_fraction=zero_frac[c],
                                 shot_sigma_quantum=shot_var[c], shot_stderr=shot_err[c],
                                 coherence_mean=coh_c[c]))
    return summary, circuits


def circuit_statistic(name: str, epsilon: float = EPSILON):
    """Map a per-circuit table (dict of arrays) to one summary quantity.

    Used to bootstrap summary quantities by resampling circuits.
    """
    stats = {
        "mean": lambda t: float(np.mean(t["circuit_mean"])),
        "sigma_circuit": lambda t: float(np.var(t["circuit_mean"])),
        "mean_sigma_quantum": lambda t: float(np.mean(t["sigma_quantum"])),
        "mean_sigma_traj": lambda t: float(np.mean(t["sigma_traj"])),
        "mean_sigma_state": lambda t: float(np.mean(t["mean_sigma_state"])),
        "order_traj": lambda t: order_parameter_zero_fluct(t["sigma_traj"], epsilon),
        "order_state": lambda t: float(np.mean(t["state_zero_fraction"])),
        "order_quantum": lambda t: order_parameter_zero_fluct(t["sigma_quantum"], epsilon),
        "order_quantum_shots": lambda t: order_parameter_zero_fluct(t["shot_sigma_quantum"], epsilon),
        "coherence_mean": lambda t: float(np.mean(t["coherence_mean"])),
    }
    if name not in stats:
        raise KeyError(f"no per-circuit statistic {name!r}; choose from {sorted(stats)}")
    return stats[name]


# ---------------------------------------------------------------- output

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class _Writer:
    def __init__(self, path: Path, columns):
        self.path = path
        self.fh = open(path, "w", encoding="utf-8", newline="")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(columns)
        self.columns = columns

    def row(self, values):
        self.w.writerow([_fmt(v) for v in values])

    def close(self):
        self.fh.close()


def _raw_columns(cfg: ExperimentConfig) -> list[str]:
    cols = ["L", "p", "circuit", "trajectory", "t"]
    for o in cfg.observables:
        cols += [f"{o}_mean", f"{o}_second"]
    if cfg.model == "bernoulli" and cfg.mode == "quantum" and cfg.coherence:
        cols.append("coherence")
    if cfg.model == "absorbing":
        cols.append("absorbed")
    return cols + ["outcome_digest"]


RAW_COLUMNS = _raw_columns


def _write_raw(w: _Writer, cfg: ExperimentConfig, pt: PointResult):
    C, T, R = pt.moments[cfg.observables[0]][0].shape
    for c in range(C):
        for tau in range(T):
            dig = pt.digests[c][tau]
            for r in range(R):
                vals = [pt.L, pt.p, c, tau, int(pt.times[r])]
                for o in cfg.observables:
                    vals += [pt.moments[o][0][c, tau, r], pt.moments[o][1][c, tau, r]]
                if cfg.model == "bernoulli" and cfg.mode == "quantum" and cfg.coherence:
                    vals.append(pt.coherence[c, tau, r])
                if cfg.model == "absorbing":
                    vals.append(int(pt.absorbed[c, tau]))
                vals.append(dig)
                w.row(vals)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run(cfg: ExperimentConfig, out: str | os.PathLike | None = None,
        workers: int | None = None, raw: bool = True) -> Path:
    """Run the sweep and write its CSV files and manifest into ``out``.

    Raises ``OSError`` on I/O failure, :class:`InvariantError` on numerical
    invariant violations.
    """
    out = Path(cfg.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    points = run_sweep(cfg, workers)
    t_run = time.perf_counter() - t0

    files = {"summary.csv": SUMMARY_COLUMNS, "circuits.csv": CIRCUIT_COLUMNS}
    writers = {k: _Writer(out / k, v) for k, v in files.items()}
    if raw:
        writers["raw.csv"] = _Writer(out / "raw.csv", _raw_columns(cfg))
    has_fdw = points[0].fdw is not None
    if has_fdw:
        writers["distribution.csv"] = _Writer(out / "distribution.csv", DISTRIBUTION_COLUMNS)
    has_shots = bool(points[0].shots)
    if has_shots:
        writers["shots.csv"] = _Writer(out / "shots.csv", SHOT_COLUMNS + list(cfg.observables))
    try:
        for pt in points:
            summary, circuits = summarize_point(cfg, pt)
            for row in summary:
                writers["summary.csv"].row([row[k] for k in SUMMARY_COLUMNS])
            for row in circuits:
                writers["circuits.csv"].row([row[k] for k in CIRCUIT_COLUMNS])
            if raw:
                _write_raw(writers["raw.csv"], cfg, pt)
            if has_fdw:
                C = pt.fdw.shape[0]
                mean = pt.fdw.mean(axis=0)
                err = pt.fdw.std(axis=0, ddof=1) / math.sqrt(C) if C > 1 else np.full(mean.size, np.nan)
                for k in range(mean.size):
                    writers["distribution.csv"].row([pt.L, pt.p, k, mean[k], err[k]])
            if has_shots:
                arrs = [pt.shots[o] for o in cfg.observables]
                C, T, S = arrs[0].shape
                for c in range(C):
                    for tau in range(T):
                        for s in range(S):
                            writers["shots.csv"].row([pt.L, pt.p, c, tau, s]
                                                     + [a[c, tau, s] for a in arrs])
    finally:
        for w in writers.values():
            w.close()

    manifest = dict(
        schema=1,
        package_version=__version__,
        kernel_backend=kernels.BACKEND,
        config=cfg.to_dict(),
        content_hash=cfg.content_hash(),
        files={k: _sha256(out / k) for k in sorted(writers)},
        n_units=sum(1 for _ in _units(cfg)),
        workers=cfg.workers if workers is None else workers,
        wall_clock=dict(simulate_s=round(t_run, 3), total_s=round(time.perf_counter() - t0, 3)),
    )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return out


def read_table(path) -> dict[str, np.ndarray]:
    """Read one of the CSV outputs into column arrays (floats where possible)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    cols = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in body]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals, dtype=object)
    return cols


def config_from_manifest(path) -> ExperimentConfig:
    d = json.loads(Path(path).read_text(encoding="utf-8"))["config"]
    return ExperimentConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

