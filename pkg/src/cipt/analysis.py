"""Analyses on sweep output directories (``summary.csv``, ``circuits.csv``, ...).

These functions read the files written by :func:`cipt.experiment.run` and
never modify them.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .experiment import circuit_statistic, read_table
from .fluctuations import EPSILON
from .scaling import (ScalingDataset, find_crossings, fit_coherence_series, fit_fdw_exponent,
                      fss_collapse, tail_rescale_check)

__all__ = [
    "QUANTITIES",
    "point_table",
    "scaling_dataset",
    "fss_report",
    "coherence_report",
    "distribution_report",
    "tail_report",
]

QUANTITIES = ("mean", "sigma_circuit", "mean_sigma_quantum", "mean_sigma_traj",
              "mean_sigma_state", "order_traj", "order_state", "order_quantum",
              "order_quantum_shots", "coherence_mean")
_ORDER = ("order_traj", "order_state", "order_quantum", "order_quantum_shots")


def _dir(path) -> Path:
    path = Path(path)
    if not (path / "summary.csv").is_file():
        raise FileNotFoundError(f"{path} holds no summary.csv")
    return path


def _epsilon(path: Path) -> float:
    m = path / "manifest.json"
    if m.is_file():
        return float(json.loads(m.read_text(encoding="utf-8"))["config"]["epsilon"])
    return EPSILON


def point_table(path, observable: str) -> dict:
    """Per-circuit rows grouped by ``(L, p)`` for one observable."""
    t = read_table(Path(path) / "circuits.csv")
    sel = t["observable"] == observable
    if not sel.any():
        raise ValueError(f"no rows for observable {observable!r}")
    groups = {}
    keys = [k for k in t if k not in ("L", "p", "observable")]
    for L, p in sorted(set(zip(t["L"][sel], t["p"][sel]))):
        m = sel & (t["L"] == L) & (t["p"] == p)
        groups[(int(L), float(p))] = {k: t[k][m].astype(np.float64) for k in keys}
    return groups


def scaling_dataset(path, observable: str, quantity: str, *, scale: float = 0.0,
                    n_boot: int = 0, seed: int = 0, p_range=None, sizes=None) -> ScalingDataset:
    """Summary quantity versus ``(L, p)`` as a collapse dataset.

    The value is divided by ``L**scale`` (``scale=2`` gives ``sigma/L**2``).
    Standard errors are binomial for order parameters and a
    leave-one-circuit-out jackknife otherwise.  With ``n_boot > 0`` circuits
    are also resampled to produce bootstrap replicas of the values.
    """
    path = _dir(path)
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    stat = circuit_statistic(quantity, _epsilon(path))
    groups = point_table(path, observable)
    keys = [k for k in groups
            if (sizes is None or k[0] in sizes)
            and (p_range is None or p_range[0] - 1e-12 <= k[1] <= p_range[1] + 1e-12)]
    if not keys:
        raise ValueError("no sweep points selected")
    L = np.array([k[0] for k in keys], dtype=np.float64)
    p = np.array([k[1] for k in keys])
    norm = L**scale
    value = np.array([stat(groups[k]) for k in keys]) / norm
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{quantity} is undefined for some sweep points (too few samples?)")
    C = np.array([groups[k]["circuit_mean"].size for k in keys])
    if quantity in _ORDER:
        err = np.sqrt(value * (1 - value) / C)
    else:
        err = np.array([_jackknife(stat, groups[k]) for k in keys]) / norm
    reps = None
    if n_boot:
        rng = np.random.default_rng(seed)
        reps = np.empty((n_boot, len(keys)))
        for i, k in enumerate(keys):
            g = groups[k]
            idx = rng.integers(0, C[i], size=(n_boot, C[i]))
            for b in range(n_boot):
                reps[b, i] = stat({n: v[idx[b]] for n, v in g.items()})
        reps /= norm
    return ScalingDataset(L, p, value, err, reps)


def _jackknife(stat, group: dict, max_groups: int = 50) -> float:
    """Delete-a-group jackknife error of a per-circuit statistic.

    Circuits are i.i.d., so contiguous blocks serve as groups; with at most
    ``max_groups`` circuits this is the leave-one-out jackknife.
    """
    C = group["circuit_mean"].size
    if C < 2:
        return math.nan
    G = min(C, max_groups)
    labels = np.arange(C) * G // C
    theta = np.array([stat({n: v[labels != g] for n, v in group.items()}) for g in range(G)])
    return float(math.sqrt((G - 1) / G * np.sum((theta - theta.mean()) ** 2)))


def _fit_dict(fit) -> dict:
    return dict(nu=fit.nu, nu_err=fit.nu_err, p_c=fit.p_c, p_c_err=fit.p_c_err,
                beta=fit.beta, beta_err=fit.beta_err, with_beta=fit.with_beta,
                residual=fit.residual, converged=fit.converged, n_points=fit.n_points,
                grid_edge=fit.diagnostics.get("grid_edge"))


def fss_report(path, observable: str, quantity: str, *, scale: float = 0.0,
               with_beta: bool = False, n_boot: int = 100, seed: int = 0, out=None,
               **fit_kw) -> dict:
    """Collapse fit plus crossings; writes ``fss_<obs>_<quantity>.json`` and the
    rescaled data as CSV into ``out`` (default: the input directory)."""
    data = scaling_dataset(path, observable, quantity, scale=scale, n_boot=n_boot, seed=seed,
                           p_range=fit_kw.pop("p_window", None), sizes=fit_kw.pop("sizes", None))
    fit = fss_collapse(data, with_beta=with_beta, n_bootstrap=n_boot or None, seed=seed, **fit_kw)
    crossings, pc_cross = find_crossings(data)
    report = _fit_dict(fit)
    report.update(observable=observable, quantity=quantity, scale=scale,
                  crossings=[dict(L_small=int(c.L_small), L_large=int(c.L_large), p=c.p)
                             for c in crossings],
                  crossing_median=pc_cross)
    out = Path(path) if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"fss_{observable}_{quantity}"
    (out / f"{stem}.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    u, v, dv = fit.rescale(data)
    with open(out / f"{stem}_rescaled.csv", "w", encoding="utf-8") as fh:
        fh.write("L,p,value,stderr,u,v,dv\n")
        for row in zip(data.L, data.p, data.value, data.stderr, u, v, dv):
            fh.write(",".join(format(float(x), ".17g") for x in row) + "\n")
    return report


def coherence_report(path, *, L_min: int | None = None, out=None) -> list[dict]:
    """Fit ``log2 C = a1 L + a0 + a_{-1}/L`` for every p; writes ``coherence_fit.csv``."""
    path = _dir(path)
    s = read_table(path / "summary.csv")
    first = s["observable"] == s["observable"][0]
    rows = []
    for p in sorted(set(s["p"][first])):
        m = first & (s["p"] == p)
        L, C, err = s["L"][m], s["coherence_mean"][m], s["coherence_stderr"][m]
        if not np.all(np.isfinite(C)):
            raise ValueError("the sweep recorded no coherence")
        fit = fit_coherence_series(L, C, L_min=L_min, stderr=err)
        rows.append(dict(p=float(p), a1=fit.a1, a0=fit.a0, am1=fit.am1,
                         a1_err=fit.errors[0], a0_err=fit.errors[1], am1_err=fit.errors[2],
                         L_min=fit.L_min, n_sizes=fit.n_sizes))
    out = path if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "coherence_fit.csv", rows)
    return rows


def _distributions(path: Path) -> dict:
    t = read_table(path / "distribution.csv")
    out = {}
    for L, p in sorted(set(zip(t["L"], t["p"]))):
        m = (t["L"] == L) & (t["p"] == p)
        order = np.argsort(t["k"][m])
        out[(int(L), float(p))] = (t["weight"][m][order], t["stderr"][m][order])
    return out


def distribution_report(path, *, k_range=None, out=None) -> list[dict]:
    """FDW-distribution exponent ``s`` per ``(L, p)``; writes ``fdw_fit.csv``."""
    path = _dir(path)
    rows = []
    for (L, p), (w, _) in _distributions(path).items():
        try:
            fit = fit_fdw_exponent(w, L, k_range)
            rows.append(dict(L=L, p=p, s=fit.s, s_err=fit.stderr, intercept=fit.intercept,
                             n_points=fit.n_points))
        except ValueError:
            rows.append(dict(L=L, p=p, s=math.nan, s_err=math.nan, intercept=math.nan,
                             n_points=0))
    out = path if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "fdw_fit.csv", rows)
    return rows


def tail_report(path, p: float, phase: str, *, s: float | None = None, out=None) -> dict:
    """Tail rescaling residual of the bit-string density at one p."""
    path = _dir(path)
    dists = {L: w for (L, q), (w, _) in _distributions(path).items() if abs(q - p) < 1e-9}
    if phase == "controlled" and s is None:
        fits = [fit_fdw_exponent(w, L).s for L, w in dists.items()]
        s = float(np.mean(fits))
    residual = tail_rescale_check(dists, phase, s)
    report = dict(p=p, phase=phase, s=s, residual=residual, sizes=sorted(dists))
    out = path if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"tail_{phase}.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def _write_rows(path: Path, rows: list[dict]):
    if not rows:
        raise ValueError("nothing to write")
    cols = list(rows[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(format(float(r[c]), ".17g") for c in cols) + "\n")
