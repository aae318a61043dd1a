"""Fits: FDW exponent, coherence series, finite-size-scaling collapse, crossings and tails.

Collapse method
---------------
Each point ``(L, p, y, dy)`` is mapped to ``u = (p - p_c) L**(1/nu)`` and
``v = y L**(beta/nu)``; only points with ``|u| <= u_max`` are scored.  The
default quality measure compares every point with the linear interpolation
of each other size's rescaled curve at the same ``u``, so it vanishes for a
perfect collapse whatever the shape of the scaling function.  A shared
polynomial fit (degree 4 by default) is available as ``method="polynomial"``;
its shape misfit biases ``nu`` by a few percent on smooth bumps.  The search
is an exhaustive coarse grid followed by Nelder-Mead refinement.

Errors ``dy`` are floored at ``err_floor * max|y|`` so that points with a zero
binomial error (order parameters stuck at 0 or 1) do not dominate, while a
uniform rescaling of the data leaves the objective unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "FDWFit",
    "CoherenceFit",
    "ScalingDataset",
    "ScalingFit",
    "Crossing",
    "fit_fdw_exponent",
    "fit_coherence_series",
    "coherence_lmin_sweep",
    "collapse_objective",
    "fss_collapse",
    "bootstrap_replicates",
    "find_crossings",
    "dyadic_density",
    "tail_rescale_check",
]


# ---------------------------------------------------------------- FDW exponent

@dataclass(frozen=True)
class FDWFit:
    s: float
    stderr: float
    intercept: float
    n_points: int


def fit_fdw_exponent(dist, L: int | None = None, k_range: tuple[int, int] | None = None) -> FDWFit:
    """Slope of ``log2 f(k)`` against ``k`` over ``k in [1, L-1]``.

    Zero entries are dropped; at least three positive points are required.
    """
    f = np.asarray(dist, dtype=np.float64)
    if L is None:
        L = f.size - 1
    if f.size != L + 1:
        raise ValueError(f"distribution must have L+1={L + 1} entries, got {f.size}")
    lo, hi = k_range if k_range is not None else (1, L - 1)
    k = np.arange(lo, hi + 1)
    y = f[lo:hi + 1]
    ok = y > 0
    if ok.sum() < 3:
        raise ValueError("need at least three positive support points")
    k, y = k[ok].astype(np.float64), np.log2(y[ok])
    A = np.column_stack([k, np.ones_like(k)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(k.size - 2, 1)
    cov = np.linalg.inv(A.T @ A) * (resid @ resid) / dof
    return FDWFit(float(coef[0]), float(np.sqrt(cov[0, 0])), float(coef[1]), int(k.size))


# ------------------------------------------------------------ coherence series

@dataclass(frozen=True)
class CoherenceFit:
    a1: float
    a0: float
    am1: float
    errors: tuple[float, float, float]
    L_min: int
    n_sizes: int


def fit_coherence_series(L, coherence, L_min: int | None = None, stderr=None) -> CoherenceFit:
    """Least squares ``log2 C = a1 L + a0 + a_{-1} / L`` over sizes ``>= L_min``.

    ``stderr`` (of C) turns the fit into a weighted one via ``d log2 C``.
    """
    L = np.asarray(L, dtype=np.float64)
    c = np.asarray(coherence, dtype=np.float64)
    sel = L >= (L.min() if L_min is None else L_min)
    if np.unique(L[sel]).size < 4:
        raise ValueError("need at least four system sizes for the three-term fit")
    if np.any(c[sel] <= 0):
        raise ValueError("coherence must be positive to take logarithms")
    x, y = L[sel], np.log2(c[sel])
    A = np.column_stack([x, np.ones_like(x), 1.0 / x])
    if stderr is not None:
        dy = np.asarray(stderr, dtype=np.float64)[sel] / (c[sel] * np.log(2.0))
        w = 1.0 / np.maximum(dy, 1e-12 * np.abs(y).max())
    else:
        w = np.ones_like(y)
    Aw, yw = A * w[:, None], y * w
    if np.linalg.matrix_rank(Aw) < 3:
        raise ValueError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    resid = yw - Aw @ coef
    dof = x.size - 3
    scale = (resid @ resid) / dof if (stderr is None and dof > 0) else 1.0
    cov = np.linalg.inv(Aw.T @ Aw) * scale
    err = tuple(float(e) for e in np.sqrt(np.diag(cov)))
    return CoherenceFit(float(coef[0]), float(coef[1]), float(coef[2]), err,
                        int(x.min()), int(np.unique(x).size))


def coherence_lmin_sweep(L, coherence, stderr=None) -> list[CoherenceFit]:
    """Fits with successively larger ``L_min`` while at least four sizes remain."""
    sizes = np.unique(np.asarray(L))
    return [fit_coherence_series(L, coherence, L_min=int(lm), stderr=stderr)
            for lm in sizes[: max(sizes.size - 3, 0)]]


# ------------------------------------------------------------------- collapse

@dataclass
class ScalingDataset:
    """Rows of ``(L, p, value, stderr)``; optional bootstrap replicas of ``value``."""

    L: np.ndarray
    p: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    replicas: np.ndarray | None = None  # (n_boot, n_rows)

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.stderr = (np.zeros_like(self.value) if self.stderr is None
                       else np.asarray(self.stderr, dtype=np.float64))
        n = self.L.size
        if not (self.p.size == self.value.size == self.stderr.size == n):
            raise ValueError("dataset columns differ in length")
        if self.replicas is not None:
            self.replicas = np.asarray(self.replicas, dtype=np.float64)
            if self.replicas.ndim != 2 or self.replicas.shape[1] != n:
                raise ValueError("replicas must have shape (n_boot, n_rows)")

    def check(self, min_sizes: int = 3, min_probs: int = 5):
        if np.unique(self.L).size < min_sizes:
            raise ValueError(f"collapse needs at least {min_sizes} distinct L")
        if np.unique(self.p).size < min_probs:
            raise ValueError(f"collapse needs at least {min_probs} distinct p")

    def scaled(self, factor: float) -> "ScalingDataset":
        rep = None if self.replicas is None else self.replicas * factor
        return ScalingDataset(self.L, self.p, self.value * factor, self.stderr * abs(factor), rep)

    def with_values(self, values) -> "ScalingDataset":
        return ScalingDataset(self.L, self.p, values, self.stderr)


@dataclass
class ScalingFit:
    nu: float
    p_c: float
    beta: float
    residual: float
    with_beta: bool
    nu_err: float = float("nan")
    p_c_err: float = float("nan")
    beta_err: float = float("nan")
    converged: bool = True
    n_points: int = 0
    coefficients: np.ndarray | None = None
    bootstrap: np.ndarray | None = None  # (n_boot, 3) rows of (nu, p_c, beta)
    diagnostics: dict = field(default_factory=dict)

    def rescale(self, data: ScalingDataset):
        """``(u, v, dv)`` of every row under the fitted parameters."""
        u = (data.p - self.p_c) * data.L ** (1.0 / self.nu)
        f = data.L ** (self.beta / self.nu)
        return u, data.value * f, data.stderr * f


def _effective_errors(data: ScalingDataset, err_floor: float) -> np.ndarray:
    floor = err_floor * max(float(np.abs(data.value).max()), 1e-300)
    return np.sqrt(data.stderr**2 + floor**2)


class _Layout:
    """Per-size point indices ordered by p (hence by u, for any nu > 0)."""

    def __init__(self, data: ScalingDataset):
        self.L = data.L
        self.sizes = np.unique(data.L)
        self.index = [np.flatnonzero(data.L == L)[np.argsort(data.p[data.L == L], kind="stable")]
                      for L in self.sizes]


def _interp_quality(u, v, e, inside, layout: _Layout) -> tuple[float, int]:
    """Sum and count of normalised squared distances of every windowed point
    from the piecewise-linear interpolation of each other size's curve at
    its ``u``."""
    total, count = 0.0, 0
    for L, ib in zip(layout.sizes, layout.index):
        ub = u[ib]
        pts = np.flatnonzero(inside & (layout.L != L) & (u >= ub[0]) & (u <= ub[-1]))
        if not pts.size:
            continue
        x = u[pts]
        j = np.minimum(np.searchsorted(ub, x, side="right") - 1, ub.size - 2)
        t = (x - ub[j]) / (ub[j + 1] - ub[j])
        lo, hi = ib[j], ib[j + 1]
        vh = (1.0 - t) * v[lo] + t * v[hi]
        eh2 = ((1.0 - t) * e[lo]) ** 2 + (t * e[hi]) ** 2
        total += float(np.sum((v[pts] - vh) ** 2 / (e[pts] ** 2 + eh2)))
        count += int(pts.size)
    return total, count


def collapse_objective(params, data: ScalingDataset, *, with_beta: bool = True,
                       method: str = "interp", u_max: float = 2.0, degree: int = 4,
                       err_floor: float = 0.01, min_per_size: int = 3, _dy=None,
                       _layout=None, return_fit: bool = False):
    """Collapse quality of ``data`` under ``params``; smaller is better.

    ``params`` is ``(nu, p_c, beta)`` or ``(nu, p_c)`` when ``with_beta`` is
    false.  Only points with ``|u| <= u_max`` enter, and every size needs
    ``min_per_size`` of them.  Returns ``inf`` for a degenerate window.

    ``method="interp"`` averages, over windowed points, the squared distance
    (in units of the combined error) to the linear interpolation of every
    other size's rescaled curve.  ``method="polynomial"`` fits one polynomial
    of ``degree`` to all windowed points and returns the weighted residual
    sum of squares per degree of freedom.
    """
    bad = (np.inf, None) if return_fit else np.inf
    nu, pc = float(params[0]), float(params[1])
    beta = float(params[2]) if with_beta else 0.0
    if nu <= 0.05 or not np.isfinite(nu + pc + beta):
        return bad
    dy = _effective_errors(data, err_floor) if _dy is None else _dy
    layout = _Layout(data) if _layout is None else _layout
    u = (data.p - pc) * data.L ** (1.0 / nu)
    f = data.L ** (beta / nu)
    inside = np.abs(u) <= u_max
    for ix in layout.index:
        if np.count_nonzero(inside[ix]) < min_per_size:
            return bad
    v = data.value * f
    e = dy * f
    if method == "interp":
        total, count = _interp_quality(u, v, e, inside, layout)
        if count == 0:
            return bad
        obj = total / count
        return (obj, None) if return_fit else obj
    if method != "polynomial":
        raise ValueError(f"unknown collapse method {method!r}")
    n_in = int(inside.sum())
    if n_in <= degree + 1:
        return bad
    w = 1.0 / e[inside]
    A = np.vander(u[inside] / u_max, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(A * w[:, None], v[inside] * w, rcond=None)
    r = (A @ coef - v[inside]) * w
    # per degree of freedom, so that thinning the window is not rewarded
    obj = float(r @ r) / (n_in - degree - 1)
    return (obj, coef) if return_fit else obj


def _grid(lo, hi, step):
    n = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def fss_collapse(data: ScalingDataset, *, with_beta: bool = True,
                 nu_range=(0.5, 2.0, 0.05), p_range=None, beta_range=(0.0, 2.0, 0.05),
                 method: str = "interp", u_max: float = 2.0, degree: int = 4,
                 err_floor: float = 0.01, n_bootstrap: int | None = None,
                 seed: int = 0) -> ScalingFit:
    """Collapse fit over ``(nu, p_c[, beta])``.

    Parameters
    ----------
    nu_range, beta_range : (lo, hi, step)
        Coarse-grid specification.
    p_range : (lo, hi, step), optional
        Default spans the sampled p values at step 0.002.
    method : {"interp", "polynomial"}
        Collapse-quality measure, see :func:`collapse_objective`.
    n_bootstrap : int, optional
        Number of bootstrap rows used for uncertainties.  Rows come from
        ``data.replicas`` (typically circuit resamples); without replicas
        each value is redrawn from a normal with its standard error.
    """
    data.check()
    if p_range is None:
        p_range = (float(data.p.min()), float(data.p.max()), 0.002)
    kw = dict(with_beta=with_beta, method=method, u_max=u_max, degree=degree,
              err_floor=err_floor)
    dy = _effective_errors(data, err_floor)
    layout = _Layout(data)

    nus = _grid(*nu_range)
    pcs = _grid(*p_range)
    betas = _grid(*beta_range) if with_beta else np.array([0.0])

    def search(d: ScalingDataset, ddy, nus, pcs, betas):
        surf = np.full((nus.size, pcs.size, betas.size), np.inf)
        for i, nu in enumerate(nus):
            for j, pc in enumerate(pcs):
                for k, beta in enumerate(betas):
                    surf[i, j, k] = collapse_objective((nu, pc, beta), d, _dy=ddy,
                                                       _layout=layout, **kw)
        return surf

    surface = search(data, dy, nus, pcs, betas)
    if not np.isfinite(surface).any():
        raise ValueError("degenerate collapse window: no grid point has enough data inside u_max")
    i, j, k = np.unravel_index(np.argmin(surface), surface.shape)
    start = np.array([nus[i], pcs[j], betas[k]])[: 3 if with_beta else 2]

    # the refinement stays inside the searched box: on a flat objective an
    # unbounded simplex drifts to nu ~ 1e2 and swamps the bootstrap spread
    bounds = [tuple(nu_range[:2]), tuple(p_range[:2]), tuple(beta_range[:2])]

    def refine(d: ScalingDataset, x0):
        ddy = _effective_errors(d, err_floor)
        fun = lambda x: collapse_objective(x, d, _dy=ddy, _layout=layout, **kw)
        step = np.array([0.05, 0.002, 0.05])[: x0.size]
        simplex = np.vstack([x0] + [x0 + np.eye(x0.size)[n] * step[n] for n in range(x0.size)])
        return minimize(fun, x0, method="Nelder-Mead", bounds=bounds[: x0.size],
                        options=dict(initial_simplex=simplex, xatol=1e-5, fatol=1e-10,
                                     maxiter=2000))

    res = refine(data, start)
    best = res.x if res.fun <= surface[i, j, k] else start
    obj, coef = collapse_objective(best, data, _layout=layout, return_fit=True, **kw)
    nu, pc = float(best[0]), float(best[1])
    beta = float(best[2]) if with_beta else 0.0
    edge = (i in (0, nus.size - 1)) or (j in (0, pcs.size - 1)) or (
        with_beta and k in (0, betas.size - 1))
    u = (data.p - pc) * data.L ** (1.0 / nu)
    fit = ScalingFit(nu, pc, beta, float(obj), with_beta, converged=bool(res.success),
                     n_points=int(np.count_nonzero(np.abs(u) <= u_max)), coefficients=coef)
    fit.diagnostics = dict(grid_min=float(surface[i, j, k]), grid_argmin=tuple(start.tolist()),
                           grid_edge=bool(edge), message=str(res.message),
                           surface_min_over_nu=np.min(surface, axis=(1, 2)).tolist())

    if n_bootstrap:
        rng = np.random.default_rng(seed)
        if data.replicas is not None:
            reps = data.replicas[: n_bootstrap]
        else:
            reps = data.value + data.stderr * rng.standard_normal((n_bootstrap, data.value.size))
        x0 = np.asarray(best, dtype=np.float64)
        coarse = (nus[::2], pcs[::2], betas[::2])
        boot = []
        for row in reps:
            # each replica gets its own (coarser) grid search so that a flat or
            # multi-modal objective shows up in the spread
            d = data.with_values(row)
            surf = search(d, _effective_errors(d, err_floor), *coarse)
            starts = [x0]
            if np.isfinite(surf).any():
                a, b, c = np.unravel_index(np.argmin(surf), surf.shape)
                starts.append(np.array([coarse[0][a], coarse[1][b], coarse[2][c]])[: x0.size])
            results = [refine(d, x) for x in starts]
            r = min(results, key=lambda r: r.fun)
            x = r.x if np.isfinite(r.fun) else x0
            boot.append([x[0], x[1], x[2] if with_beta else 0.0])
        boot = np.array(boot)
        tiny = 1e-12
        fit.bootstrap = boot
        fit.nu_err = max(float(boot[:, 0].std(ddof=1)), tiny)
        fit.p_c_err = max(float(boot[:, 1].std(ddof=1)), tiny)
        fit.beta_err = max(float(boot[:, 2].std(ddof=1)), tiny) if with_beta else 0.0
    return fit


def bootstrap_replicates(groups: Sequence[np.ndarray], statistic: Callable[[np.ndarray], float],
                         n_boot: int = 100, seed: int = 0) -> np.ndarray:
    """Circuit-level bootstrap: ``(n_boot, len(groups))`` resampled statistics.

    ``groups[i]`` holds the per-circuit values behind dataset row ``i``
    (first axis = circuits); each replica resamples circuits with
    replacement and re-evaluates ``statistic``.
    """
    rng = np.random.default_rng(seed)
    out = np.empty((n_boot, len(groups)))
    for i, g in enumerate(groups):
        g = np.asarray(g)
        idx = rng.integers(0, g.shape[0], size=(n_boot, g.shape[0]))
        for b in range(n_boot):
            out[b, i] = statistic(g[idx[b]])
    return out


# ------------------------------------------------------------------ crossings

@dataclass(frozen=True)
class Crossing:
    L_small: float
    L_large: float
    p: float  # NaN if the curves do not cross inside the sampled range


def find_crossings(data: ScalingDataset) -> tuple[list[Crossing], float]:
    """Crossings of consecutive-L curves by linear interpolation.

    For each pair the sign change of ``y_large - y_small`` nearest the middle
    of the sampled range is used.  Exact ties without a sign change (e.g.
    both curves pinned at 0) are not crossings.  Returns the crossings and their median.
    """
    sizes = np.unique(data.L)
    if sizes.size < 2:
        raise ValueError("need at least two system sizes")
    out = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        pa = np.sort(data.p[data.L == a])
        common = np.intersect1d(pa, data.p[data.L == b])
        if common.size < 2:
            out.append(Crossing(a, b, float("nan")))
            continue
        ya = np.array([data.value[(data.L == a) & (data.p == q)][0] for q in common])
        yb = np.array([data.value[(data.L == b) & (data.p == q)][0] for q in common])
        d = yb - ya
        # sign changes only; a run of exact ties between opposite signs counts
        # once at its midpoint, ties with no sign change (both curves 0) do not
        nz = np.flatnonzero(d)
        roots = []
        for m, n in zip(nz[:-1], nz[1:]):
            if d[m] * d[n] > 0:
                continue
            if n == m + 1:
                roots.append(common[m] - d[m] * (common[n] - common[m]) / (d[n] - d[m]))
            else:
                roots.append(0.5 * (common[m + 1] + common[n - 1]))
        if roots:
            mid = 0.5 * (common[0] + common[-1])
            out.append(Crossing(a, b, float(min(roots, key=lambda r: abs(r - mid)))))
        else:
            out.append(Crossing(a, b, float("nan")))
    ps = np.array([c.p for c in out])
    est = float(np.nanmedian(ps)) if np.isfinite(ps).any() else float("nan")
    return out, est


# ----------------------------------------------------------------------- tail

def dyadic_density(dist, L: int) -> np.ndarray:
    """Block-averaged density ``p(x)`` on ``x in [2**-(j+1), 2**-j)``, ``j = 0..L-1``.

    ``dist`` is either the full bit-string distribution ``f(x)`` (length
    ``2**L``) or the FDW distribution (length ``L+1``); the block with index
    ``j`` holds the strings whose FDW is ``k = L - j``.
    """
    f = np.asarray(dist, dtype=np.float64)
    if f.size == 1 << L and L > 0 and f.size != L + 1:
        starts = np.concatenate([[0], 1 << np.arange(L)])
        f = np.add.reduceat(f, starts)
    if f.size != L + 1:
        raise ValueError(f"expected 2**L or L+1 entries for L={L}, got {f.size}")
    k = L - np.arange(L)
    # p(x) = 2**L f(x); a block with FDW k holds 2**(k-1) strings
    return f[k] * 2.0 ** (L - k + 1)


def tail_rescale_check(distributions: dict, phase: str, s: float | None = None,
                       drop_small_x: int = 1) -> float:
    """Largest pairwise relative sup-distance between rescaled tail densities.

    Rescaling: ``p`` (chaotic), ``p L`` (critical), ``p 2**(-s L)``
    (controlled).  Curves are compared block by block on ``x in [2**-jmax, 1)``
    where ``jmax`` is set by the smallest L less ``drop_small_x`` blocks.
    """
    if len(distributions) < 3:
        raise ValueError("need distributions for at least three system sizes")
    if phase not in ("chaotic", "critical", "controlled"):
        raise ValueError(f"unknown phase {phase!r}")
    if phase == "controlled" and s is None:
        raise ValueError("the controlled rescaling needs the fitted exponent s")
    curves = {}
    for L, dist in distributions.items():
        L = int(L)
        dens = dyadic_density(dist, L)
        if phase == "critical":
            dens = dens * L
        elif phase == "controlled":
            dens = dens * 2.0 ** (-s * L)
        curves[L] = dens
    jmax = min(curves) - drop_small_x
    if jmax < 1:
        raise ValueError("empty common tail support")
    stack = np.array([c[:jmax] for c in curves.values()])
    if not np.all(np.isfinite(stack)) or np.all(stack == 0):
        raise ValueError("empty tails")
    worst = 0.0
    for a in range(len(stack)):
        for b in range(a + 1, len(stack)):
            den = 0.5 * (np.abs(stack[a]) + np.abs(stack[b]))
            rel = np.where(den > 0, np.abs(stack[a] - stack[b]) / np.where(den > 0, den, 1), 0.0)
            worst = max(worst, float(rel.max()))
    return worst
