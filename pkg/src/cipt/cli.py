"""Command-line interface: ``cipt run`` and ``cipt analyze ...``.

Exit codes: 2 invalid configuration, 3 I/O failure, 4 numerical invariant
violation.
"""
from __future__ import annotations

import json
import sys

import click
import numpy as np

from .bernoulli import InvariantError
from .experiment import ConfigError, load_config, parse_config, run

EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 2, 3, 4


def parse_values(text: str, kind=float) -> tuple:
    """Comma list ``a,b,c`` or inclusive range ``lo:hi:step``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be lo:hi:step, got {text!r}")
        lo, hi, step = (float(x) for x in parts)
        if step <= 0 or hi < lo:
            raise ConfigError(f"bad range {text!r}")
        n = int(np.floor((hi - lo) / step + 1e-9))
        vals = [round(lo + i * step, 12) for i in range(n + 1)]
    else:
        vals = [v for v in text.split(",") if v.strip()]
    try:
        return tuple(kind(float(v)) if kind is int else kind(v) for v in vals)
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(package_name="cipt")
def main():
    """Simulate adaptive monitored circuits and analyse their fluctuations."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="key = value config file.")
@click.option("--model", type=click.Choice(["bernoulli", "absorbing"]))
@click.option("--mode", type=click.Choice(["classical", "quantum"]))
@click.option("--sizes", help="System sizes, e.g. 8,10,12 or 8:16:2.")
@click.option("--probs", help="p_ctrl or p_m values, e.g. 0.4:0.6:0.01.")
@click.option("--circuits", type=int)
@click.option("--trajectories", type=int)
@click.option("--shots", type=int, help="Final-time shots per trajectory.")
@click.option("--seed", type=int)
@click.option("--epsilon", type=float)
@click.option("--record", type=click.Choice(["final", "window"]))
@click.option("--initial", help="fdw:<k> (default fdw:1), fdw:half, index:<n>, bits:<b1..bL> or ones.")
@click.option("--time-factor", type=float, help="Run length in units of L**2 (or L**1.6 layers).")
@click.option("--observables", help="Comma list of k, Mz, nd.")
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--workers", type=int)
@click.option("--no-raw", is_flag=True, help="Skip the per-trajectory raw.csv.")
def run_cmd(config_path, model, mode, sizes, probs, circuits, trajectories, shots, seed,
            epsilon, record, initial, time_factor, observables, out, workers, no_raw):
    """Run a sweep and write CSV results plus a manifest."""
    try:
        over = dict(model=model, mode=mode, n_circuits=circuits, n_trajectories=trajectories,
                    n_shots=shots, seed=seed, epsilon=epsilon, record=record, initial=initial,
                    time_factor=time_factor, out=out, workers=workers, observables=observables)
        if sizes is not None:
            over["sizes"] = parse_values(sizes, int)
        if probs is not None:
            over["probs"] = parse_values(probs, float)
        cfg = load_config(config_path, **over) if config_path else parse_config("", **over)
    except OSError as err:
        _fail(EXIT_IO, str(err))
    except ConfigError as err:
        _fail(EXIT_CONFIG, str(err))
    try:
        path = run(cfg, raw=not no_raw)
    except InvariantError as err:
        _fail(EXIT_INVARIANT, f"numerical invariant violated: {err}")
    except OSError as err:
        _fail(EXIT_IO, str(err))
    click.echo(str(path))


@main.group()
def analyze():
    """Fits on the output of ``cipt run`` (inputs are never modified)."""


def _analysis(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except OSError as err:
        _fail(EXIT_IO, str(err))
    except (ValueError, KeyError) as err:
        _fail(EXIT_CONFIG, str(err))


@analyze.command("fss")
@click.argument("input_dir", type=click.Path(file_okay=False))
@click.option("--observable", default="k", show_default=True)
@click.option("--quantity", default="sigma_circuit", show_default=True,
              help="Summary quantity, e.g. sigma_circuit, order_traj, order_state, mean.")
@click.option("--scale", type=float, default=0.0, show_default=True,
              help="Divide the quantity by L**scale before fitting.")
@click.option("--with-beta/--no-beta", default=False, show_default=True)
@click.option("--bootstrap", type=int, default=100, show_default=True)
@click.option("--method", type=click.Choice(["interp", "polynomial"]), default="interp",
              show_default=True)
@click.option("--u-max", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(file_okay=False))
def fss_cmd(input_dir, observable, quantity, scale, with_beta, bootstrap, method, u_max,
            seed, out):
    """Finite-size-scaling collapse of one summary quantity."""
    from .analysis import fss_report
    rep = _analysis(fss_report, input_dir, observable, quantity, scale=scale,
                    with_beta=with_beta, n_boot=bootstrap, seed=seed, out=out,
                    method=method, u_max=u_max)
    click.echo(json.dumps(rep, indent=2))


@analyze.command("coherence")
@click.argument("input_dir", type=click.Path(file_okay=False))
@click.option("--l-min", type=int)
@click.option("--out", type=click.Path(file_okay=False))
def coherence_cmd(input_dir, l_min, out):
    """Fit log2 coherence = a1 L + a0 + a_{-1}/L at every p."""
    from .analysis import coherence_report
    for row in _analysis(coherence_report, input_dir, L_min=l_min, out=out):
        click.echo(f"p={row['p']:.4g}  a1={row['a1']:.4f}({row['a1_err']:.2g})  "
                   f"a0={row['a0']:.4f}  a-1={row['am1']:.4f}")


@analyze.command("distribution")
@click.argument("input_dir", type=click.Path(file_okay=False))
@click.option("--out", type=click.Path(file_okay=False))
def distribution_cmd(input_dir, out):
    """FDW-distribution exponent s at every (L, p)."""
    from .analysis import distribution_report
    for row in _analysis(distribution_report, input_dir, out=out):
        click.echo(f"L={row['L']}  p={row['p']:.4g}  s={row['s']:.4f}({row['s_err']:.2g})")


@analyze.command("tail")
@click.argument("input_dir", type=click.Path(file_okay=False))
@click.option("--p", "p_value", type=float, required=True)
@click.option("--phase", type=click.Choice(["chaotic", "critical", "controlled"]), required=True)
@click.option("--s", "s_value", type=float, help="Exponent for the controlled rescaling.")
@click.option("--out", type=click.Path(file_okay=False))
def tail_cmd(input_dir, p_value, phase, s_value, out):
    """Collapse residual of the rescaled bit-string density tails."""
    from .analysis import tail_report
    rep = _analysis(tail_report, input_dir, p_value, phase, s=s_value, out=out)
    click.echo(json.dumps(rep, indent=2))


if __name__ == "__main__":
    main()
