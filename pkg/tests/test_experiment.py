import json

import numpy as np
import pytest

from cipt import analysis
from cipt.bernoulli import generate_circuit
from cipt.ensembles import PERM8_TABLE, SeedTree
from cipt.experiment import (CIRCUIT_COLUMNS, SUMMARY_COLUMNS, ConfigError, ExperimentConfig,
                             config_from_manifest, load_config, parse_config, read_table, run,
                             run_sweep)

from oracles import classical_markov_moments

CONFIG = """
# small quantum sweep
model = bernoulli
mode = quantum
sizes = 4, 6, 8   # three sizes
probs = 0.3, 0.4, 0.5, 0.6, 0.7
circuits = 6
trajectories = 4
shots = 5
seed = 11
"""


def header(path):
    return path.read_text(encoding="utf-8").splitlines()[0].split(",")


@pytest.fixture(scope="module")
def quantum_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("q")
    return run(parse_config(CONFIG), out=out)


# ---- configuration

def test_parse_config_aliases_and_comments():
    cfg = parse_config(CONFIG)
    assert cfg.sizes == (4, 6, 8) and cfg.probs == (0.3, 0.4, 0.5, 0.6, 0.7)
    assert (cfg.n_circuits, cfg.n_trajectories, cfg.n_shots, cfg.seed) == (6, 4, 5, 11)
    assert cfg.observables == ("k", "Mz")


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.epsilon == 1e-5
    assert cfg.t_max(8) == 128 and cfg.t_max(10) == 200
    assert list(cfg.record_times(8)) == [128]
    w = ExperimentConfig(record="window")
    assert w.record_times(8)[0] == 64 and w.record_times(8)[-1] == 128
    assert cfg.initial_index(8) == 1  # FDW at k=1
    assert ExperimentConfig(initial="fdw:half").initial_index(8) == 1 << 3
    classical = ExperimentConfig(mode="classical", n_trajectories=50)
    assert classical.n_trajectories == 1
    ab = ExperimentConfig(model="absorbing", sizes=(8,))
    assert ab.observables == ("nd",) and ab.initial_index(8) == 255
    assert ab.t_max(8) % 2 == 0 and ab.t_max(8) >= 6 * 8**1.6


@pytest.mark.parametrize("text", [
    "sizes = 30",
    "mode = classical\nsizes = 50",
    "model = absorbing\nsizes = 7",
    "model = absorbing\nobservables = k",
    "mode = classical\nshots = 3",
    "probs = 1.5",
    "circuits = 0",
    "colour = blue",
    "circuits = many",
    "initial = bits:0101",
    "record = sometimes",
    "epsilon = -1",
    "no equals sign here",
])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides_and_hash(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(CONFIG, encoding="utf-8")
    a = load_config(p)
    b = load_config(p, n_circuits=7)
    assert b.n_circuits == 7
    assert a.content_hash() != b.content_hash()
    assert a.content_hash() == load_config(p, out="else", workers=3).content_hash()
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.cfg")


# ---- outputs

def test_output_schema(quantum_run):
    assert header(quantum_run / "summary.csv") == SUMMARY_COLUMNS
    assert header(quantum_run / "circuits.csv") == CIRCUIT_COLUMNS
    assert header(quantum_run / "raw.csv") == [
        "L", "p", "circuit", "trajectory", "t", "k_mean", "k_second", "Mz_mean", "Mz_second",
        "coherence", "outcome_digest"]
    assert header(quantum_run / "distribution.csv") == ["L", "p", "k", "weight", "stderr"]
    assert header(quantum_run / "shots.csv") == ["L", "p", "circuit", "trajectory", "shot", "k", "Mz"]
    m = json.loads((quantum_run / "manifest.json").read_text())
    assert set(m) == {"schema", "package_version", "kernel_backend", "config", "content_hash",
                      "files", "n_units", "workers", "wall_clock"}
    assert m["n_units"] == 3 * 5 * 6
    assert set(m["files"]) == {"summary.csv", "circuits.csv", "raw.csv", "distribution.csv",
                               "shots.csv"}
    assert config_from_manifest(quantum_run / "manifest.json").content_hash() == m["content_hash"]


def test_summary_consistency(quantum_run):
    s = read_table(quantum_run / "summary.csv")
    assert s["L"].size == 3 * 5 * 2
    # the variance decomposition closes on every row
    lhs = s["sigma_total"]
    rhs = s["sigma_circuit"] + s["mean_sigma_quantum"]
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-12)
    for q in ("order_traj", "order_state", "order_quantum"):
        assert np.all((s[q] >= 0) & (s[q] <= 1))
    raw = read_table(quantum_run / "raw.csv")
    assert raw["L"].size == 3 * 5 * 6 * 4
    assert np.all(raw["k_second"] >= raw["k_mean"] ** 2 - 1e-9)
    d = read_table(quantum_run / "distribution.csv")
    for L in (4, 6, 8):
        for p in (0.3, 0.4, 0.5, 0.6, 0.7):
            m = (d["L"] == L) & (d["p"] == p)
            assert d["weight"][m].sum() == pytest.approx(1.0, abs=1e-9)


def test_byte_identical_across_workers(tmp_path):
    cfg = parse_config(CONFIG, n_circuits=3)
    a = run(cfg, out=tmp_path / "a", workers=1)
    b = run(cfg, out=tmp_path / "b", workers=2)
    for name in ("summary.csv", "circuits.csv", "raw.csv", "distribution.csv", "shots.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ma, mb = (json.loads((x / "manifest.json").read_text()) for x in (a, b))
    assert ma["files"] == mb["files"]


def test_full_control_orders_everything(tmp_path):
    out = run(parse_config("sizes = 6\nprobs = 1.0\ncircuits = 3\ntrajectories = 3"), out=tmp_path)
    s = read_table(out / "summary.csv")
    mz = s["observable"] == "Mz"
    assert s["mean"][mz][0] == pytest.approx(1.0)
    assert s["order_traj"][0] == 1.0 and s["order_state"][0] == 1.0
    assert s["sigma_total"][0] == pytest.approx(0.0, abs=1e-12)


def _replay(n, control, perms, L):
    """Independent integer replay of one classical circuit."""
    mask = (1 << L) - 1
    j = 0
    for c in control:
        if c:
            n >>= 1  # measure site L, reset to 0, shift right
        else:
            n = ((n << 1) & mask) | (n >> (L - 1))
            n = (n & ~7) | int(PERM8_TABLE[perms[j]][n & 7])
            j += 1
    return n


def test_classical_sweep_matches_replay(tmp_path):
    L, p, C = 8, 0.4, 40
    cfg = parse_config(f"mode = classical\nsizes = {L}\nprobs = {p}\ncircuits = {C}\nseed = 5")
    out = run(cfg, out=tmp_path)
    tree = SeedTree(5).at_point("bernoulli", "classical", L, 400000)
    finals = []
    for c in range(C):
        circ = generate_circuit(L, p, 2 * L * L, "classical", tree.circuit(c))
        finals.append(_replay(1, circ.control, circ.scramblers, L))
    k = np.array([n.bit_length() for n in finals], dtype=float)
    s = read_table(out / "summary.csv")
    row = s["observable"] == "k"
    assert s["mean"][row][0] == pytest.approx(k.mean(), abs=1e-12)
    assert s["sigma_circuit"][row][0] == pytest.approx(k.var(), abs=1e-12)
    assert s["mean_sigma_quantum"][row][0] == 0.0
    circ_rows = read_table(out / "circuits.csv")
    sel = circ_rows["observable"] == "k"
    assert np.array_equal(circ_rows["circuit_mean"][sel], k)


def test_absorbing_grid(tmp_path):
    cfg = parse_config("model = absorbing\nsizes = 4, 6\nprobs = 0, 1\ncircuits = 3\n"
                       "trajectories = 3\ntime_factor = 1")
    out = run(cfg, out=tmp_path)
    s = read_table(out / "summary.csv")
    assert header(out / "raw.csv")[-2:] == ["absorbed", "outcome_digest"]
    full = s["p"] == 1
    assert np.all(s["absorbed_fraction"][full] == 1) and np.allclose(s["mean"][full], 0)
    assert np.all(s["absorbed_fraction"][~full] == 0) and np.all(s["mean"][~full] > 0)


def test_run_sweep_shapes():
    cfg = parse_config("sizes = 6\nprobs = 0.5\ncircuits = 2\ntrajectories = 3\nrecord = window")
    (pt,) = run_sweep(cfg)
    T = cfg.record_times(6).size
    assert pt.moments["k"][0].shape == (2, 3, T)
    assert pt.coherence.shape == (2, 3, T) and pt.fdw.shape == (2, 7)
    assert len(pt.digests) == 2 and len(pt.digests[0]) == 3


# ---- analysis on the output directory

def test_analysis_functions(quantum_run, tmp_path):
    data = analysis.scaling_dataset(quantum_run, "k", "sigma_circuit", scale=2, n_boot=5)
    jack = analysis.scaling_dataset(quantum_run, "k", "mean")
    assert np.all(jack.stderr > 0)
    assert data.value.size == 15 and data.replicas.shape == (5, 15)
    rep = analysis.fss_report(quantum_run, "k", "sigma_circuit", scale=2, n_boot=0, out=tmp_path,
                              nu_range=(0.5, 1.5, 0.25), p_range=(0.3, 0.7, 0.05))
    assert {"nu", "p_c", "crossings"} <= set(rep)
    assert (tmp_path / "fss_k_sigma_circuit.json").is_file()
    assert (tmp_path / "fss_k_sigma_circuit_rescaled.csv").is_file()
    rows = analysis.distribution_report(quantum_run, out=tmp_path)
    assert len(rows) == 15 and (tmp_path / "fdw_fit.csv").is_file()
    tail = analysis.tail_report(quantum_run, 0.3, "chaotic", out=tmp_path)
    assert tail["sizes"] == [4, 6, 8] and np.isfinite(tail["residual"])
    with pytest.raises(ValueError):
        analysis.scaling_dataset(quantum_run, "k", "nonsense")
    with pytest.raises(FileNotFoundError):
        analysis.scaling_dataset(tmp_path / "nowhere", "k", "mean")
    # three sizes are too few for the three-term coherence series
    with pytest.raises(ValueError):
        analysis.coherence_report(quantum_run, out=tmp_path)


def test_coherence_report(tmp_path):
    cfg = parse_config("sizes = 4, 6, 8, 10\nprobs = 0.0\ncircuits = 3\ntrajectories = 2\n"
                       "time_factor = 0.5")
    out = run(cfg, out=tmp_path, raw=False)
    assert not (out / "raw.csv").exists()
    (row,) = analysis.coherence_report(out)
    # random states: log2 C grows with slope close to one
    assert 0.8 < row["a1"] < 1.2


def test_classical_sweep_matches_markov_oracle(tmp_path):
    L, C = 8, 4000
    cfg = parse_config(f"mode = classical\nsizes = {L}\nprobs = 0.4, 0.5, 0.6\ncircuits = {C}")
    out = run(cfg, out=tmp_path, raw=False)
    s = read_table(out / "summary.csv")
    c = read_table(out / "circuits.csv")
    for p in (0.4, 0.5, 0.6):
        mean, var = classical_markov_moments(L, p, 2 * L * L, 1)
        row = (s["observable"] == "k") & np.isclose(s["p"], p)
        k = c["circuit_mean"][(c["observable"] == "k") & np.isclose(c["p"], p)]
        var_err = np.std((k - k.mean()) ** 2) / np.sqrt(C)
        assert abs(s["mean"][row][0] - mean) < 4 * np.sqrt(var / C)
        assert abs(s["sigma_circuit"][row][0] - var) < 4 * var_err


def test_window_coherence_is_time_averaged():
    from cipt.experiment import summarize_point
    cfg = parse_config("sizes = 6\nprobs = 0.5\ncircuits = 2\ntrajectories = 3\nrecord = window")
    (pt,) = run_sweep(cfg)
    summary, _ = summarize_point(cfg, pt)
    assert summary[0]["coherence_mean"] == pytest.approx(pt.coherence.mean())
