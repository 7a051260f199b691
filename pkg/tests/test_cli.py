"""Command-line interface: artifacts, reproducibility, error paths."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ncpolicy.cli import main
from ncpolicy.trace import write_trace_csv, RolloutTrace
from ncpolicy.wiring import build_tw_circuit, init_params, load_spec, save_params

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def run_cli(*argv):
    return main(list(argv))


# ---------------------------------------------------------------------------
# gen-circuit
# ---------------------------------------------------------------------------

def test_gen_circuit_tw(tmp_path, capsys):
    out = tmp_path / "tw.json"
    assert run_cli("gen-circuit", "--tw", "--out", str(out)) == 0
    msg = capsys.readouterr().out
    assert "11 neurons, 28 edges" in msg
    assert "77%" in msg
    spec = load_spec(out)
    assert spec.n_neurons == 11 and spec.n_edges == 28


def test_gen_circuit_random_reproducible(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for out in (a, b):
        assert run_cli("gen-circuit", "--random", "11", "28",
                       "--seed", "3", "--out", str(out)) == 0
    assert a.read_bytes() == b.read_bytes()
    spec = load_spec(a)
    assert spec.n_neurons == 11 and spec.n_edges == 28


def test_gen_circuit_infeasible_random(tmp_path, capsys):
    code = run_cli("gen-circuit", "--random", "3", "100",
                   "--out", str(tmp_path / "x.json"))
    assert code == 2
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def parking_run(tmp_path_factory):
    """A tiny completed training run on the parking task."""
    root = tmp_path_factory.mktemp("parking_run")
    circuit = root / "circuit.json"
    assert run_cli("gen-circuit", "--tw-parking", "--out", str(circuit)) == 0
    outdir = root / "run"
    code = run_cli("train", "--circuit", str(circuit), "--env", "parking",
                   "--iters", "4", "--rollouts", "1", "--filter", "mean",
                   "--seed", "1", "--out", str(outdir))
    assert code == 0
    return circuit, outdir


def test_train_writes_all_artifacts(parking_run):
    _, outdir = parking_run
    assert (outdir / "params.json").exists()
    assert (outdir / "train_record.csv").exists()
    assert (outdir / "manifest.json").exists()
    assert (outdir / "learning_curve.png").read_bytes().startswith(PNG_MAGIC)
    with open(outdir / "train_record.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "estimate", "sigma", "accepted"]
    assert len(rows) == 1 + 4


def test_train_manifest_contents(parking_run):
    _, outdir = parking_run
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["env"] == "parking"
    assert manifest["ars"]["rng_seed"] == 1
    assert manifest["ars"]["filter"] == "mean"
    assert len(manifest["circuit"]["neurons"]) == 12
    assert "course" in manifest["env_overrides"]


def test_train_rerun_from_manifest_reproduces(parking_run, tmp_path):
    _, outdir = parking_run
    second = tmp_path / "again"
    code = run_cli("train", "--from-manifest", str(outdir / "manifest.json"),
                   "--out", str(second))
    assert code == 0
    for name in ("train_record.csv", "params.json", "manifest.json"):
        assert (second / name).read_bytes() == (outdir / name).read_bytes()


def test_train_requires_circuit(tmp_path, capsys):
    code = run_cli("train", "--env", "parking", "--out", str(tmp_path / "o"))
    assert code == 2
    assert "circuit" in capsys.readouterr().err


def test_train_unknown_env(tmp_path, capsys):
    circuit = tmp_path / "c.json"
    run_cli("gen-circuit", "--tw", "--out", str(circuit))
    code = run_cli("train", "--circuit", str(circuit), "--env", "halfcheetah",
                   "--iters", "1", "--out", str(tmp_path / "o"))
    assert code == 2
    assert "not bundled" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

def test_rollout_prints_return_and_traces(parking_run, tmp_path, capsys):
    circuit, outdir = parking_run
    trace1 = tmp_path / "t1.csv"
    code = run_cli("rollout", "--circuit", str(circuit),
                   "--params", str(outdir / "params.json"),
                   "--env", "parking", "--seed", "0", "--trace", str(trace1))
    assert code == 0
    first = capsys.readouterr().out.strip()
    float(first)  # parses as a number

    trace2 = tmp_path / "t2.csv"
    code = run_cli("rollout", "--circuit", str(circuit),
                   "--params", str(outdir / "params.json"),
                   "--env", "parking", "--seed", "0", "--trace", str(trace2))
    assert code == 0
    assert capsys.readouterr().out.strip() == first
    assert trace1.read_bytes() == trace2.read_bytes()


def test_rollout_missing_params(parking_run, tmp_path, capsys):
    circuit, _ = parking_run
    code = run_cli("rollout", "--circuit", str(circuit),
                   "--params", str(tmp_path / "nope.json"))
    assert code == 2
    assert "not found" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def test_analyze_full_artifact_set(parking_run, tmp_path):
    circuit, outdir = parking_run
    trace = tmp_path / "trace.csv"
    assert run_cli("rollout", "--circuit", str(circuit),
                   "--params", str(outdir / "params.json"),
                   "--env", "parking", "--seed", "0",
                   "--trace", str(trace)) == 0
    adir = tmp_path / "analysis"
    assert run_cli("analyze", "--circuit", str(circuit),
                   "--params", str(outdir / "params.json"),
                   "--trace", str(trace), "--out", str(adir)) == 0
    for name in ("contributions.csv", "contributions.json", "tau_ranges.csv",
                 "tau_ranges.png", "projection.csv", "projection.png"):
        assert (adir / name).exists(), name
    # default targets are the motor neurons of the parking variant
    for motor in ("FWD", "RGT", "LFT"):
        assert (adir / f"slopes_{motor}.png").exists()
    with open(adir / "tau_ranges.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 12


def test_analyze_identical_ramps_all_positive(tmp_path, capsys):
    spec = build_tw_circuit()
    circuit = tmp_path / "tw.json"
    run_cli("gen-circuit", "--tw", "--out", str(circuit))
    params_path = tmp_path / "params.json"
    save_params(init_params(spec, 0), spec, params_path)

    T = 40
    ramp = np.linspace(-70.0, -20.0, T)
    trace = RolloutTrace(
        times=0.1 * np.arange(1, T + 1),
        potentials=np.tile(ramp.reshape(-1, 1), (1, spec.n_neurons)),
        neuron_names=tuple(spec.neuron_names()),
        observations=np.zeros((T, 2)), actions=np.zeros((T, 1)),
        rewards=np.zeros(T))
    trace_path = tmp_path / "ramps.csv"
    write_trace_csv(trace, trace_path)

    adir = tmp_path / "analysis"
    assert run_cli("analyze", "--circuit", str(circuit),
                   "--params", str(params_path), "--trace", str(trace_path),
                   "--target", "FWD", "--out", str(adir)) == 0
    with open(adir / "contributions.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    verdicts = {r[0]: r[2] for r in rows[1:]}
    assert len(verdicts) == 10  # every other neuron against FWD
    assert set(verdicts.values()) == {"positive"}
    assert not (adir / "projection.csv").exists()  # no pose in this trace


def test_analyze_mismatched_trace_rejected(parking_run, tmp_path, capsys):
    circuit, outdir = parking_run
    path = tmp_path / "foreign.csv"
    path.write_text("t,V_X,V_Y,reward\n0.1,-70.0,-70.0,0.0\n"
                    "0.2,-69.0,-70.5,0.0\n")
    code = run_cli("analyze", "--circuit", str(circuit),
                   "--params", str(outdir / "params.json"),
                   "--trace", str(path), "--out", str(tmp_path / "a"))
    assert code == 2
    assert "do not match" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Packaging-level entry points
# ---------------------------------------------------------------------------

def test_module_entry_point_reports_version():
    out = subprocess.run([sys.executable, "-m", "ncpolicy", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    from ncpolicy import __version__
    assert out.stdout.strip() == __version__


def test_console_script_installed():
    out = subprocess.run(["ncpolicy", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0
