"""Command-line front end.

Subcommands:

* ``gen-circuit`` — write a circuit spec JSON (tap-withdrawal, its
  parking variant, or a seeded random baseline).
* ``train``       — adaptive random search against a bundled environment;
  writes learned parameters, the per-iteration record CSV, a learning
  curve PNG, and a manifest sufficient to reproduce the run.
* ``rollout``     — run one episode, print the return, optionally dump
  the trace CSV.
* ``analyze``     — contribution verdicts, time-constant ranges and
  activity projection from a trace, as CSV/JSON plus rendered figures.

The ``NCP_LOG`` environment variable sets the log level (debug, info,
warning, error).  All artifact files are written atomically (temp file +
rename), so a crashed run never leaves half-written outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .envs import load_course, make_env
from .training import (
    ArsConfig,
    EstimateFilter,
    TrainRecord,
    parse_filter,
    rollout,
    save_record_csv,
    train,
)
from .trace import read_trace_csv, write_trace_csv
from .wiring import (
    build_tw_circuit,
    build_tw_parking_circuit,
    encode_params,
    load_params,
    load_spec,
    params_from_dict,
    params_to_dict,
    random_circuit,
    save_params,
    save_spec,
    spec_from_dict,
    spec_to_dict,
    validate_spec,
)

log = logging.getLogger("ncpolicy.cli")


def _setup_logging() -> None:
    level_name = os.environ.get("NCP_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_move(tmp: Path, path: Path) -> None:
    os.replace(tmp, path)


def _load_circuit(path: str):
    spec = load_spec(path)
    problems = validate_spec(spec)
    if problems:
        raise ValueError("invalid circuit spec:\n  " + "\n  ".join(problems))
    return spec


def _make_env_from_args(args) -> object:
    overrides = {}
    if getattr(args, "course", None):
        overrides["course"] = load_course(args.course)
    if getattr(args, "max_steps", None):
        overrides["max_steps"] = args.max_steps
    return make_env(args.env, **overrides)


# ---------------------------------------------------------------------------
# gen-circuit
# ---------------------------------------------------------------------------

def cmd_gen_circuit(args) -> int:
    if args.tw:
        spec = build_tw_circuit()
    elif args.tw_parking:
        spec = build_tw_parking_circuit()
    else:
        n, m = args.random
        spec = random_circuit(n, m, args.sensory, args.motor, args.seed)
    out = Path(args.out)
    save_spec(spec, out)
    print(f"wrote {out} ({spec.n_neurons} neurons, {spec.n_edges} edges, "
          f"sparsity {spec.sparsity():.0%})")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _config_from_args(args) -> ArsConfig:
    return ArsConfig(
        sigma0=args.sigma0,
        alpha=args.alpha,
        max_iterations=args.iters,
        rollouts_per_estimate=args.rollouts,
        filter=parse_filter(args.filter),
        stale_reeval_n=args.stale_n if args.stale_n >= 0 else None,
        rng_seed=args.seed,
        jobs=args.jobs,
        target_return=args.target,
    )


def _manifest_payload(args, spec, env, config, theta0_dict) -> dict:
    env_overrides = {}
    if getattr(args, "max_steps", None):
        env_overrides["max_steps"] = args.max_steps
    if getattr(env, "course", None) is not None:
        env_overrides["course"] = env.course.to_dict()
    return {
        "command": "train",
        "version": __version__,
        "env": args.env,
        "env_overrides": env_overrides,
        "circuit_file": getattr(args, "circuit", None),
        "circuit": spec_to_dict(spec),
        "initial_params": theta0_dict,
        "ars": {
            "sigma0": config.sigma0,
            "alpha": config.alpha,
            "max_iterations": config.max_iterations,
            "rollouts_per_estimate": config.rollouts_per_estimate,
            "filter": str(config.filter),
            "stale_reeval_n": config.stale_reeval_n,
            "rng_seed": config.rng_seed,
            "jobs": config.jobs,
            "target_return": config.target_return,
        },
    }


def _train_inputs_from_manifest(path: str):
    d = json.loads(Path(path).read_text())
    if d.get("command") != "train":
        raise ValueError(f"{path}: not a train manifest")
    spec = spec_from_dict(d["circuit"])
    ars = d["ars"]
    config = ArsConfig(
        sigma0=ars["sigma0"], alpha=ars["alpha"],
        max_iterations=ars["max_iterations"],
        rollouts_per_estimate=ars["rollouts_per_estimate"],
        filter=parse_filter(ars["filter"]),
        stale_reeval_n=ars["stale_reeval_n"], rng_seed=ars["rng_seed"],
        jobs=ars["jobs"], target_return=ars.get("target_return"))
    overrides = {}
    env_over = d.get("env_overrides", {})
    if env_over.get("max_steps"):
        overrides["max_steps"] = env_over["max_steps"]
    if env_over.get("course"):
        from .envs import ParkingCourse
        overrides["course"] = ParkingCourse.from_dict(env_over["course"])
    env = make_env(d["env"], **overrides)
    theta0 = None
    if d.get("initial_params") is not None:
        theta0 = encode_params(params_from_dict(d["initial_params"], spec), spec)
    return spec, env, config, theta0, d


def cmd_train(args) -> int:
    if args.from_manifest:
        spec, env, config, theta0, manifest = _train_inputs_from_manifest(
            args.from_manifest)
    else:
        if not args.circuit:
            raise ValueError("train needs --circuit (or --from-manifest)")
        spec = _load_circuit(args.circuit)
        env = _make_env_from_args(args)
        config = _config_from_args(args)
        theta0 = None
        theta0_dict = None
        if args.params:
            params0 = load_params(args.params, spec)
            theta0 = encode_params(params0, spec)
            theta0_dict = params_to_dict(params0, spec)
        manifest = _manifest_payload(args, spec, env, config, theta0_dict)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    total_iters = config.max_iterations
    report_every = max(1, total_iters // 20)
    t_start = time.monotonic()

    def progress(k, est, sigma, accepted):
        if k % report_every == 0 or k == total_iters:
            log.info("iter %d/%d  estimate %.6g  sigma %.3g",
                     k, total_iters, est, sigma)

    params, record = train(spec, env, config, theta0, callback=progress)
    elapsed = time.monotonic() - t_start

    params_path = outdir / "params.json"
    record_path = outdir / "train_record.csv"
    curve_path = outdir / "learning_curve.png"
    manifest_path = outdir / "manifest.json"

    tmp = params_path.with_suffix(".json.tmp")
    save_params(params, spec, tmp)
    _atomic_move(tmp, params_path)
    tmp = record_path.with_suffix(".csv.tmp")
    save_record_csv(record, tmp)
    _atomic_move(tmp, record_path)
    from .figures import save_learning_curve
    tmp = curve_path.with_name("learning_curve.tmp.png")
    save_learning_curve(record, tmp)
    _atomic_move(tmp, curve_path)
    _atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")

    print(f"trained {record.n_iterations} iterations in {elapsed:.1f}s; "
          f"final estimate {record.final_estimate()!r}")
    print(f"wrote {params_path}, {record_path}, {curve_path}, {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

def cmd_rollout(args) -> int:
    spec = _load_circuit(args.circuit)
    if not Path(args.params).exists():
        raise FileNotFoundError(f"parameter file not found: {args.params}")
    params = load_params(args.params, spec)
    env = _make_env_from_args(args)
    total, trace = rollout(spec, params, env, seed=args.seed,
                           record_trace=args.trace is not None)
    if args.trace:
        write_trace_csv(trace, args.trace)
        log.info("trace written to %s (%d steps)", args.trace, trace.n_steps)
    print(total)
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    from .analysis import (
        contribution_report,
        motor_targets,
        projection_to_csv,
        report_to_csv,
        report_to_json,
        tau_range_to_csv,
        time_constant_range,
    )
    from .figures import (
        save_activity_projection,
        save_slope_histograms,
        save_tau_ranges,
    )

    spec = _load_circuit(args.circuit)
    params = load_params(args.params, spec)
    trace = read_trace_csv(args.trace)
    if tuple(trace.neuron_names) != tuple(spec.neuron_names()):
        raise ValueError("trace neuron columns do not match the circuit spec")
    targets = args.target if args.target else motor_targets(spec)
    if not targets:
        raise ValueError("no motor neurons to analyze; pass --target")

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    report = contribution_report(trace, targets)
    report_to_csv(report, outdir / "contributions.csv")
    report_to_json(report, outdir / "contributions.json")
    ranges = time_constant_range(trace, spec, params)
    tau_range_to_csv(ranges, outdir / "tau_ranges.csv")
    save_tau_ranges(ranges, outdir / "tau_ranges.png")
    for t in targets:
        save_slope_histograms(report, t, outdir / f"slopes_{t}.png")
    wrote = ["contributions.csv", "contributions.json", "tau_ranges.csv",
             "tau_ranges.png"] + [f"slopes_{t}.png" for t in targets]
    if trace.pose is not None:
        projection_to_csv(trace, outdir / "projection.csv")
        save_activity_projection(trace, outdir / "projection.png")
        wrote += ["projection.csv", "projection.png"]
    print(f"wrote {len(wrote)} files to {outdir}: " + ", ".join(wrote))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncpolicy",
        description="Train, run and interpret neuronal circuit policies "
                    "on desk-scale control environments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-circuit", help="write a circuit spec JSON")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--tw", action="store_true",
                      help="bundled tap-withdrawal circuit (11 neurons)")
    kind.add_argument("--tw-parking", action="store_true",
                      help="tap-withdrawal variant with three motor neurons")
    kind.add_argument("--random", nargs=2, type=int, metavar=("N", "M"),
                      help="random circuit with N neurons and M synapses")
    g.add_argument("--sensory", type=int, default=4,
                   help="sensory neuron count for --random (default 4)")
    g.add_argument("--motor", type=int, default=2,
                   help="motor neuron count for --random (default 2)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_circuit)

    t = sub.add_parser("train", help="optimize circuit parameters on an environment")
    t.add_argument("--circuit", help="circuit spec JSON")
    t.add_argument("--params", help="initial parameter JSON (default: random init)")
    t.add_argument("--env", default="mountaincar",
                   help="mountaincar | pendulum | parking")
    t.add_argument("--iters", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--sigma0", type=float, default=0.3)
    t.add_argument("--alpha", type=float, default=1.0)
    t.add_argument("--rollouts", type=int, default=8, metavar="N",
                   help="rollouts per objective estimate")
    t.add_argument("--filter", default="mean",
                   help="estimate filter: mean | worstk:K")
    t.add_argument("--stale-n", type=int, default=20,
                   help="rejections before incumbent re-estimation; -1 disables")
    t.add_argument("--jobs", type=int, default=1,
                   help="concurrent rollouts per estimate")
    t.add_argument("--target", type=float, default=None,
                   help="stop early once the return estimate reaches this")
    t.add_argument("--course", help="parking course JSON override")
    t.add_argument("--max-steps", type=int, default=None,
                   help="episode step cap override")
    t.add_argument("--from-manifest", metavar="PATH",
                   help="reproduce a previous run from its manifest")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("rollout", help="run one episode and print the return")
    r.add_argument("--circuit", required=True)
    r.add_argument("--params", required=True)
    r.add_argument("--env", default="mountaincar")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--course", help="parking course JSON override")
    r.add_argument("--max-steps", type=int, default=None)
    r.add_argument("--trace", help="write the rollout trace CSV here")
    r.set_defaults(func=cmd_rollout)

    a = sub.add_parser("analyze", help="interpretability reports from a trace")
    a.add_argument("--circuit", required=True)
    a.add_argument("--params", required=True)
    a.add_argument("--trace", required=True, help="rollout trace CSV")
    a.add_argument("--target", action="append", metavar="NEURON",
                   help="target neuron (repeatable; default: all motor neurons)")
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
