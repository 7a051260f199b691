"""Neuronal circuit policies: biophysical neuron circuits as trainable
continuous-time controllers, with random-search training and
interpretability reports."""

from __future__ import annotations

__version__ = "0.1.0"

from .wiring import (
    CircuitParams,
    CircuitSpec,
    Edge,
    MotorBinding,
    Neuron,
    Role,
    SensoryBinding,
    SynapseKind,
    build_tw_circuit,
    build_tw_parking_circuit,
    decode_params,
    encode_params,
    init_params,
    load_params,
    load_spec,
    param_schema,
    random_circuit,
    save_params,
    save_spec,
    validate_spec,
)
from .dynamics import CircuitState, rest_state, step, synapse_activation
from .iomap import MotorComponent, SensoryComponent, decode, encode
from .policy import CircuitPolicy, simulate_episode_step
from .envs import (
    InvertedPendulumEnv,
    MountainCarEnv,
    ParkingCourse,
    ParkingEnv,
    make_env,
)
from .training import (
    ArsConfig,
    EstimateFilter,
    TrainRecord,
    ars_optimize,
    evaluate,
    objective_estimate,
    rollout,
    train,
)
from .trace import RolloutTrace, read_trace_csv, write_trace_csv
from .analysis import (
    Contribution,
    classify_pair,
    contribution_report,
    slope_angles,
    time_constant_range,
    time_constant_series,
)

__all__ = [
    "ArsConfig",
    "CircuitParams",
    "CircuitPolicy",
    "CircuitSpec",
    "CircuitState",
    "Contribution",
    "Edge",
    "EstimateFilter",
    "InvertedPendulumEnv",
    "MotorBinding",
    "MotorComponent",
    "MountainCarEnv",
    "Neuron",
    "ParkingCourse",
    "ParkingEnv",
    "Role",
    "RolloutTrace",
    "SensoryBinding",
    "SensoryComponent",
    "SynapseKind",
    "TrainRecord",
    "ars_optimize",
    "build_tw_circuit",
    "build_tw_parking_circuit",
    "classify_pair",
    "contribution_report",
    "decode",
    "decode_params",
    "encode",
    "encode_params",
    "evaluate",
    "init_params",
    "load_params",
    "load_spec",
    "make_env",
    "objective_estimate",
    "param_schema",
    "random_circuit",
    "read_trace_csv",
    "rest_state",
    "rollout",
    "save_params",
    "save_spec",
    "simulate_episode_step",
    "slope_angles",
    "step",
    "synapse_activation",
    "time_constant_range",
    "time_constant_series",
    "train",
    "validate_spec",
    "write_trace_csv",
]
