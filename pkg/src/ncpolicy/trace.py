"""Time-indexed rollout records and their CSV form.

One row per environment step: time, observation the policy saw, every
neuron potential after that step's solver sub-steps, the decoded action,
the reward, and (when the environment reports one) the 2-D pose.  The
CSV layout — `t, obs*, V_<neuron>*, action*, reward[, pose_x, pose_y]` —
is a documented interface: traces written by other tools in the same
layout are accepted by the analysis entry points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


@dataclass
class RolloutTrace:
    times: np.ndarray          # (T,) seconds, strictly increasing
    potentials: np.ndarray     # (T, n_neurons) mV
    neuron_names: tuple[str, ...]
    observations: np.ndarray   # (T, obs_dim)
    actions: np.ndarray        # (T, action_dim)
    rewards: np.ndarray        # (T,)
    pose: Optional[np.ndarray] = None  # (T, 2)

    def __post_init__(self):
        T = len(self.times)
        series = {"potentials": self.potentials, "observations": self.observations,
                  "actions": self.actions, "rewards": self.rewards}
        if self.pose is not None:
            series["pose"] = self.pose
        for name, arr in series.items():
            if arr.shape[0] != T:
                raise ValueError(f"{name} has {arr.shape[0]} rows for {T} times")
        if self.potentials.shape[1] != len(self.neuron_names):
            raise ValueError("neuron_names do not match potential columns")
        if T > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return len(self.times)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))


def write_trace_csv(trace: RolloutTrace, path: str | Path) -> None:
    header = ["t"]
    header += [f"obs{i}" for i in range(trace.observations.shape[1])]
    header += [f"V_{name}" for name in trace.neuron_names]
    header += [f"action{i}" for i in range(trace.actions.shape[1])]
    header += ["reward"]
    if trace.pose is not None:
        header += ["pose_x", "pose_y"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(trace.n_steps):
            row = [repr(float(trace.times[t]))]
            row += [repr(float(v)) for v in trace.observations[t]]
            row += [repr(float(v)) for v in trace.potentials[t]]
            row += [repr(float(v)) for v in trace.actions[t]]
            row.append(repr(float(trace.rewards[t])))
            if trace.pose is not None:
                row += [repr(float(trace.pose[t, 0])), repr(float(trace.pose[t, 1]))]
            writer.writerow(row)


def read_trace_csv(path: str | Path) -> RolloutTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not header or header[0] != "t":
        raise ValueError(f"{path}: not a trace file (first column must be 't')")

    obs_cols = [i for i, h in enumerate(header) if h.startswith("obs")]
    pot_cols = [i for i, h in enumerate(header) if h.startswith("V_")]
    act_cols = [i for i, h in enumerate(header) if h.startswith("action")]
    try:
        rew_col = header.index("reward")
    except ValueError:
        raise ValueError(f"{path}: trace file lacks a 'reward' column") from None
    pose_cols = None
    if "pose_x" in header and "pose_y" in header:
        pose_cols = [header.index("pose_x"), header.index("pose_y")]
    if not pot_cols:
        raise ValueError(f"{path}: trace file has no V_<neuron> columns")

    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return RolloutTrace(
        times=data[:, 0],
        potentials=data[:, pot_cols],
        neuron_names=tuple(header[i][2:] for i in pot_cols),
        observations=data[:, obs_cols],
        actions=data[:, act_cols],
        rewards=data[:, rew_col],
        pose=None if pose_cols is None else data[:, pose_cols],
    )
