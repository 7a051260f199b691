"""Affine maps between environment variables and neuron potentials.

A sensory component maps one environment variable onto a pair of neurons:
the positive neuron depolarizes linearly from -70 mV (rest) to -20 mV as
the variable runs from 0 to its upper range limit, the negative neuron
mirrors that over the lower limit.  One-sided variables bind a single
neuron.  Motor components invert the map: the positive neuron's potential
scales the upper action limit, the negative neuron's the lower one, and
the action is their sum clipped into range.

For environments whose observation or action spaces are wider than the
circuit's sensory/motor layer, learnable linear embed/readout matrices
bridge the gap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

POTENTIAL_REST_MV = -70.0
POTENTIAL_TOP_MV = -20.0
POTENTIAL_SPAN_MV = POTENTIAL_TOP_MV - POTENTIAL_REST_MV  # 50 mV


@dataclass(frozen=True)
class SensoryComponent:
    """One environment variable over [x_min, x_max] feeding a neuron pair."""

    x_min: float
    x_max: float
    has_positive: bool = True
    has_negative: bool = True

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"degenerate variable range [{self.x_min}, {self.x_max}]")
        if not (self.has_positive or self.has_negative):
            raise ValueError("sensory component binds no neurons")


@dataclass(frozen=True)
class MotorComponent:
    """One action variable over [y_min, y_max] read from a neuron pair."""

    y_min: float
    y_max: float
    has_positive: bool = True
    has_negative: bool = True


def _clip01(u: float) -> float:
    return 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)


def encode(x: float, comp: SensoryComponent) -> tuple[float, float]:
    """Map variable value `x` to (v_positive, v_negative) in millivolts.

    The active neuron of the pair runs from -70 mV to -20 mV over its
    half-range; the inactive one rests at -70 mV.  Values outside the
    range saturate.
    """
    v_pos = v_neg = POTENTIAL_REST_MV
    if x >= 0.0:
        if comp.has_positive and comp.x_max > 0.0:
            v_pos += POTENTIAL_SPAN_MV * _clip01(x / comp.x_max)
    else:
        if comp.has_negative and comp.x_min < 0.0:
            v_neg += POTENTIAL_SPAN_MV * _clip01(x / comp.x_min)
    return v_pos, v_neg


def decode(v_pos: float, v_neg: float, comp: MotorComponent) -> float:
    """Map motor-pair potentials back to an action value y = y_p + y_n."""
    y = 0.0
    if comp.has_positive:
        y += comp.y_max * _clip01((v_pos - POTENTIAL_REST_MV) / POTENTIAL_SPAN_MV)
    if comp.has_negative:
        y += comp.y_min * _clip01((v_neg - POTENTIAL_REST_MV) / POTENTIAL_SPAN_MV)
    return min(max(y, comp.y_min), comp.y_max)


@dataclass(frozen=True)
class EmbedReadout:
    """Learnable linear layers around the circuit.

    `input_matrix` (n_sensory_vars, n_obs) maps observations to sensory
    variables; `output_matrix` (n_actions, n_motor_vars) maps decoded
    motor variables to actions.  Either may be None for a direct binding.
    """

    input_matrix: Optional[np.ndarray] = None
    output_matrix: Optional[np.ndarray] = None


def embed(obs: np.ndarray, er: EmbedReadout) -> np.ndarray:
    """Project a raw observation vector onto the sensory variables."""
    if er.input_matrix is None:
        return np.asarray(obs, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (er.input_matrix.shape[1],):
        raise ValueError(f"observation shape {obs.shape} does not match embed "
                         f"matrix {er.input_matrix.shape}")
    return er.input_matrix @ obs


def readout(motor_vars: np.ndarray, er: EmbedReadout) -> np.ndarray:
    """Project decoded motor variables onto the action vector."""
    if er.output_matrix is None:
        return np.asarray(motor_vars, dtype=np.float64)
    motor_vars = np.asarray(motor_vars, dtype=np.float64)
    if motor_vars.shape != (er.output_matrix.shape[1],):
        raise ValueError(f"motor variables shape {motor_vars.shape} do not match "
                         f"readout matrix {er.output_matrix.shape}")
    return er.output_matrix @ motor_vars
