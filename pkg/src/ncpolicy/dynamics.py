"""Membrane and synapse dynamics with a fixed-timestep hybrid solver.

Each neuron i integrates a leaky membrane equation

    C_i dV_i/dt = g_leak,i (E_leak,i - V_i)
                  + sum_gap    w_hat_ij (V_j - V_i)
                  + sum_chem   w_ij g_ij(V_j) (E_rev,ij - V_i)

where the chemical synapse gate is a presynaptic sigmoid
g(V_j) = 1 / (1 + exp(-sigma (V_j - mu))) with fixed midpoint mu = -40 mV.

The solver treats every presynaptic quantity explicitly (frozen at time t)
and the postsynaptic potential implicitly, giving the per-neuron update

    V_i(t+dt) = [ V_i C/dt + g_leak E_leak + sum w g E_rev + sum w_hat V_j ]
                / [ C/dt + g_leak + sum w g + sum w_hat ]

which is a convex combination of V_i(t), the reversal potentials and the
presynaptic potentials.  That makes the step unconditionally stable and
keeps every potential inside the hull of those values.  Cost per step is
linear in neurons plus synapses.

Sensory neurons are pure inputs: their potentials are clamped to the
encoder output and never integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .wiring import (
    SIGMOID_MIDPOINT_MV,
    REVERSAL_MV,
    CircuitParams,
    CircuitSpec,
    Role,
    SynapseKind,
)


@dataclass
class CircuitState:
    """Mutable per-rollout state: one membrane potential per neuron (mV)."""

    potentials: np.ndarray
    time: float = 0.0

    def copy(self) -> "CircuitState":
        return CircuitState(self.potentials.copy(), self.time)


def rest_state(spec: CircuitSpec, params: CircuitParams) -> CircuitState:
    """Episode-reset state: every neuron at its leak reversal."""
    return CircuitState(params.eleak.copy(), 0.0)


# ---------------------------------------------------------------------------
# Point-wise model pieces
# ---------------------------------------------------------------------------

def synapse_activation(v_pre, slope, midpoint=SIGMOID_MIDPOINT_MV):
    """Sigmoid gate of a chemical synapse, strictly in (0, 1).

    Accepts scalars or arrays (broadcast like numpy ufuncs)."""
    v_pre = np.asarray(v_pre, dtype=np.float64)
    slope = np.asarray(slope, dtype=np.float64)
    if not (np.all(np.isfinite(v_pre)) and np.all(np.isfinite(slope))
            and math.isfinite(midpoint)):
        raise ValueError("synapse_activation requires finite inputs")
    if np.any(slope <= 0):
        raise ValueError("sigmoid slope must be positive")
    out = 1.0 / (1.0 + np.exp(-slope * (v_pre - midpoint)))
    return float(out) if out.ndim == 0 else out


def chemical_current(v_post: float, activation: float, weight: float,
                     reversal: float) -> float:
    """Current through a chemical synapse: w * (E_rev - V_post) * gate."""
    return weight * (reversal - v_post) * activation


def gap_current(v_post: float, v_pre: float, weight: float) -> float:
    """Ohmic gap-junction current into the post-side neuron."""
    return weight * (v_pre - v_post)


def leak_current(v: float, leak_conductance: float, leak_reversal: float) -> float:
    """Restoring leak current toward the leak reversal potential."""
    return leak_conductance * (leak_reversal - v)


# ---------------------------------------------------------------------------
# Compiled topology + vectorized step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompiledTopology:
    """Index arrays extracted from a CircuitSpec for vectorized stepping."""

    n_neurons: int
    chem_pre: np.ndarray
    chem_post: np.ndarray
    chem_edge: np.ndarray      # edge indices into params.weight/params.sigma
    chem_reversal: np.ndarray  # mV per chemical edge
    gap_pre: np.ndarray
    gap_post: np.ndarray
    gap_edge: np.ndarray
    sensory: np.ndarray        # indices of sensory neurons


def compile_topology(spec: CircuitSpec) -> CompiledTopology:
    chem = spec.chemical_edges()
    gap = spec.gap_edges()
    return CompiledTopology(
        n_neurons=spec.n_neurons,
        chem_pre=np.array([e.pre for _, e in chem], dtype=np.int64),
        chem_post=np.array([e.post for _, e in chem], dtype=np.int64),
        chem_edge=np.array([i for i, _ in chem], dtype=np.int64),
        chem_reversal=np.array([REVERSAL_MV[e.kind] for _, e in chem]),
        gap_pre=np.array([e.pre for _, e in gap], dtype=np.int64),
        gap_post=np.array([e.post for _, e in gap], dtype=np.int64),
        gap_edge=np.array([i for i, _ in gap], dtype=np.int64),
        sensory=np.array(spec.sensory_indices(), dtype=np.int64),
    )


def step(spec: CircuitSpec, params: CircuitParams, state: CircuitState,
         clamped_inputs: dict[int | str, float] | None = None,
         dt: float = 0.01, topology: CompiledTopology | None = None) -> CircuitState:
    """Advance the circuit by one solver step of size `dt` seconds.

    `clamped_inputs` maps sensory neurons (by index or name) to the
    potential they are held at for the whole step.  Unlisted sensory
    neurons keep their current potential, also clamped.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = np.asarray(state.potentials, dtype=np.float64)
    if v.shape != (spec.n_neurons,):
        raise ValueError(f"state has {v.shape[0]} potentials for "
                         f"{spec.n_neurons} neurons")
    if params.cm.shape != (spec.n_neurons,) or params.weight.shape != (spec.n_edges,):
        raise ValueError("params arrays do not match spec sizes")
    topo = topology if topology is not None else compile_topology(spec)

    v = v.copy()
    if clamped_inputs:
        sens = set(topo.sensory.tolist())
        for key, value in clamped_inputs.items():
            idx = spec.index_of(key) if isinstance(key, str) else int(key)
            if idx not in sens:
                raise ValueError(f"clamped input targets non-sensory neuron "
                                 f"{spec.neurons[idx].name}")
            v[idx] = value

    cdt = params.cm / dt
    num = v * cdt + params.gleak * params.eleak
    den = cdt + params.gleak

    if len(topo.chem_pre):
        sig = params.sigma[topo.chem_edge]
        gate = 1.0 / (1.0 + np.exp(-sig * (v[topo.chem_pre] - SIGMOID_MIDPOINT_MV)))
        cond = params.weight[topo.chem_edge] * gate
        np.add.at(num, topo.chem_post, cond * topo.chem_reversal)
        np.add.at(den, topo.chem_post, cond)
    if len(topo.gap_pre):
        w = params.weight[topo.gap_edge]
        np.add.at(num, topo.gap_post, w * v[topo.gap_pre])
        np.add.at(den, topo.gap_post, w)
        np.add.at(num, topo.gap_pre, w * v[topo.gap_post])
        np.add.at(den, topo.gap_pre, w)

    v_next = num / den
    v_next[topo.sensory] = v[topo.sensory]
    return CircuitState(v_next, state.time + dt)
