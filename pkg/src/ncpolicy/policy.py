"""Closed-loop policy: a circuit bound to an environment's variables.

Binding resolution pairs each sensory component of the circuit spec with
an environment observation variable (index plus value range) and each
motor component with an action range.  When the spec declares linear
embed/readout layers, the circuit instead works over synthetic variables
in [-1, 1] and the learnable matrices bridge to the raw observation and
action spaces.

Acting is encode -> a fixed number of solver sub-steps with sensory
neurons clamped -> decode.  The policy owns its circuit state; reset
returns every neuron to its leak reversal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import (
    SIGMOID_MIDPOINT_MV,
    CircuitState,
    CompiledTopology,
    compile_topology,
    rest_state,
)
from .iomap import (
    POTENTIAL_REST_MV,
    POTENTIAL_SPAN_MV,
    EmbedReadout,
    MotorComponent,
    SensoryComponent,
    decode,
    embed,
    encode,
    readout,
)
from .wiring import CircuitParams, CircuitSpec

# Synthetic variable range used on both sides of the embed/readout layers.
MIX_VAR_LIMIT = 1.0

DEFAULT_DT_ODE = 0.01
DEFAULT_SUBSTEPS = 10


class BindingError(ValueError):
    """Circuit sensory/motor bindings do not fit the environment."""


def _as_sensory_var(v) -> tuple[int, float, float]:
    if hasattr(v, "obs_index"):
        return int(v.obs_index), float(v.lo), float(v.hi)
    idx, lo, hi = v
    return int(idx), float(lo), float(hi)


@dataclass
class PolicyArrays:
    """Flat array view of spec + params + bindings, shared by the
    vectorized stepping path and the compiled episode kernels."""

    cm: np.ndarray
    gleak: np.ndarray
    eleak: np.ndarray
    is_sensory: np.ndarray       # (n,) bool mask; these neurons never integrate
    chem_pre: np.ndarray
    chem_post: np.ndarray
    chem_weight: np.ndarray
    chem_sigma: np.ndarray
    chem_reversal: np.ndarray
    gap_pre: np.ndarray
    gap_post: np.ndarray
    gap_weight: np.ndarray
    sv_obs: np.ndarray           # (n_vars,) observation index per sensory variable
    sv_lo: np.ndarray
    sv_hi: np.ndarray
    sv_pos: np.ndarray           # neuron index or -1
    sv_neg: np.ndarray
    mv_pos: np.ndarray           # (n_actions,) neuron index or -1
    mv_neg: np.ndarray
    mv_lo: np.ndarray
    mv_hi: np.ndarray
    dt_ode: float
    substeps: int


def resolve_components(spec: CircuitSpec, env) -> tuple[list[SensoryComponent],
                                                        list[MotorComponent]]:
    """Match spec bindings against the environment's declared variables.

    Returns per-variable sensory components and per-action motor
    components, ordered by variable/action index.  Raises BindingError on
    any arity disagreement.
    """
    sensory_vars = [_as_sensory_var(v) for v in getattr(env, "sensory_vars", ())]
    if spec.embed_obs is not None:
        if spec.embed_obs != env.obs_dim:
            raise BindingError(
                f"embed layer expects {spec.embed_obs} observations but the "
                f"environment produces {env.obs_dim}")
    else:
        if len(spec.sensory) != len(sensory_vars):
            raise BindingError(
                f"circuit binds {len(spec.sensory)} sensory variables but the "
                f"environment exposes {len(sensory_vars)}")

    svars = sorted(spec.sensory, key=lambda b: b.var)
    if [b.var for b in svars] != list(range(len(svars))):
        raise BindingError("sensory bindings must cover variables 0..k-1 exactly")
    sens_comps = []
    for b in svars:
        if spec.embed_obs is not None:
            lo, hi = -MIX_VAR_LIMIT, MIX_VAR_LIMIT
        else:
            _, lo, hi = sensory_vars[b.var]
        sens_comps.append(SensoryComponent(
            lo, hi, has_positive=b.positive is not None,
            has_negative=b.negative is not None))

    if spec.readout_actions is not None:
        if spec.readout_actions != env.action_dim:
            raise BindingError(
                f"readout layer produces {spec.readout_actions} actions but the "
                f"environment takes {env.action_dim}")
    else:
        if len(spec.motor) != env.action_dim:
            raise BindingError(
                f"circuit binds {len(spec.motor)} actions but the environment "
                f"takes {env.action_dim}")

    mvars = sorted(spec.motor, key=lambda b: b.act)
    if [b.act for b in mvars] != list(range(len(mvars))):
        raise BindingError("motor bindings must cover actions 0..k-1 exactly")
    motor_comps = []
    for b in mvars:
        if spec.readout_actions is not None:
            lo, hi = -MIX_VAR_LIMIT, MIX_VAR_LIMIT
        else:
            lo, hi = env.action_ranges[b.act]
        motor_comps.append(MotorComponent(
            lo, hi, has_positive=b.positive is not None,
            has_negative=b.negative is not None))
    return sens_comps, motor_comps


def build_policy_arrays(spec: CircuitSpec, params: CircuitParams, env,
                        dt_ode: float = DEFAULT_DT_ODE,
                        substeps: int = DEFAULT_SUBSTEPS) -> PolicyArrays:
    """Direct-binding array view for the fast stepping paths.

    Embed/readout circuits are not representable here; the generic
    CircuitPolicy path handles those.
    """
    if spec.embed_obs is not None or spec.readout_actions is not None:
        raise ValueError("array view does not cover embed/readout circuits")
    sens_comps, motor_comps = resolve_components(spec, env)
    topo = compile_topology(spec)
    sensory_vars = [_as_sensory_var(v) for v in env.sensory_vars]

    svars = sorted(spec.sensory, key=lambda b: b.var)
    mvars = sorted(spec.motor, key=lambda b: b.act)
    neuron_or_minus1 = (lambda name: -1 if name is None else spec.index_of(name))

    is_sensory = np.zeros(spec.n_neurons, dtype=np.bool_)
    is_sensory[topo.sensory] = True
    return PolicyArrays(
        cm=params.cm.astype(np.float64),
        gleak=params.gleak.astype(np.float64),
        eleak=params.eleak.astype(np.float64),
        is_sensory=is_sensory,
        chem_pre=topo.chem_pre,
        chem_post=topo.chem_post,
        chem_weight=params.weight[topo.chem_edge].astype(np.float64),
        chem_sigma=params.sigma[topo.chem_edge].astype(np.float64),
        chem_reversal=topo.chem_reversal.astype(np.float64),
        gap_pre=topo.gap_pre,
        gap_post=topo.gap_post,
        gap_weight=params.weight[topo.gap_edge].astype(np.float64),
        sv_obs=np.array([sensory_vars[b.var][0] for b in svars], dtype=np.int64),
        sv_lo=np.array([c.x_min for c in sens_comps]),
        sv_hi=np.array([c.x_max for c in sens_comps]),
        sv_pos=np.array([neuron_or_minus1(b.positive) for b in svars], dtype=np.int64),
        sv_neg=np.array([neuron_or_minus1(b.negative) for b in svars], dtype=np.int64),
        mv_pos=np.array([neuron_or_minus1(b.positive) for b in mvars], dtype=np.int64),
        mv_neg=np.array([neuron_or_minus1(b.negative) for b in mvars], dtype=np.int64),
        mv_lo=np.array([c.y_min for c in motor_comps]),
        mv_hi=np.array([c.y_max for c in motor_comps]),
        dt_ode=float(dt_ode),
        substeps=int(substeps),
    )


def advance_clamped(arr: PolicyArrays, v: np.ndarray) -> np.ndarray:
    """One semi-implicit solver step over the array view, in place-free
    form.  Sensory entries of `v` are treated as already clamped and are
    carried through unchanged."""
    cdt = arr.cm / arr.dt_ode
    num = v * cdt + arr.gleak * arr.eleak
    den = cdt + arr.gleak
    if len(arr.chem_pre):
        gate = 1.0 / (1.0 + np.exp(-arr.chem_sigma
                                   * (v[arr.chem_pre] - SIGMOID_MIDPOINT_MV)))
        cond = arr.chem_weight * gate
        np.add.at(num, arr.chem_post, cond * arr.chem_reversal)
        np.add.at(den, arr.chem_post, cond)
    if len(arr.gap_pre):
        np.add.at(num, arr.gap_post, arr.gap_weight * v[arr.gap_pre])
        np.add.at(den, arr.gap_post, arr.gap_weight)
        np.add.at(num, arr.gap_pre, arr.gap_weight * v[arr.gap_post])
        np.add.at(den, arr.gap_pre, arr.gap_weight)
    v_next = num / den
    return np.where(arr.is_sensory, v, v_next)


class CircuitPolicy:
    """Stateful policy closing the loop between a circuit and one
    environment's observation/action conventions."""

    def __init__(self, spec: CircuitSpec, params: CircuitParams, env,
                 dt_ode: float = DEFAULT_DT_ODE,
                 ode_substeps: int = DEFAULT_SUBSTEPS):
        if ode_substeps < 1:
            raise ValueError("need at least one solver sub-step per action")
        self.spec = spec
        self.params = params
        self.obs_dim = int(env.obs_dim)
        self.action_dim = int(env.action_dim)
        self.action_ranges = tuple(env.action_ranges)
        self.dt_ode = float(dt_ode)
        self.ode_substeps = int(ode_substeps)
        self.sens_comps, self.motor_comps = resolve_components(spec, env)
        self.topology: CompiledTopology = compile_topology(spec)
        self.mixer = EmbedReadout(input_matrix=params.embed,
                                  output_matrix=params.readout)
        self._svars = sorted(spec.sensory, key=lambda b: b.var)
        self._mvars = sorted(spec.motor, key=lambda b: b.act)
        self._sv_obs = None
        if spec.embed_obs is None:
            env_vars = [_as_sensory_var(v) for v in env.sensory_vars]
            self._sv_obs = [env_vars[b.var][0] for b in self._svars]
        self._direct = (spec.embed_obs is None and spec.readout_actions is None)
        self._arrays: Optional[PolicyArrays] = None
        if self._direct:
            self._arrays = build_policy_arrays(spec, params, env, dt_ode,
                                               ode_substeps)
        self.state: CircuitState = rest_state(spec, params)

    @property
    def arrays(self) -> Optional[PolicyArrays]:
        return self._arrays

    def reset(self) -> None:
        self.state = rest_state(self.spec, self.params)

    def sensory_clamp(self, obs: np.ndarray) -> list[tuple[int, float]]:
        """Encode an observation into (neuron index, mV) clamp targets."""
        obs = np.asarray(obs, dtype=np.float64).ravel()
        if obs.shape != (self.obs_dim,):
            raise BindingError(f"observation has {obs.shape[0]} entries, "
                               f"expected {self.obs_dim}")
        if self.spec.embed_obs is not None:
            xs = embed(obs, self.mixer)
        else:
            xs = obs[self._sv_obs]
        clamps: list[tuple[int, float]] = []
        for b, comp, x in zip(self._svars, self.sens_comps, xs):
            v_pos, v_neg = encode(float(x), comp)
            if b.positive is not None:
                clamps.append((self.spec.index_of(b.positive), v_pos))
            if b.negative is not None:
                clamps.append((self.spec.index_of(b.negative), v_neg))
        return clamps

    def motor_action(self, potentials: np.ndarray) -> np.ndarray:
        """Decode motor-neuron potentials into the environment action."""
        motor_vars = np.empty(len(self._mvars))
        for k, (b, comp) in enumerate(zip(self._mvars, self.motor_comps)):
            v_pos = potentials[self.spec.index_of(b.positive)] \
                if b.positive is not None else POTENTIAL_REST_MV
            v_neg = potentials[self.spec.index_of(b.negative)] \
                if b.negative is not None else POTENTIAL_REST_MV
            motor_vars[k] = decode(v_pos, v_neg, comp)
        if self.spec.readout_actions is None:
            return motor_vars
        action = readout(motor_vars, self.mixer)
        lo = np.array([r[0] for r in self.action_ranges])
        hi = np.array([r[1] for r in self.action_ranges])
        return np.clip(action, lo, hi)

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Encode, advance the circuit through the sub-steps, decode."""
        v = self.state.potentials.copy()
        for idx, mv in self.sensory_clamp(obs):
            v[idx] = mv
        if self._arrays is not None:
            for _ in range(self.ode_substeps):
                v = advance_clamped(self._arrays, v)
        else:
            # embed/readout path: reuse the reference solver step
            from .dynamics import step as _step
            st = CircuitState(v, self.state.time)
            for _ in range(self.ode_substeps):
                st = _step(self.spec, self.params, st, None, self.dt_ode,
                           self.topology)
            v = st.potentials
        self.state = CircuitState(v, self.state.time
                                  + self.dt_ode * self.ode_substeps)
        return self.motor_action(v)


def simulate_episode_step(policy: CircuitPolicy, observation: np.ndarray,
                          dt_env: float = 0.1,
                          ode_substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """One environment step worth of circuit time: `ode_substeps` solver
    steps of size dt_env/ode_substeps, returning the decoded action."""
    if ode_substeps < 1:
        raise ValueError("ode_substeps must be at least 1")
    policy.dt_ode = dt_env / ode_substeps
    policy.ode_substeps = ode_substeps
    if policy._arrays is not None:
        policy._arrays.dt_ode = policy.dt_ode
        policy._arrays.substeps = ode_substeps
    return policy.act(observation)
