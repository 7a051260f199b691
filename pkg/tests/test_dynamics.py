import time

import numpy as np
import pytest

from ncpolicy.dynamics import (
    CircuitState,
    chemical_current,
    compile_topology,
    gap_current,
    rest_state,
    step,
    synapse_activation,
)
from ncpolicy.wiring import (
    CircuitSpec,
    Edge,
    Neuron,
    Role,
    SynapseKind,
    build_tw_circuit,
    init_params,
    random_circuit,
)

from oracles import explicit_euler_trajectory


def isolated_neuron_spec():
    return CircuitSpec(
        neurons=(Neuron("N0", Role.INTER),),
        edges=(),
        sensory=(),
        motor=(),
        embed_obs=None,
        readout_actions=None,
    )


def gap_pair_spec():
    return CircuitSpec(
        neurons=(Neuron("A", Role.INTER), Neuron("B", Role.INTER)),
        edges=(Edge(0, 1, SynapseKind.GAP),),
        sensory=(),
        motor=(),
        embed_obs=None,
        readout_actions=None,
    )


def params_for(spec, cm, gleak, eleak, weight, sigma=0.25):
    from ncpolicy.wiring import CircuitParams
    n, m = spec.n_neurons, spec.n_edges
    return CircuitParams(
        cm=np.full(n, cm), gleak=np.full(n, gleak), eleak=np.full(n, eleak),
        weight=np.full(m, weight), sigma=np.full(m, sigma),
        embed=None, readout=None)


# ---------------------------------------------------------------------------
# Sigmoid gate
# ---------------------------------------------------------------------------

def test_sigmoid_midpoint_and_monotonicity():
    v = np.linspace(-100.0, 20.0, 481)
    for slope in (0.05, 0.2, 0.5):
        g = synapse_activation(v, slope)
        assert np.all(np.diff(g) > 0), "activation must be strictly increasing"
        assert np.all((g > 0) & (g < 1))
        assert abs(synapse_activation(-40.0, slope) - 0.5) < 1e-12


def test_sigmoid_derivative_at_midpoint():
    # d/dV [1/(1+exp(-s(V-mu)))] at V=mu equals s/4
    h = 1e-4
    for slope in (0.05, 0.17, 0.5):
        d = (synapse_activation(-40.0 + h, slope)
             - synapse_activation(-40.0 - h, slope)) / (2 * h)
        assert abs(d - slope / 4.0) < 1e-9


def test_sigmoid_rejects_bad_slope():
    with pytest.raises(ValueError):
        synapse_activation(-40.0, 0.0)
    with pytest.raises(ValueError):
        synapse_activation(np.nan, 0.25)


def test_current_helpers_signs():
    # excitatory synapse pulls a hyperpolarized neuron up toward 0
    assert chemical_current(-90.0, 1.0, 1.0, 0.0) > 0
    # (v=0, weight 1, E_R=-90) -> -90
    assert chemical_current(0.0, 1.0, 1.0, -90.0) == -90.0
    # (v=-90, weight 2, v_pre at -45 through gap) -> 90
    assert gap_current(-90.0, -45.0, 2.0) == 90.0


# ---------------------------------------------------------------------------
# Single-step properties
# ---------------------------------------------------------------------------

def test_leak_only_contraction():
    spec = isolated_neuron_spec()
    params = params_for(spec, 0.5, 1.0, -90.0, 0.0)
    state = CircuitState(potentials=np.array([0.0]), time=0.0)
    for dt in (1e-4, 0.01, 0.5, 10.0):
        nxt = step(spec, params, state, None, dt=dt)
        v = nxt.potentials[0]
        assert -90.0 < v < 0.0
        assert abs(v - (-90.0)) < abs(0.0 - (-90.0))


def test_fixed_point_at_leak_reversal():
    spec = isolated_neuron_spec()
    params = params_for(spec, 0.2, 0.7, -63.0, 0.0)
    state = CircuitState(potentials=np.array([-63.0]), time=0.0)
    for dt in (0.001, 0.01, 1.0):
        nxt = step(spec, params, state, None, dt=dt)
        assert abs(nxt.potentials[0] - (-63.0)) < 1e-9


def test_fixed_point_of_coupled_circuit():
    # settle a random coupled circuit, then verify the settled state is a
    # true equilibrium of the continuous dynamics (moved < 1e-9 by a step)
    for seed in (0, 1):
        spec = random_circuit(5, 8, 1, 1, seed)
        params = init_params(spec, seed + 10)
        clamps = {i: -45.0 for i in spec.sensory_indices()}
        state = rest_state(spec, params)
        topo = compile_topology(spec)
        for _ in range(3000):
            state = step(spec, params, state, clamps, dt=1.0, topology=topo)
        settled = state.potentials.copy()
        after = step(spec, params, state, clamps, dt=0.01, topology=topo)
        assert np.max(np.abs(after.potentials - settled)) < 1e-9


def test_boundedness_over_random_circuits():
    # the semi-implicit update is a convex combination of the previous
    # potentials, the leak reversals and the synaptic reversals {0, -90}
    rng = np.random.default_rng(2024)
    total_steps = 0
    for seed in range(5):
        spec = random_circuit(7, 14, 2, 1, seed)
        params = init_params(spec, seed)
        v0 = rng.uniform(-120.0, 30.0, spec.n_neurons)
        clamps = {i: float(rng.uniform(-70, -20))
                  for i in spec.sensory_indices()}
        state = CircuitState(potentials=v0, time=0.0)
        topo = compile_topology(spec)
        for k in range(2000):
            prev = state.potentials
            bound_set = np.concatenate(
                [prev, params.eleak, [0.0, -90.0],
                 list(clamps.values())])
            lo, hi = bound_set.min(), bound_set.max()
            state = step(spec, params, state, clamps,
                         dt=10.0 ** rng.uniform(-3, 0.5), topology=topo)
            assert np.all(state.potentials >= lo - 1e-9)
            assert np.all(state.potentials <= hi + 1e-9)
            total_steps += 1
    assert total_steps == 10000


def test_unclamped_sensors_hold_their_potential():
    spec = build_tw_circuit()
    params = init_params(spec, 0)
    state = rest_state(spec, params)
    sens = spec.sensory_indices()
    state.potentials[sens[0]] = -33.0
    nxt = step(spec, params, state, None, dt=0.01)
    assert nxt.potentials[sens[0]] == -33.0


def test_clamp_applies_before_currents():
    # the clamped value must drive the postsynaptic side within the same step
    spec = build_tw_circuit()
    params = init_params(spec, 1)
    params.weight[:] = 2.0
    state = rest_state(spec, params)
    idx = {n.name: i for i, n in enumerate(spec.neurons)}
    rest_pvc = state.potentials[idx["PVC"]]
    nxt = step(spec, params, state, {"PLM": -20.0}, dt=0.5)
    assert nxt.potentials[idx["PLM"]] == -20.0
    assert nxt.potentials[idx["PVC"]] != rest_pvc


def test_clamping_non_sensory_rejected():
    spec = build_tw_circuit()
    params = init_params(spec, 0)
    state = rest_state(spec, params)
    with pytest.raises(ValueError):
        step(spec, params, state, {"AVA": -40.0}, dt=0.01)


def test_structural_mismatch_rejected():
    spec = build_tw_circuit()
    params = init_params(random_circuit(5, 8, 1, 1, 0), 0)
    state = CircuitState(potentials=np.zeros(11), time=0.0)
    with pytest.raises(ValueError):
        step(spec, params, state, None, dt=0.01)
    good = init_params(spec, 0)
    with pytest.raises(ValueError):
        step(spec, good, CircuitState(potentials=np.zeros(3), time=0.0),
             None, dt=0.01)
    with pytest.raises(ValueError):
        step(spec, good, CircuitState(potentials=np.zeros(11), time=0.0),
             None, dt=0.0)


# ---------------------------------------------------------------------------
# Gap-junction pair vs the dense explicit-Euler oracle
# ---------------------------------------------------------------------------

def test_gap_pair_disparity_shrinks_and_matches_oracle():
    spec = gap_pair_spec()
    params = params_for(spec, 1.0, 0.1, -60.0, 0.3)
    v0 = np.array([-75.0, -35.0])

    t_grid = [round(0.01 * k, 10) for k in range(1, 11)]
    ref = explicit_euler_trajectory(spec, params, v0, {}, t_grid, dt_fine=1e-6)

    state = CircuitState(potentials=v0.copy(), time=0.0)
    disparity = abs(v0[0] - v0[1])
    worst = 0.0
    for i in range(10):
        state = step(spec, params, state, None, dt=0.01)
        d = abs(state.potentials[0] - state.potentials[1])
        assert d < disparity, "gap disparity must shrink every step"
        disparity = d
        worst = max(worst, np.max(np.abs(state.potentials - ref[i])))
    assert worst < 1e-3, f"solver vs dense-Euler oracle: {worst:.2e} mV"


def test_gap_pair_symmetry():
    # mirrored initial potentials around a shared leak reversal stay mirrored
    spec = gap_pair_spec()
    params = params_for(spec, 0.5, 0.2, -55.0, 1.0)
    state = CircuitState(potentials=np.array([-75.0, -35.0]), time=0.0)
    for _ in range(50):
        state = step(spec, params, state, None, dt=0.01)
        a, b = state.potentials
        assert abs((a - (-55.0)) + (b - (-55.0))) < 1e-9


# ---------------------------------------------------------------------------
# First-order convergence on random 5-neuron circuits
# ---------------------------------------------------------------------------

def coarse_error(spec, params, v0, clamps, dt, t_end, ref):
    state = CircuitState(potentials=v0.copy(), time=0.0)
    for i, val in clamps.items():
        state.potentials[i] = val
    topo = compile_topology(spec)
    for _ in range(int(round(t_end / dt))):
        state = step(spec, params, state, clamps, dt=dt, topology=topo)
    return np.max(np.abs(state.potentials - ref))


def test_first_order_convergence():
    rng = np.random.default_rng(7)
    for seed in (0, 3):
        spec = random_circuit(5, 8, 1, 1, seed)
        params = init_params(spec, seed + 50)
        params.cm[:] = rng.uniform(0.05, 0.5, 5)
        v0 = rng.uniform(-75.0, -30.0, 5)
        clamps = {i: float(rng.uniform(-70, -20))
                  for i in spec.sensory_indices()}
        ref = explicit_euler_trajectory(
            spec, params, v0, clamps, [0.1], dt_fine=1e-6)[0]
        errs = [coarse_error(spec, params, v0, clamps, dt, 0.1, ref)
                for dt in (0.02, 0.01, 0.005)]
        for a, b in zip(errs, errs[1:]):
            ratio = a / b
            assert 1.5 < ratio < 2.7, (
                f"halving dt should halve the error, got ratio {ratio:.2f} "
                f"(errors {errs})")


def test_gentle_random_circuits_match_oracle_tightly():
    # slow membranes (tau >> dt): dt=0.01 already resolves the dynamics
    rng = np.random.default_rng(11)
    for seed in (1, 2):
        spec = random_circuit(5, 8, 1, 1, seed)
        params = init_params(spec, seed)
        params.cm[:] = rng.uniform(0.9, 1.0, 5)
        params.gleak[:] = rng.uniform(0.05, 0.15, 5)
        params.weight[:] = rng.uniform(0.01, 0.08, spec.n_edges)
        v0 = rng.uniform(-75.0, -30.0, 5)
        clamps = {i: float(rng.uniform(-70, -20))
                  for i in spec.sensory_indices()}
        t_grid = [round(0.01 * k, 10) for k in range(1, 11)]
        ref = explicit_euler_trajectory(spec, params, v0, clamps, t_grid,
                                        dt_fine=1e-6)
        state = CircuitState(potentials=v0.copy(), time=0.0)
        for i, val in clamps.items():
            state.potentials[i] = val
        worst = 0.0
        for i in range(10):
            state = step(spec, params, state, clamps, dt=0.01)
            worst = max(worst, np.max(np.abs(state.potentials - ref[i])))
        assert worst < 1e-3, f"seed {seed}: {worst:.2e} mV"


# ---------------------------------------------------------------------------
# Runtime linear in synapse count
# ---------------------------------------------------------------------------

def test_step_runtime_linear_in_synapses():
    sizes = [100, 300, 1000, 3000, 10000]
    times = []
    for m in sizes:
        spec = random_circuit(150, m, 5, 5, 0)
        params = init_params(spec, 0)
        state = rest_state(spec, params)
        topo = compile_topology(spec)
        step(spec, params, state, None, dt=0.01, topology=topo)  # warm caches
        reps = 30
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            s = state
            for _ in range(reps):
                s = step(spec, params, s, None, dt=0.01, topology=topo)
            best = min(best, (time.perf_counter() - t0) / reps)
        times.append(best)
    x = np.array(sizes, dtype=float)
    y = np.array(times)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = np.sum((y - pred) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot
    assert slope > 0
    assert r2 > 0.95, f"R^2 {r2:.3f}, times {times}"
