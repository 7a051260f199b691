"""Circuit topologies and the learnable parameter vector.

A circuit is a small directed graph of named neurons (sensory, inter,
command, motor) connected by chemical synapses (excitatory or inhibitory)
and gap junctions.  The tap-withdrawal connectome ships as a bundled JSON
data file; random baseline circuits with the same admissibility rule (no
edge may terminate at a sensory neuron) can be generated from a seed.

Learnable scalars live in a flat, bounded vector: per-neuron membrane
capacitance, leak conductance and leak reversal, per-synapse weight, and
per-chemical-synapse sigmoid slope.  Decoding clamps every entry into its
bound, so any real-valued vector maps to a valid parameter set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import numpy as np


class Role(str, Enum):
    SENSORY = "sensory"
    INTER = "inter"
    COMMAND = "command"
    MOTOR = "motor"


class SynapseKind(str, Enum):
    EXCITATORY = "excitatory"
    INHIBITORY = "inhibitory"
    GAP = "gap"


# Reversal potential (mV) by chemical synapse kind; gap junctions have none.
REVERSAL_MV = {SynapseKind.EXCITATORY: 0.0, SynapseKind.INHIBITORY: -90.0}

# Sigmoid midpoint of every chemical synapse (mV); fixed, not learnable.
SIGMOID_MIDPOINT_MV = -40.0

# Bounds of the learnable scalars: (lower, upper).
CM_BOUNDS = (1e-3, 1.0)        # membrane capacitance, farads
GLEAK_BOUNDS = (0.05, 5.0)     # leak conductance, siemens
ELEAK_BOUNDS = (-90.0, 0.0)    # leak reversal, millivolts
WEIGHT_BOUNDS = (0.0, 3.0)     # synaptic conductance, siemens
SIGMA_BOUNDS = (0.05, 0.5)     # chemical sigmoid slope, 1/mV
MIX_BOUNDS = (-3.0, 3.0)       # embed/readout matrix entries


@dataclass(frozen=True)
class Neuron:
    name: str
    role: Role


@dataclass(frozen=True)
class Edge:
    pre: int
    post: int
    kind: SynapseKind


@dataclass(frozen=True)
class SensoryBinding:
    """Maps environment variable `var` onto a pair of sensory neurons.

    Either neuron may be absent (None) for one-sided variables; a
    nonnegative variable needs only `positive`.
    """

    var: int
    positive: Optional[str] = None
    negative: Optional[str] = None


@dataclass(frozen=True)
class MotorBinding:
    """Maps a pair of motor neurons onto action component `act`."""

    act: int
    positive: Optional[str] = None
    negative: Optional[str] = None


@dataclass(frozen=True)
class CircuitSpec:
    """Immutable wiring graph plus sensory/motor bindings."""

    neurons: tuple[Neuron, ...]
    edges: tuple[Edge, ...]
    sensory: tuple[SensoryBinding, ...] = ()
    motor: tuple[MotorBinding, ...] = ()
    embed_obs: Optional[int] = None       # raw observation count fed to a linear embed
    readout_actions: Optional[int] = None  # action count produced by a linear readout

    @property
    def n_neurons(self) -> int:
        return len(self.neurons)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def index_of(self, name: str) -> int:
        for i, nrn in enumerate(self.neurons):
            if nrn.name == name:
                return i
        raise KeyError(f"no neuron named {name!r}")

    def neuron_names(self) -> list[str]:
        return [n.name for n in self.neurons]

    def sensory_indices(self) -> list[int]:
        return [i for i, n in enumerate(self.neurons) if n.role is Role.SENSORY]

    def chemical_edges(self) -> list[tuple[int, Edge]]:
        return [(i, e) for i, e in enumerate(self.edges) if e.kind is not SynapseKind.GAP]

    def gap_edges(self) -> list[tuple[int, Edge]]:
        return [(i, e) for i, e in enumerate(self.edges) if e.kind is SynapseKind.GAP]

    def sparsity(self) -> float:
        """Fraction of absent connections relative to a fully connected
        graph over the same node count (n^2 ordered pairs incl. self)."""
        return 1.0 - self.n_edges / self.n_neurons**2


@dataclass
class CircuitParams:
    """Learnable parameter arrays aligned with a CircuitSpec.

    `sigma` entries of gap edges are placeholders and never enter the
    parameter vector.  `embed` has shape (n_sensory_vars, embed_obs) and
    `readout` (readout_actions, n_motor_vars) when the spec declares them.
    """

    cm: np.ndarray       # (n,) farads
    gleak: np.ndarray    # (n,) siemens
    eleak: np.ndarray    # (n,) millivolts
    weight: np.ndarray   # (m,) siemens, per edge
    sigma: np.ndarray    # (m,) 1/mV, meaningful for chemical edges only
    embed: Optional[np.ndarray] = None
    readout: Optional[np.ndarray] = None

    def copy(self) -> "CircuitParams":
        return CircuitParams(
            cm=self.cm.copy(), gleak=self.gleak.copy(), eleak=self.eleak.copy(),
            weight=self.weight.copy(), sigma=self.sigma.copy(),
            embed=None if self.embed is None else self.embed.copy(),
            readout=None if self.readout is None else self.readout.copy(),
        )


GAP_SIGMA_PLACEHOLDER = 0.25


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_spec(spec: CircuitSpec) -> list[str]:
    """Returns a list of invariant violations; empty means the spec is valid."""
    problems: list[str] = []
    n = spec.n_neurons
    names = spec.neuron_names()
    if len(set(names)) != len(names):
        problems.append("duplicate neuron names")

    seen_gap_pairs: set[frozenset[int]] = set()
    seen_chem_pairs: set[tuple[int, int]] = set()
    for i, e in enumerate(spec.edges):
        tag = f"edge {i} ({e.pre}->{e.post} {e.kind.value})"
        if not (0 <= e.pre < n and 0 <= e.post < n):
            problems.append(f"{tag}: index out of range")
            continue
        if e.pre == e.post:
            problems.append(f"{tag}: self-edge")
        if spec.neurons[e.post].role is Role.SENSORY:
            problems.append(f"{tag}: terminates at sensory neuron {names[e.post]}")
        if e.kind is SynapseKind.GAP:
            pair = frozenset((e.pre, e.post))
            if pair in seen_gap_pairs:
                problems.append(f"{tag}: duplicate gap junction for pair "
                                f"{names[e.pre]}-{names[e.post]}")
            seen_gap_pairs.add(pair)
        else:
            pair = (e.pre, e.post)
            if pair in seen_chem_pairs:
                problems.append(f"{tag}: duplicate chemical synapse "
                                f"{names[e.pre]}->{names[e.post]}")
            seen_chem_pairs.add(pair)

    def check_binding(kind: str, b, want_role: Role) -> None:
        for attr in ("positive", "negative"):
            name = getattr(b, attr)
            if name is None:
                continue
            if name not in names:
                problems.append(f"{kind} binding {b}: unknown neuron {name!r}")
            elif spec.neurons[names.index(name)].role is not want_role:
                problems.append(f"{kind} binding {b}: {name} is not a "
                                f"{want_role.value} neuron")
        if b.positive is None and b.negative is None:
            problems.append(f"{kind} binding {b}: no neurons bound")

    for b in spec.sensory:
        check_binding("sensory", b, Role.SENSORY)
    for b in spec.motor:
        check_binding("motor", b, Role.MOTOR)
    return problems


def require_valid(spec: CircuitSpec) -> CircuitSpec:
    problems = validate_spec(spec)
    if problems:
        raise ValueError("invalid circuit spec:\n  " + "\n  ".join(problems))
    return spec


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _data_path(filename: str) -> Path:
    return Path(str(resources.files("ncpolicy").joinpath("data", filename)))


def build_tw_circuit() -> CircuitSpec:
    """The 11-neuron, 28-synapse tap-withdrawal circuit.

    Loaded from the bundled wiring data file, so an alternative connectome
    can be dropped in without touching code.
    """
    return require_valid(load_spec(_data_path("tw_circuit.json")))


def build_tw_parking_circuit() -> CircuitSpec:
    """Tap-withdrawal core rewired for the parking task.

    Same sensory and interneuron wiring as the standard circuit, but the
    motor layer has three neurons: FWD (linear velocity, one-sided) plus
    the RGT/LFT pair for angular velocity, each command neuron driving its
    turn motor and the shared forward motor.
    """
    return require_valid(load_spec(_data_path("tw_parking.json")))


def random_circuit(n_neurons: int, n_synapses: int, n_sensory: int,
                   n_motor: int, rng_seed: int) -> CircuitSpec:
    """Random baseline circuit: `n_synapses` admissible edges with kinds
    drawn uniformly from {excitatory, inhibitory, gap}.

    Admissibility matches the wiring rule: no self-edges and no edge
    terminating at a sensory neuron.  At most one chemical synapse per
    ordered pair and one gap junction per unordered pair; when a drawn gap
    collides with an existing one it is demoted to a chemical synapse so
    the edge count stays exact.
    """
    if n_sensory < 1 or n_motor < 1 or n_sensory + n_motor > n_neurons:
        raise ValueError("need at least one sensory and one motor neuron "
                         "and n_sensory + n_motor <= n_neurons")
    admissible = (n_neurons - n_sensory) * (n_neurons - 1)
    if n_synapses > admissible:
        raise ValueError(f"{n_synapses} synapses requested but only "
                         f"{admissible} admissible ordered pairs exist")

    rng = np.random.default_rng(rng_seed)
    neurons: list[Neuron] = []
    for i in range(n_sensory):
        neurons.append(Neuron(f"S{i}", Role.SENSORY))
    for i in range(n_neurons - n_sensory - n_motor):
        neurons.append(Neuron(f"I{i}", Role.INTER))
    for i in range(n_motor):
        neurons.append(Neuron(f"M{i}", Role.MOTOR))

    pairs = [(i, j) for j in range(n_neurons) for i in range(n_neurons)
             if i != j and neurons[j].role is not Role.SENSORY]
    order = rng.permutation(len(pairs))[:n_synapses]
    kinds = rng.integers(0, 3, size=n_synapses)
    kind_table = (SynapseKind.EXCITATORY, SynapseKind.INHIBITORY, SynapseKind.GAP)

    edges: list[Edge] = []
    gap_pairs: set[frozenset[int]] = set()
    for k, pair_idx in enumerate(order):
        pre, post = pairs[pair_idx]
        kind = kind_table[kinds[k]]
        if kind is SynapseKind.GAP:
            upair = frozenset((pre, post))
            if upair in gap_pairs:
                kind = kind_table[int(rng.integers(0, 2))]
            else:
                gap_pairs.add(upair)
        edges.append(Edge(pre, post, kind))

    sensory_names = [n.name for n in neurons if n.role is Role.SENSORY]
    motor_names = [n.name for n in neurons if n.role is Role.MOTOR]
    spec = CircuitSpec(
        neurons=tuple(neurons),
        edges=tuple(edges),
        sensory=tuple(_pair_bindings(sensory_names, SensoryBinding)),
        motor=tuple(_pair_bindings(motor_names, MotorBinding)),
    )
    return require_valid(spec)


def _pair_bindings(names: list[str], cls):
    """Pair neurons (positive, negative) per variable; odd leftover becomes
    a one-sided positive component."""
    out = []
    for v in range(0, len(names), 2):
        pos = names[v]
        neg = names[v + 1] if v + 1 < len(names) else None
        out.append(cls(v // 2, pos, neg))
    return out


# ---------------------------------------------------------------------------
# Parameter vector schema, encode/decode
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchemaEntry:
    key: str
    lower: float
    upper: float


@dataclass(frozen=True)
class ParamSchema:
    """Ordered mapping of flat-vector positions to (key, bounds)."""

    entries: tuple[SchemaEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def lower(self) -> np.ndarray:
        return np.array([e.lower for e in self.entries])

    @property
    def upper(self) -> np.ndarray:
        return np.array([e.upper for e in self.entries])

    def keys(self) -> list[str]:
        return [e.key for e in self.entries]


def param_schema(spec: CircuitSpec) -> ParamSchema:
    entries: list[SchemaEntry] = []
    names = spec.neuron_names()
    for name in names:
        entries.append(SchemaEntry(f"neuron:{name}:cm", *CM_BOUNDS))
        entries.append(SchemaEntry(f"neuron:{name}:gleak", *GLEAK_BOUNDS))
        entries.append(SchemaEntry(f"neuron:{name}:eleak", *ELEAK_BOUNDS))
    for i, e in enumerate(spec.edges):
        tag = f"syn:{i}:{names[e.pre]}->{names[e.post]}"
        entries.append(SchemaEntry(f"{tag}:weight", *WEIGHT_BOUNDS))
        if e.kind is not SynapseKind.GAP:
            entries.append(SchemaEntry(f"{tag}:sigma", *SIGMA_BOUNDS))
    if spec.embed_obs is not None:
        for r in range(len(spec.sensory)):
            for c in range(spec.embed_obs):
                entries.append(SchemaEntry(f"embed:{r}:{c}", *MIX_BOUNDS))
    if spec.readout_actions is not None:
        for r in range(spec.readout_actions):
            for c in range(len(spec.motor)):
                entries.append(SchemaEntry(f"readout:{r}:{c}", *MIX_BOUNDS))
    return ParamSchema(tuple(entries))


def encode_params(params: CircuitParams, spec: CircuitSpec) -> np.ndarray:
    """Flatten parameters into the schema-ordered vector (no clamping)."""
    vec: list[float] = []
    for i in range(spec.n_neurons):
        vec.extend((params.cm[i], params.gleak[i], params.eleak[i]))
    for i, e in enumerate(spec.edges):
        vec.append(params.weight[i])
        if e.kind is not SynapseKind.GAP:
            vec.append(params.sigma[i])
    if spec.embed_obs is not None:
        vec.extend(np.asarray(params.embed).ravel())
    if spec.readout_actions is not None:
        vec.extend(np.asarray(params.readout).ravel())
    return np.array(vec, dtype=np.float64)


def decode_params(vec: np.ndarray, spec: CircuitSpec) -> CircuitParams:
    """Rebuild CircuitParams from a flat vector, clamping into bounds."""
    schema = param_schema(spec)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or len(vec) != len(schema):
        raise ValueError(f"parameter vector length {vec.shape} does not match "
                         f"schema length {len(schema)}")
    clamped = np.clip(vec, schema.lower, schema.upper)

    n, m = spec.n_neurons, spec.n_edges
    cm = np.empty(n)
    gleak = np.empty(n)
    eleak = np.empty(n)
    pos = 0
    for i in range(n):
        cm[i], gleak[i], eleak[i] = clamped[pos:pos + 3]
        pos += 3
    weight = np.empty(m)
    sigma = np.full(m, GAP_SIGMA_PLACEHOLDER)
    for i, e in enumerate(spec.edges):
        weight[i] = clamped[pos]
        pos += 1
        if e.kind is not SynapseKind.GAP:
            sigma[i] = clamped[pos]
            pos += 1
    embed = readout = None
    if spec.embed_obs is not None:
        k = len(spec.sensory) * spec.embed_obs
        embed = clamped[pos:pos + k].reshape(len(spec.sensory), spec.embed_obs)
        pos += k
    if spec.readout_actions is not None:
        k = spec.readout_actions * len(spec.motor)
        readout = clamped[pos:pos + k].reshape(spec.readout_actions, len(spec.motor))
        pos += k
    return CircuitParams(cm=cm, gleak=gleak, eleak=eleak, weight=weight,
                         sigma=sigma, embed=embed, readout=readout)


def init_params(spec: CircuitSpec, rng_seed: int) -> CircuitParams:
    """Random initial parameters, each scalar uniform within its bounds
    except membrane capacitance, drawn log-uniform so initial time
    constants spread over their full range of magnitudes."""
    rng = np.random.default_rng(rng_seed)
    schema = param_schema(spec)
    lo, hi = schema.lower, schema.upper
    vec = rng.uniform(lo, hi)
    for i, entry in enumerate(schema.entries):
        if entry.key.endswith(":cm"):
            vec[i] = np.exp(rng.uniform(np.log(entry.lower), np.log(entry.upper)))
    return decode_params(vec, spec)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def spec_to_dict(spec: CircuitSpec) -> dict:
    names = spec.neuron_names()
    d = {
        "neurons": [{"name": n.name, "role": n.role.value} for n in spec.neurons],
        "edges": [{"pre": names[e.pre], "post": names[e.post], "kind": e.kind.value}
                  for e in spec.edges],
        "sensory": [{"var": b.var, "positive": b.positive, "negative": b.negative}
                    for b in spec.sensory],
        "motor": [{"action": b.act, "positive": b.positive, "negative": b.negative}
                  for b in spec.motor],
    }
    if spec.embed_obs is not None:
        d["embed"] = {"n_obs": spec.embed_obs}
    if spec.readout_actions is not None:
        d["readout"] = {"n_actions": spec.readout_actions}
    return d


def spec_from_dict(d: dict) -> CircuitSpec:
    neurons = tuple(Neuron(n["name"], Role(n["role"])) for n in d["neurons"])
    index = {n.name: i for i, n in enumerate(neurons)}

    def ref(value) -> int:
        return value if isinstance(value, int) else index[value]

    edges = tuple(Edge(ref(e["pre"]), ref(e["post"]), SynapseKind(e["kind"]))
                  for e in d["edges"])
    sensory = tuple(SensoryBinding(b["var"], b.get("positive"), b.get("negative"))
                    for b in d.get("sensory", []))
    motor = tuple(MotorBinding(b["action"], b.get("positive"), b.get("negative"))
                  for b in d.get("motor", []))
    embed = d.get("embed")
    readout = d.get("readout")
    return CircuitSpec(
        neurons=neurons, edges=edges, sensory=sensory, motor=motor,
        embed_obs=None if embed is None else int(embed["n_obs"]),
        readout_actions=None if readout is None else int(readout["n_actions"]),
    )


def save_spec(spec: CircuitSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


def load_spec(path: str | Path) -> CircuitSpec:
    return spec_from_dict(json.loads(Path(path).read_text()))


def params_to_dict(params: CircuitParams, spec: CircuitSpec) -> dict:
    schema = param_schema(spec)
    vec = encode_params(params, spec)
    return {key: float(v) for key, v in zip(schema.keys(), vec)}


def params_from_dict(d: dict, spec: CircuitSpec) -> CircuitParams:
    schema = param_schema(spec)
    missing = [k for k in schema.keys() if k not in d]
    if missing:
        raise ValueError(f"parameter file missing {len(missing)} keys, "
                         f"first: {missing[0]}")
    vec = np.array([d[k] for k in schema.keys()], dtype=np.float64)
    return decode_params(vec, spec)


def save_params(params: CircuitParams, spec: CircuitSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params, spec), indent=2) + "\n")


def load_params(path: str | Path, spec: CircuitSpec) -> CircuitParams:
    return params_from_dict(json.loads(Path(path).read_text()), spec)
