"""Adaptive random search over the flat parameter vector, and the
rollout machinery it optimizes against.

The optimizer is a hill climber with a self-tuning step size: perturb the
incumbent with Gaussian noise scaled per coordinate by that parameter's
bound width, accept only strict improvement, grow the noise scale on
acceptance and shrink it on rejection.  Because the objective is a
stochastic estimate (filtered episode returns), a lucky high estimate can
make the incumbent look unbeatable; after enough consecutive rejections
the incumbent is re-estimated every iteration until the next acceptance.

Episode rollouts dispatch to compiled kernels for the bundled
environments and fall back to the generic per-step path (which also
handles embed/readout circuits) otherwise.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import _fast
from .envs import InvertedPendulumEnv, MountainCarEnv, ParkingEnv
from .policy import CircuitPolicy, PolicyArrays, build_policy_arrays
from .trace import RolloutTrace
from .wiring import (
    CircuitParams,
    CircuitSpec,
    decode_params,
    encode_params,
    init_params,
    param_schema,
)

log = logging.getLogger("ncpolicy.train")

# Return assigned to an episode that produced non-finite state; large
# enough to lose against any real episode, finite so filters stay sound.
DEFAULT_FAILURE_FLOOR = -1e6

DEFAULT_DT_ODE = 0.01
DEFAULT_SUBSTEPS = 10

_SEED_SPACE = 2**31 - 1


# ---------------------------------------------------------------------------
# Objective-estimate filters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimateFilter:
    """Aggregates N episode returns into one scalar estimate."""

    kind: str        # "mean" | "worstk"
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("mean", "worstk"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.kind == "worstk" and self.k < 1:
            raise ValueError("worst-k filter needs k >= 1")

    def apply(self, returns: np.ndarray) -> float:
        returns = np.asarray(returns, dtype=np.float64)
        if self.kind == "mean":
            return float(np.mean(returns))
        k = min(self.k, len(returns))
        return float(np.mean(np.sort(returns)[:k]))

    def __str__(self) -> str:
        return "mean" if self.kind == "mean" else f"worstk:{self.k}"


def parse_filter(text: str) -> EstimateFilter:
    """Parse a filter flag: 'mean' or 'worstk:K'."""
    text = text.strip().lower()
    if text == "mean":
        return EstimateFilter("mean")
    if text.startswith("worstk:"):
        return EstimateFilter("worstk", int(text.split(":", 1)[1]))
    raise ValueError(f"cannot parse filter {text!r}; expected 'mean' or 'worstk:K'")


# ---------------------------------------------------------------------------
# Optimizer configuration and record
# ---------------------------------------------------------------------------

@dataclass
class ArsConfig:
    sigma0: float = 0.3
    alpha: float = 1.0
    max_iterations: int = 1000
    rollouts_per_estimate: int = 8
    filter: EstimateFilter = field(default_factory=lambda: EstimateFilter("mean"))
    stale_reeval_n: Optional[int] = 20   # None: never re-estimate the incumbent
    rng_seed: int = 0
    jobs: int = 1
    failure_floor: float = DEFAULT_FAILURE_FLOOR
    target_return: Optional[float] = None  # stop once the estimate reaches this

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.alpha < 1:
            raise ValueError("adaption rate must be >= 1")
        if self.rollouts_per_estimate < 1:
            raise ValueError("need at least one rollout per estimate")
        if (self.filter.kind == "worstk"
                and self.filter.k > self.rollouts_per_estimate):
            raise ValueError("worst-k filter needs k <= rollouts per estimate")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class TrainRecord:
    """Per-iteration optimizer history plus the final parameter vector."""

    iterations: np.ndarray   # (I,) 1-based iteration counter
    estimates: np.ndarray    # (I,) incumbent objective estimate after the iteration
    sigmas: np.ndarray       # (I,) noise scale after the iteration
    accepted: np.ndarray     # (I,) bool
    theta: np.ndarray        # final incumbent vector

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def final_estimate(self) -> float:
        return float(self.estimates[-1])


def save_record_csv(record: TrainRecord, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "estimate", "sigma", "accepted"])
        for k in range(record.n_iterations):
            writer.writerow([int(record.iterations[k]),
                             repr(float(record.estimates[k])),
                             repr(float(record.sigmas[k])),
                             int(record.accepted[k])])


def load_record_csv(path: str | Path) -> TrainRecord:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["iteration", "estimate", "sigma", "accepted"]:
            raise ValueError(f"{path}: not a training record file")
        rows = [row for row in reader if row]
    return TrainRecord(
        iterations=np.array([int(r[0]) for r in rows]),
        estimates=np.array([float(r[1]) for r in rows]),
        sigmas=np.array([float(r[2]) for r in rows]),
        accepted=np.array([bool(int(r[3])) for r in rows]),
        theta=np.empty(0),
    )


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

_KERNEL_ENVS = (MountainCarEnv, InvertedPendulumEnv, ParkingEnv)


def _kernel_eligible(spec: CircuitSpec, env) -> bool:
    return (spec.embed_obs is None and spec.readout_actions is None
            and type(env) in _KERNEL_ENVS)


def _circuit_args(arr: PolicyArrays):
    return (arr.cm, arr.gleak, arr.eleak, arr.is_sensory,
            arr.chem_pre, arr.chem_post, arr.chem_weight, arr.chem_sigma,
            arr.chem_reversal, arr.gap_pre, arr.gap_post, arr.gap_weight,
            arr.sv_obs, arr.sv_lo, arr.sv_hi, arr.sv_pos, arr.sv_neg,
            arr.mv_pos, arr.mv_neg, arr.mv_lo, arr.mv_hi)


def _episode_fast(env, arr: PolicyArrays, seed: Optional[int], record: bool):
    """One compiled episode; returns (total, steps, buffers or None)."""
    n = len(arr.cm)
    max_steps = env.max_steps
    if record:
        pot = np.empty((max_steps, n))
        obs = np.empty((max_steps, env.obs_dim))
        act = np.empty((max_steps, env.action_dim))
        rew = np.empty(max_steps)
    else:  # dummy buffers; the kernels never touch them
        pot = np.empty((1, 1))
        obs = np.empty((1, 1))
        act = np.empty((1, 1))
        rew = np.empty(1)
    v = arr.eleak.copy()
    common = _circuit_args(arr) + (arr.dt_ode, arr.substeps)
    if type(env) is MountainCarEnv:
        pos0, vel0 = env.init_state(seed)
        total, steps = _fast.mountaincar_episode(
            v, *common, float(pos0), float(vel0), max_steps,
            record, pot, obs, act, rew)
    elif type(env) is InvertedPendulumEnv:
        x0, xd0, phi0, phid0 = env.init_state(seed)
        total, steps = _fast.pendulum_episode(
            v, *common, float(x0), float(xd0), float(phi0), float(phid0),
            max_steps, record, pot, obs, act, rew)
    else:
        course = env.course
        cp_x = np.array([c.x for c in course.checkpoints])
        cp_y = np.array([c.y for c in course.checkpoints])
        cp_dead = np.array([c.deadline for c in course.checkpoints],
                           dtype=np.int64)
        x0, y0, th0 = env.start
        total, steps = _fast.parking_episode(
            v, *common, float(x0), float(y0), float(th0), course.dt,
            cp_x, cp_y, cp_dead, max_steps, record, pot, obs, act, rew)
    if record:
        return float(total), int(steps), (pot[:steps], obs[:steps],
                                          act[:steps], rew[:steps])
    return float(total), int(steps), None


def rollout(spec: CircuitSpec, params: CircuitParams, env,
            seed: Optional[int] = None, record_trace: bool = False,
            dt_ode: float = DEFAULT_DT_ODE, ode_substeps: int = DEFAULT_SUBSTEPS,
            failure_floor: float = DEFAULT_FAILURE_FLOOR,
            use_kernels: bool = True,
            _arrays: Optional[PolicyArrays] = None,
            ) -> tuple[float, Optional[RolloutTrace]]:
    """Run one episode of the circuit policy on `env`.

    Returns (sum of rewards, trace or None).  Episodes that produce
    non-finite state are aborted and score `failure_floor`.
    """
    names = tuple(spec.neuron_names())
    dt_env = dt_ode * ode_substeps

    if use_kernels and (_arrays is not None or _kernel_eligible(spec, env)):
        arr = _arrays if _arrays is not None else build_policy_arrays(
            spec, params, env, dt_ode, ode_substeps)
        total, steps, bufs = _episode_fast(env, arr, seed, record_trace)
        if not math.isfinite(total):
            log.warning("episode aborted: non-finite return on %s (seed=%s); "
                        "scoring failure floor %g",
                        type(env).__name__, seed, failure_floor)
            return failure_floor, None
        trace = None
        if record_trace:
            pot, obs, act, rew = bufs
            pose = None
            if getattr(env, "pose_obs", None) is not None:
                pose = obs[:, list(env.pose_obs)]
            trace = RolloutTrace(
                times=dt_env * np.arange(1, steps + 1),
                potentials=pot, neuron_names=names, observations=obs,
                actions=act, rewards=rew, pose=pose)
        return total, trace

    policy = CircuitPolicy(spec, params, env, dt_ode, ode_substeps)
    obs = np.asarray(env.reset(seed), dtype=np.float64)
    policy.reset()
    rows_pot, rows_obs, rows_act, rows_rew, rows_t = [], [], [], [], []
    total = 0.0
    while True:
        action = policy.act(obs)
        v = policy.state.potentials
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(action))):
            log.warning("episode aborted: non-finite circuit state on %s "
                        "(seed=%s); scoring failure floor %g",
                        type(env).__name__, seed, failure_floor)
            return failure_floor, None
        next_obs, reward, done = env.step(action)
        total += reward
        if record_trace:
            rows_t.append(policy.state.time)
            rows_pot.append(v.copy())
            rows_obs.append(obs.copy())
            rows_act.append(np.asarray(action, dtype=np.float64).copy())
            rows_rew.append(reward)
        obs = np.asarray(next_obs, dtype=np.float64)
        if done:
            break
    trace = None
    if record_trace:
        obs_arr = np.array(rows_obs)
        pose = None
        if getattr(env, "pose_obs", None) is not None:
            pose = obs_arr[:, list(env.pose_obs)]
        trace = RolloutTrace(
            times=np.array(rows_t), potentials=np.array(rows_pot),
            neuron_names=names, observations=obs_arr,
            actions=np.array(rows_act), rewards=np.array(rows_rew), pose=pose)
    return total, trace


def objective_estimate(theta: np.ndarray, spec: CircuitSpec, env,
                       n_rollouts: int, filt: EstimateFilter,
                       seeds: Optional[Sequence[int]] = None,
                       rng: Optional[np.random.Generator] = None,
                       jobs: int = 1,
                       dt_ode: float = DEFAULT_DT_ODE,
                       ode_substeps: int = DEFAULT_SUBSTEPS,
                       failure_floor: float = DEFAULT_FAILURE_FLOOR) -> float:
    """Filtered objective of a parameter vector, to be minimized.

    Runs `n_rollouts` independently seeded episodes and returns the
    negated filtered return.  Seeds come from `seeds` or are drawn fresh
    from `rng`.  With jobs > 1 the episodes run on a thread pool (the
    compiled kernels release the GIL); results are combined in seed-sorted
    order so parallel and sequential evaluation agree exactly.
    """
    if seeds is None:
        if rng is None:
            rng = np.random.default_rng()
        seeds = [int(s) for s in rng.integers(0, _SEED_SPACE, size=n_rollouts)]
    if len(seeds) != n_rollouts:
        raise ValueError("need one seed per rollout")
    params = decode_params(theta, spec)

    arr = None
    if _kernel_eligible(spec, env):
        arr = build_policy_arrays(spec, params, env, dt_ode, ode_substeps)

    def run(seed: int) -> float:
        total, _ = rollout(spec, params, env, seed=seed, record_trace=False,
                           dt_ode=dt_ode, ode_substeps=ode_substeps,
                           failure_floor=failure_floor, _arrays=arr)
        return total

    if jobs > 1 and arr is not None:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            returns = dict(zip(seeds, pool.map(run, seeds)))
    else:
        returns = {seed: run(seed) for seed in seeds}
    ordered = np.array([r for _, r in sorted(returns.items())])
    return -filt.apply(ordered)


# ---------------------------------------------------------------------------
# The optimizer
# ---------------------------------------------------------------------------

def ars_optimize(f: Callable[[np.ndarray], float], theta0: np.ndarray,
                 config: ArsConfig, lower: np.ndarray, upper: np.ndarray,
                 callback: Optional[Callable[[int, float, float, bool], None]] = None,
                 ) -> tuple[np.ndarray, TrainRecord]:
    """Minimize `f` by adaptive random search inside the box [lower, upper].

    Perturbations are zero-mean Gaussians with standard deviation
    sigma * (upper - lower) per coordinate, clamped into the box before
    evaluation.  The noise scale is sigma0 * alpha**(accepts - rejects)
    throughout.  After more than `stale_reeval_n` iterations without an
    acceptance the incumbent's objective is re-estimated every iteration
    until the next acceptance.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    width = upper - lower
    rng = np.random.default_rng(config.rng_seed)
    theta = np.clip(np.asarray(theta0, dtype=np.float64), lower, upper)
    f_theta = float(f(theta))
    stale_n = math.inf if config.stale_reeval_n is None else config.stale_reeval_n

    sigma = config.sigma0
    accepts = 0
    rejects = 0
    since_accept = 0
    iters: list[int] = []
    ests: list[float] = []
    sigmas: list[float] = []
    accflags: list[bool] = []

    for k in range(1, config.max_iterations + 1):
        noise = rng.normal(0.0, sigma, size=theta.shape) * width
        theta_prime = np.clip(theta + noise, lower, upper)
        f_prime = float(f(theta_prime))
        accepted = f_prime < f_theta
        if accepted:
            theta = theta_prime
            f_theta = f_prime
            since_accept = 0
            accepts += 1
        else:
            rejects += 1
        sigma = config.sigma0 * config.alpha ** (accepts - rejects)
        since_accept += 1
        if since_accept > stale_n:
            f_theta = float(f(theta))
        iters.append(k)
        ests.append(f_theta)
        sigmas.append(sigma)
        accflags.append(accepted)
        if callback is not None:
            callback(k, f_theta, sigma, accepted)
        if config.target_return is not None and f_theta <= -config.target_return:
            log.info("target return %.6g reached at iteration %d; stopping",
                     config.target_return, k)
            break

    record = TrainRecord(
        iterations=np.array(iters, dtype=np.int64),
        estimates=np.array(ests), sigmas=np.array(sigmas),
        accepted=np.array(accflags, dtype=bool), theta=theta.copy())
    return theta, record


def make_objective(spec: CircuitSpec, env, config: ArsConfig,
                   dt_ode: float = DEFAULT_DT_ODE,
                   ode_substeps: int = DEFAULT_SUBSTEPS) -> Callable[[np.ndarray], float]:
    """Bind spec + env + config into the stochastic objective for
    ars_optimize.  Each call draws fresh rollout seeds from its own
    stream, per the stochastic-objective framing."""
    seed_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.rng_seed, spawn_key=(1,)))

    def f(theta: np.ndarray) -> float:
        return objective_estimate(
            theta, spec, env, config.rollouts_per_estimate, config.filter,
            rng=seed_rng, jobs=config.jobs, dt_ode=dt_ode,
            ode_substeps=ode_substeps, failure_floor=config.failure_floor)

    return f


def train(spec: CircuitSpec, env, config: ArsConfig,
          theta0: Optional[np.ndarray] = None,
          dt_ode: float = DEFAULT_DT_ODE,
          ode_substeps: int = DEFAULT_SUBSTEPS,
          callback: Optional[Callable[[int, float, float, bool], None]] = None,
          ) -> tuple[CircuitParams, TrainRecord]:
    """Full training run: initialize (or take) a parameter vector,
    optimize it against the environment, return decoded parameters."""
    schema = param_schema(spec)
    if theta0 is None:
        theta0 = encode_params(init_params(spec, config.rng_seed), spec)
    f = make_objective(spec, env, config, dt_ode, ode_substeps)
    theta, record = ars_optimize(f, theta0, config, schema.lower, schema.upper,
                                 callback=callback)
    return decode_params(theta, spec), record


def evaluate(spec: CircuitSpec, params: CircuitParams, env, n_rollouts: int,
             seed0: int = 0, dt_ode: float = DEFAULT_DT_ODE,
             ode_substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """Returns of `n_rollouts` evaluation episodes seeded seed0, seed0+1, ..."""
    out = np.empty(n_rollouts)
    for j in range(n_rollouts):
        out[j], _ = rollout(spec, params, env, seed=seed0 + j,
                            dt_ode=dt_ode, ode_substeps=ode_substeps)
    return out
