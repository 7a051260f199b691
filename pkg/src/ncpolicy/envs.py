"""Deterministic-seedable control environments behind one episodic contract.

Three desk-scale tasks are bundled:

* ``mountaincar`` -- the continuous-force underpowered car; constants match
  the widely published continuous variant (goal 0.45, power 0.0015).
* ``pendulum`` -- a from-scratch continuous-force cart-pole, semi-implicit
  Euler at dt = 0.02 s, episode capped at 1000 steps.
* ``parking`` -- unicycle kinematics over a checkpoint course; reward is
  the negative distance to the current checkpoint, granted only at the
  checkpoint's deadline step.

Each environment declares which observation variables feed the circuit's
sensory components (index plus value range) and the action ranges its
motor components decode into.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np


class EpisodeOver(RuntimeError):
    """step() was called after the episode finished."""


@dataclass(frozen=True)
class SensoryVar:
    """Observation variable exposed to the circuit: obs index and range."""

    obs_index: int
    lo: float
    hi: float


class Environment:
    """Episodic contract shared by all bundled environments."""

    obs_dim: int = 0
    action_dim: int = 0
    action_ranges: tuple[tuple[float, float], ...] = ()
    sensory_vars: tuple[SensoryVar, ...] = ()
    pose_obs: Optional[tuple[int, int]] = None
    max_steps: int = 0

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        raise NotImplementedError

    def _guard(self, done: bool) -> None:
        if done:
            raise EpisodeOver("step() called after the episode ended; reset first")


# ---------------------------------------------------------------------------
# Mountain car (continuous force)
# ---------------------------------------------------------------------------

class MountainCarEnv(Environment):
    POWER = 0.0015
    GRAVITY = 0.0025
    MIN_POS, MAX_POS = -1.2, 0.6
    MAX_SPEED = 0.07
    GOAL_POS = 0.45
    GOAL_BONUS = 100.0
    FORCE_COST = 0.1

    obs_dim = 2
    action_dim = 1
    action_ranges = ((-1.0, 1.0),)
    sensory_vars = (SensoryVar(0, MIN_POS, MAX_POS),
                    SensoryVar(1, -MAX_SPEED, MAX_SPEED))

    def __init__(self, max_steps: int = 999):
        self.max_steps = max_steps
        self._pos = 0.0
        self._vel = 0.0
        self._t = 0
        self._done = True

    def init_state(self, seed: Optional[int] = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.array([rng.uniform(-0.6, -0.4), 0.0])

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        self._pos, self._vel = self.init_state(seed)
        self._t = 0
        self._done = False
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array([self._pos, self._vel])

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        self._guard(self._done)
        force = min(max(float(np.asarray(action).ravel()[0]), -1.0), 1.0)
        self._vel += force * self.POWER - self.GRAVITY * math.cos(3.0 * self._pos)
        self._vel = min(max(self._vel, -self.MAX_SPEED), self.MAX_SPEED)
        self._pos += self._vel
        if self._pos < self.MIN_POS:
            self._pos = self.MIN_POS
            if self._vel < 0.0:
                self._vel = 0.0
        elif self._pos > self.MAX_POS:
            self._pos = self.MAX_POS
        self._t += 1
        reward = -self.FORCE_COST * force * force
        at_goal = self._pos >= self.GOAL_POS
        if at_goal:
            reward += self.GOAL_BONUS
        self._done = at_goal or self._t >= self.max_steps
        return self._obs(), reward, self._done


# ---------------------------------------------------------------------------
# Inverted pendulum (cart-pole, continuous force)
# ---------------------------------------------------------------------------

class InvertedPendulumEnv(Environment):
    GRAVITY = 9.8
    CART_MASS = 1.0
    POLE_MASS = 0.1
    POLE_HALF_LENGTH = 0.5
    DT = 0.02
    FORCE_MAG = 10.0
    ANGLE_LIMIT = 0.2   # rad
    X_LIMIT = 1.0

    obs_dim = 4  # x, x_dot, phi, phi_dot
    action_dim = 1
    action_ranges = ((-FORCE_MAG, FORCE_MAG),)
    # the circuit senses pole angle and cart position
    sensory_vars = (SensoryVar(2, -ANGLE_LIMIT, ANGLE_LIMIT),
                    SensoryVar(0, -X_LIMIT, X_LIMIT))

    def __init__(self, max_steps: int = 1000, perturbation: float = 0.05):
        self.max_steps = max_steps
        self.perturbation = perturbation
        self._state = np.zeros(4)
        self._t = 0
        self._done = True

    def init_state(self, seed: Optional[int] = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.uniform(-self.perturbation, self.perturbation, size=4)

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        self._state = self.init_state(seed)
        self._t = 0
        self._done = False
        return self._state.copy()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        self._guard(self._done)
        force = min(max(float(np.asarray(action).ravel()[0]),
                        -self.FORCE_MAG), self.FORCE_MAG)
        x, x_dot, phi, phi_dot = self._state
        total_mass = self.CART_MASS + self.POLE_MASS
        pml = self.POLE_MASS * self.POLE_HALF_LENGTH
        sin_phi, cos_phi = math.sin(phi), math.cos(phi)
        temp = (force + pml * phi_dot * phi_dot * sin_phi) / total_mass
        phi_acc = (self.GRAVITY * sin_phi - cos_phi * temp) / (
            self.POLE_HALF_LENGTH * (4.0 / 3.0 - self.POLE_MASS * cos_phi * cos_phi / total_mass))
        x_acc = temp - pml * phi_acc * cos_phi / total_mass
        # semi-implicit: velocities first, then positions with new velocities
        x_dot += x_acc * self.DT
        x += x_dot * self.DT
        phi_dot += phi_acc * self.DT
        phi += phi_dot * self.DT
        self._state = np.array([x, x_dot, phi, phi_dot])
        self._t += 1
        upright = abs(phi) < self.ANGLE_LIMIT and abs(x) < self.X_LIMIT
        reward = 1.0 if upright else 0.0
        self._done = (not upright) or self._t >= self.max_steps
        return self._state.copy(), reward, self._done


# ---------------------------------------------------------------------------
# Parking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Checkpoint:
    x: float
    y: float
    deadline: int


@dataclass(frozen=True)
class ParkingCourse:
    checkpoints: tuple[Checkpoint, ...]
    episode_steps: int
    dt: float

    def __post_init__(self):
        deadlines = [c.deadline for c in self.checkpoints]
        if deadlines != sorted(deadlines) or len(set(deadlines)) != len(deadlines):
            raise ValueError("checkpoint deadlines must be strictly increasing")
        if deadlines and deadlines[-1] > self.episode_steps:
            raise ValueError("last deadline exceeds the episode length")

    @staticmethod
    def from_dict(d: dict) -> "ParkingCourse":
        return ParkingCourse(
            checkpoints=tuple(Checkpoint(c["x"], c["y"], c["deadline"])
                              for c in d["checkpoints"]),
            episode_steps=int(d["episode_steps"]),
            dt=float(d["dt"]),
        )

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "episode_steps": self.episode_steps,
            "checkpoints": [{"x": c.x, "y": c.y, "deadline": c.deadline}
                            for c in self.checkpoints],
        }


def load_course(path: str | Path) -> ParkingCourse:
    return ParkingCourse.from_dict(json.loads(Path(path).read_text()))


def default_course() -> ParkingCourse:
    path = resources.files("ncpolicy").joinpath("data", "parking_course.json")
    return ParkingCourse.from_dict(json.loads(path.read_text()))


class ParkingEnv(Environment):
    """Unicycle rover on a checkpoint course.  Fully deterministic."""

    V_MAX = 0.5
    W_MAX = 1.0

    obs_dim = 4  # start signal, x, y, theta
    action_dim = 2
    action_ranges = ((0.0, V_MAX), (-W_MAX, W_MAX))
    sensory_vars = (SensoryVar(0, 0.0, 1.0),
                    SensoryVar(1, 0.0, 8.0),
                    SensoryVar(2, 0.0, 8.0),
                    SensoryVar(3, 0.0, 2.0 * math.pi))
    pose_obs = (1, 2)

    def __init__(self, course: Optional[ParkingCourse] = None,
                 start: tuple[float, float, float] = (0.0, 0.0, 0.0)):
        self.course = course if course is not None else default_course()
        self.start = start
        self.max_steps = self.course.episode_steps
        self._x = self._y = self._theta = 0.0
        self._t = 0
        self._done = True

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        self._x, self._y, self._theta = self.start
        self._t = 0
        self._done = False
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array([1.0, self._x, self._y, self._theta])

    def _next_checkpoint(self) -> Optional[Checkpoint]:
        for c in self.course.checkpoints:
            if c.deadline > self._t:
                return c
        return None

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        self._guard(self._done)
        a = np.asarray(action, dtype=np.float64).ravel()
        v = min(max(float(a[0]), 0.0), self.V_MAX)
        w = min(max(float(a[1]), -self.W_MAX), self.W_MAX)
        dt = self.course.dt
        self._x += v * math.cos(self._theta) * dt
        self._y += v * math.sin(self._theta) * dt
        self._theta += w * dt
        self._t += 1
        reward = 0.0
        for c in self.course.checkpoints:
            if c.deadline == self._t:
                reward = -math.hypot(self._x - c.x, self._y - c.y)
        self._done = self._t >= self.course.episode_steps
        return self._obs(), reward, self._done


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

ENV_BUILDERS = {
    "mountaincar": MountainCarEnv,
    "pendulum": InvertedPendulumEnv,
    "parking": ParkingEnv,
}


def make_env(name: str, **overrides) -> Environment:
    key = name.lower().replace("-", "").replace("_", "")
    if key not in ENV_BUILDERS:
        known = ", ".join(sorted(ENV_BUILDERS))
        raise ValueError(f"environment not bundled: {name!r} (available: {known})")
    return ENV_BUILDERS[key](**overrides)
