"""Scripted gait policies and a desk-scale black-box optimizer.

These exist to validate the engine: the parametric tripod gait drives
every subsystem end to end, and the evolution strategy shows that the
reward tables point the search in the intended direction (forward speed
under the stairs table, crouching under the squeeze table) without any
neural network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .env import Env, EpisodeConfig
from .heightmap import sample_ceiling
from .robot import JOINT_LIMIT, N_JOINTS, TRIPOD_A, RobotGeometry

_REF_GEOMETRY = RobotGeometry()


@dataclass(frozen=True)
class GaitParams:
    """Tripod gait shape: two leg triples 180 degrees out of phase."""

    frequency: float = 0.8  # Hz
    amp_coxa: float = 0.22
    amp_femur: float = 0.38  # swing lift must clear the easiest stair riser
    amp_tibia: float = 0.30
    crouch: float = 0.0  # subtracted from femur/tibia reset pitch: lowers the body
    turn_bias: float = 0.0  # differential coxa amplitude, positive turns left

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if min(self.amp_coxa, self.amp_femur, self.amp_tibia) < 0:
            raise ValueError("amplitudes must be nonnegative")
        # emitted targets must already respect the +/-120 degree range
        worst_coxa = self.amp_coxa * (1 + abs(self.turn_bias))
        if worst_coxa > JOINT_LIMIT:
            raise ValueError("coxa swing exceeds the joint range")
        for reset, amp in (
            (_REF_GEOMETRY.reset_femur, self.amp_femur),
            (_REF_GEOMETRY.reset_tibia, self.amp_tibia),
        ):
            lo = reset - self.crouch - amp
            hi = reset - self.crouch + amp
            if not (-JOINT_LIMIT <= lo and hi <= JOINT_LIMIT):
                raise ValueError("femur/tibia swing exceeds the joint range")


def tripod_gait(
    geometry: RobotGeometry,
    params: GaitParams,
    t: float,
    crouch_extra: float = 0.0,
) -> np.ndarray:
    """Joint targets at time t: deterministic, periodic with period 1/frequency.

    Stance legs sweep the coxa to push the body forward while swing legs
    lift (femur/tibia) and recover. Left/right coxa motion mirrors;
    turn_bias scales the two sides' sweep differentially.
    """
    q = np.empty(N_JOINTS)
    phase = 2 * math.pi * params.frequency * t
    crouch = params.crouch + crouch_extra
    for leg in range(6):
        leg_phase = phase if leg in TRIPOD_A else phase + math.pi
        s = math.sin(leg_phase)
        lift = s if s > 0 else 0.0  # swing half only
        left = leg % 2 == 0
        side = 1.0 if left else -1.0
        amp = params.amp_coxa * (1.0 - side * params.turn_bias)
        q[3 * leg] = side * amp * math.cos(leg_phase)
        q[3 * leg + 1] = geometry.reset_femur - crouch - params.amp_femur * lift
        q[3 * leg + 2] = geometry.reset_tibia - crouch - params.amp_tibia * lift
    return q


class TripodPolicy:
    """Open-loop tripod walker."""

    name = "tripod"

    def __init__(self, params: GaitParams | None = None):
        self.params = params or GaitParams()

    def reset(self) -> None:
        pass

    def action(self, env: Env, t: float) -> np.ndarray:
        return tripod_gait(env.geometry, self.params, t)


class CrouchTripodPolicy(TripodPolicy):
    """Tripod walker that crouches while an overhead obstacle is near.

    Scans the ceiling layer along the heading from just behind the body
    to `lookahead` past the front; the crouch depth blends in and out at
    a bounded rate so the gait stays smooth.
    """

    name = "crouch-tripod"

    def __init__(
        self,
        params: GaitParams | None = None,
        crouch_depth: float = 0.30,
        lookahead: float = 0.45,
        lookbehind: float = 0.25,
        blend_rate: float = 1.2,  # rad/s
    ):
        super().__init__(params)
        self.crouch_depth = crouch_depth
        self.lookahead = lookahead
        self.lookbehind = lookbehind
        self.blend_rate = blend_rate
        self._crouch = 0.0
        self._last_t = 0.0

    def reset(self) -> None:
        self._crouch = 0.0
        self._last_t = 0.0

    def _ceiling_near(self, env: Env) -> bool:
        base = env.base
        yaw = base.heading
        c, s = math.cos(yaw), math.sin(yaw)
        front = env.geometry.half_length
        step = env.field.cell_size / 2
        d = -self.lookbehind
        while d <= front + self.lookahead:
            x = base.position[0] + c * d
            y = base.position[1] + s * d
            if sample_ceiling(env.field, x, y) is not None:
                return True
            d += step
        return False

    def action(self, env: Env, t: float) -> np.ndarray:
        dt = max(t - self._last_t, 0.0)
        self._last_t = t
        target = self.crouch_depth if self._ceiling_near(env) else 0.0
        delta = np.clip(target - self._crouch, -self.blend_rate * dt, self.blend_rate * dt)
        self._crouch += float(delta)
        return tripod_gait(env.geometry, self.params, t, crouch_extra=self._crouch)


class RandomPolicy:
    """Uniform random joint targets; exercises clamping and robustness."""

    name = "random"

    def __init__(self, seed: int = 0, span: float = 2.2):
        self.rng = np.random.default_rng(seed)
        self.span = span

    def reset(self) -> None:
        pass

    def action(self, env: Env, t: float) -> np.ndarray:
        return self.rng.uniform(-self.span, self.span, size=N_JOINTS)


def save_gait_params(params: GaitParams, path) -> None:
    data = {k: float(getattr(params, k)) for k in (
        "frequency", "amp_coxa", "amp_femur", "amp_tibia", "crouch", "turn_bias")}
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=True)


def load_gait_params(path) -> GaitParams:
    with open(path) as f:
        data = yaml.safe_load(f)
    return GaitParams(**{k: float(v) for k, v in data.items()})


def make_policy(name: str, seed: int = 0, params_file=None) -> TripodPolicy | RandomPolicy:
    if name == "tripod":
        return TripodPolicy()
    if name == "crouch-tripod":
        return CrouchTripodPolicy()
    if name == "random":
        return RandomPolicy(seed)
    if name == "params-file":
        if params_file is None:
            raise ValueError("params-file policy needs a file path")
        return TripodPolicy(load_gait_params(params_file))
    raise ValueError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# episodic evaluation and the evolution strategy

def episode_return(env: Env, policy, reset_episode: int | None = None) -> float:
    """Sum of step rewards over one full episode."""
    if reset_episode is not None:
        env.episode_index = reset_episode - 1
    env.reset()
    policy.reset()
    total = 0.0
    t = 0.0
    while True:
        t += env.config.dt
        result = env.step(policy.action(env, t))
        total += result.reward.total
        if result.done:
            return total


# optimizer search space: (name, low, high)
_PARAM_SPACE = (
    ("frequency", 0.3, 2.2),
    ("amp_coxa", 0.02, 0.45),
    ("amp_femur", 0.02, 0.45),
    ("amp_tibia", 0.0, 0.30),
    ("crouch", -0.05, 0.40),
    ("turn_bias", -0.25, 0.25),
)


def _encode(params: GaitParams) -> np.ndarray:
    return np.array([getattr(params, name) for name, _, _ in _PARAM_SPACE])


def _decode(theta: np.ndarray) -> GaitParams:
    values = {
        name: float(np.clip(theta[i], lo, hi))
        for i, (name, lo, hi) in enumerate(_PARAM_SPACE)
    }
    return GaitParams(**values)


@dataclass
class GenerationStats:
    generation: int
    evaluations: int
    best_so_far: float
    generation_best: float
    generation_mean: float
    sigma: float


@dataclass
class OptimizeResult:
    best_params: GaitParams
    best_return: float
    initial_return: float
    history: list[GenerationStats]
    evaluations: int


def optimize(
    config: EpisodeConfig,
    init: GaitParams,
    budget: int,
    seed: int = 0,
    population: int = 16,
    sigma0: float = 0.15,
    episodes_per_eval: int = 3,
) -> OptimizeResult:
    """Rank-based evolution strategy over the gait parameters.

    Each evaluation is the mean episodic return over episodes_per_eval
    fixed seeded episodes (common random numbers across candidates).
    The step size adapts up on generations that improve the best-so-far
    and down otherwise; the best-so-far curve is monotone by
    construction. Fully deterministic for a fixed seed.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    eval_envs = [
        Env(replace(config, seed=seed + 1000 * (e + 1)))
        for e in range(episodes_per_eval)
    ]

    def evaluate(params: GaitParams) -> float:
        policy = TripodPolicy(params)
        return float(
            np.mean([episode_return(env, policy, reset_episode=0) for env in eval_envs])
        )

    evaluations = 0
    mean = _encode(init)
    init_return = evaluate(_decode(mean))
    evaluations += 1
    best_params = _decode(mean)
    best_return = init_return
    history = [GenerationStats(0, evaluations, best_return, init_return, init_return, sigma0)]

    sigma = sigma0
    mu = max(1, population // 2)
    weights = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    gen = 0
    while evaluations + population <= budget:
        gen += 1
        candidates = mean[None, :] + sigma * rng.standard_normal((population, len(mean)))
        scores = np.empty(population)
        for i in range(population):
            scores[i] = evaluate(_decode(candidates[i]))
        evaluations += population
        order = np.argsort(-scores)
        elite = candidates[order[:mu]]
        mean = weights @ elite
        gen_best = float(scores[order[0]])
        if gen_best > best_return:
            best_return = gen_best
            best_params = _decode(candidates[order[0]])
            sigma = min(sigma * 1.1, 0.5)
        else:
            sigma = max(sigma * 0.85, 0.02)
        history.append(
            GenerationStats(
                gen, evaluations, best_return, gen_best, float(scores.mean()), sigma
            )
        )
    return OptimizeResult(
        best_params=best_params,
        best_return=best_return,
        initial_return=init_return,
        history=history,
        evaluations=evaluations,
    )


def write_history_csv(result: OptimizeResult, path) -> None:
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["generation", "evaluations", "best_so_far", "generation_best",
             "generation_mean", "sigma"]
        )
        for g in result.history:
            writer.writerow(
                [g.generation, g.evaluations, repr(g.best_so_far),
                 repr(g.generation_best), repr(g.generation_mean), repr(g.sigma)]
            )
