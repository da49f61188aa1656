"""Map-guided stochastic rollouts.

A rollout starts from the recency-weighted observed velocity and, at every
step, moves with the previous velocity, samples a velocity from the map at
the new position, and pulls the previous velocity towards the sample with a
Gaussian kernel. Rollouts are ranked by their summed log fitness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .cliff_map import CLiFFMap, TCCLiFFMap, VelocitySample, sample_velocity_from_cliff
from .core import NoDynamicsData, State, Velocity, angle_diff, estimate_observed_velocity, propagate, wrap_angle
from .stef_map import STeFMap, sample_velocity_from_stef

__all__ = [
    "CliffSampler",
    "MoDSampler",
    "PredictionResult",
    "PredictorParams",
    "StefSampler",
    "TCCliffSampler",
    "bias_velocity",
    "cvm_predict",
    "predict_one",
    "predict_ranked",
    "rank_results",
]

TRUNCATE = "truncate"
CVM_CONTINUE = "cvm_continue"


@dataclass(frozen=True)
class PredictorParams:
    beta: float = 1.0
    r_s: float = 1.0
    dt: float = 1.0
    T_p: int = 60
    k: int = 5
    stop_policy: str = TRUNCATE
    sigma: float = 1.5
    normalize_obs_weights: bool = True
    # False: every step queries the map at the start time (interval of t0)
    advance_time: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if not self.r_s > 0:
            raise ValueError("r_s must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.T_p < 1:
            raise ValueError("T_p must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.stop_policy not in (TRUNCATE, CVM_CONTINUE):
            raise ValueError(f"unknown stop_policy {self.stop_policy!r}")


@dataclass
class PredictionResult:
    states: list[State]
    log_fitness: float = 0.0
    step_log_fitness: list[float] = field(default_factory=list)
    stopped_early: bool = False
    stop_step: int | None = None
    rollout: int = 0

    def __len__(self) -> int:
        return len(self.states)

    def positions(self) -> np.ndarray:
        return np.array([(s.x, s.y) for s in self.states], dtype=float).reshape(-1, 2)

    def log_fitness_until(self, n_steps: int) -> float:
        return math.fsum(self.step_log_fitness[:n_steps])


class MoDSampler(Protocol):
    def sample(self, x: float, y: float, t: float, prev_speed: float, rng: np.random.Generator) -> VelocitySample:
        """Return a velocity sample or raise ``NoDynamicsData``."""


@dataclass(frozen=True)
class CliffSampler:
    cmap: CLiFFMap
    r_s: float = 1.0

    def sample(self, x, y, t, prev_speed, rng):
        return sample_velocity_from_cliff(x, y, self.cmap, self.r_s, rng)


@dataclass(frozen=True)
class TCCliffSampler:
    tc_map: TCCLiFFMap
    r_s: float = 1.0

    def sample(self, x, y, t, prev_speed, rng):
        return sample_velocity_from_cliff(x, y, self.tc_map.map_at(t), self.r_s, rng)


@dataclass(frozen=True)
class StefSampler:
    smap: STeFMap
    r_s: float = 1.0

    def sample(self, x, y, t, prev_speed, rng):
        return sample_velocity_from_stef(x, y, self.smap, t, prev_speed, rng, self.r_s)


def bias_velocity(prev: Velocity, sampled: Velocity, beta: float) -> Velocity:
    """Move ``prev`` towards ``sampled``, damping large deviations.

    Each of speed and heading is updated by ``d * exp(-beta * d**2)`` where
    ``d`` is the (wrapped, for heading) difference.
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    d_rho = sampled.speed - prev.speed
    d_theta = angle_diff(sampled.heading, prev.heading)
    rho = prev.speed + d_rho * math.exp(-beta * d_rho * d_rho)
    theta = wrap_angle(prev.heading + d_theta * math.exp(-beta * d_theta * d_theta))
    return Velocity(max(rho, 0.0), theta)


def _start_state(history: Sequence[State], params: PredictorParams) -> State:
    history = list(history)
    if not history:
        raise ValueError("empty observation history")
    v = estimate_observed_velocity(history, params.sigma, params.normalize_obs_weights)
    last = history[-1]
    return State(last.x, last.y, v.speed, v.heading)


def predict_one(
    history: Sequence[State],
    sampler: MoDSampler,
    params: PredictorParams,
    start_time: float,
    rng: np.random.Generator,
) -> PredictionResult:
    """Single rollout of up to ``params.T_p`` steps."""
    cur = _start_state(history, params)
    states: list[State] = []
    steps: list[float] = []
    stopped, stop_step = False, None
    for step in range(1, params.T_p + 1):
        x, y = propagate(cur, params.dt)
        t = start_time + step * params.dt if params.advance_time else start_time
        try:
            s = sampler.sample(x, y, t, cur.speed, rng)
        except NoDynamicsData:
            if params.stop_policy == TRUNCATE:
                stopped, stop_step = True, step
                break
            cur = State(x, y, cur.speed, cur.heading)
            steps.append(0.0)
            states.append(cur)
            continue
        v = bias_velocity(cur.velocity, s.velocity, params.beta)
        cur = State(x, y, v.speed, v.heading)
        steps.append(math.log(s.fitness))
        states.append(cur)
    return PredictionResult(states, math.fsum(steps), steps, stopped, stop_step)


def rank_results(results: Sequence[PredictionResult], n_steps: int | None = None) -> list[PredictionResult]:
    """Sort by log fitness (descending), then longer first, then rollout index.

    With ``n_steps`` the fitness is re-accumulated over the first ``n_steps``
    steps only.
    """

    def key(r: PredictionResult):
        lf = r.log_fitness if n_steps is None else r.log_fitness_until(n_steps)
        length = len(r) if n_steps is None else min(len(r), n_steps)
        return (-lf, -length, r.rollout)

    return sorted(results, key=key)


def predict_ranked(
    history: Sequence[State],
    sampler: MoDSampler,
    params: PredictorParams,
    start_time: float,
    rng: np.random.Generator,
) -> list[PredictionResult]:
    """``params.k`` independent rollouts, most likely first.

    Each rollout draws from its own child stream spawned from ``rng``.
    """
    results = []
    for i, child in enumerate(rng.spawn(params.k)):
        r = predict_one(history, sampler, params, start_time, child)
        r.rollout = i
        results.append(r)
    return rank_results(results)


def cvm_predict(history: Sequence[State], T_p: int, dt: float = 1.0, sigma: float = 1.5, normalize: bool = True) -> PredictionResult:
    """Constant-velocity baseline from the recency-weighted observed velocity."""
    if T_p < 1:
        raise ValueError("T_p must be >= 1")
    cur = _start_state(history, PredictorParams(dt=dt, T_p=T_p, sigma=sigma, normalize_obs_weights=normalize))
    states = []
    for _ in range(T_p):
        x, y = propagate(cur, dt)
        cur = State(x, y, cur.speed, cur.heading)
        states.append(cur)
    return PredictionResult(states, 0.0, [0.0] * T_p)
