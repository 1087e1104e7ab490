"""Training loop: episodes of the charging MDP with epsilon-greedy agents and TD updates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..env import OBS_DIM, ChargingEnv, WorldConfig
from .learner import (
    ActionGrid,
    Algorithm,
    ModelSpec,
    epsilon_greedy_batch,
    init_params,
    loss_and_gradients,
    net_prefix,
    one_hot,
    sgd_step,
)
from .networks import Params, mlp_forward, q_forward
from .replay import EpisodeHistory, ReplayBuffer, Transition

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the TD loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 1500
    gamma: float = 0.99
    lr: float = 0.001
    batch_size: int = 32
    buffer_size: int = 2000
    target_sync: int = 200
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_fraction: float = 0.6
    levels: int = 11
    hidden: int = 64
    mixer_embed: int = 32
    hyper_hidden: int = 64
    reward_scale: float = 0.01
    grad_clip: float | None = 10.0
    updates_enabled: bool = True
    convergence_window: int = 50
    convergence_final: int = 100
    convergence_tol: float = 0.05

    def epsilon(self, episode: int) -> float:
        span = self.eps_anneal_fraction * self.episodes
        frac = 1.0 if span <= 0 else min(1.0, episode / span)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


@dataclass(frozen=True)
class ConvergenceReport:
    episode: int | None          # 1-based; None if the moving average never settles
    average_reward: float        # mean episode reward from the convergence episode on
    final_mean: float


def convergence_report(rewards, window: int = 50, final: int = 100, tol: float = 0.05) -> ConvergenceReport:
    """First episode whose trailing moving average stays within ``tol`` of the final mean."""
    r = np.asarray(rewards, dtype=float)
    final_mean = float(r[-final:].mean())
    if len(r) < window:
        return ConvergenceReport(None, final_mean, final_mean)
    ma = np.convolve(r, np.ones(window) / window, mode="valid")
    ok = np.abs(ma - final_mean) <= tol * abs(final_mean)
    # suffix-all: position i is settled if every later moving average is in band
    settled = np.flip(np.logical_and.accumulate(np.flip(ok)))
    if not settled.any():
        return ConvergenceReport(None, final_mean, final_mean)
    first = int(np.argmax(settled)) + window - 1
    return ConvergenceReport(first + 1, float(r[first:].mean()), final_mean)


@dataclass
class TrainResult:
    params: Params
    spec: ModelSpec
    grid: ActionGrid
    episode_rewards: list[float]
    epsilons: list[float]
    report: ConvergenceReport
    buffer_peak: int
    updates: int
    env: ChargingEnv = field(repr=False)


def model_spec_for(env: ChargingEnv, algorithm: Algorithm, config: TrainConfig) -> ModelSpec:
    return ModelSpec(algorithm, env.n_agents, OBS_DIM, config.levels, tuple(int(k) for k in env.agent_kind),
                     hidden=config.hidden, mixer_embed=config.mixer_embed, hyper_hidden=config.hyper_hidden)


def episode_seeds(seed: int, episode: int) -> tuple[list[int], list[int]]:
    """Population and station-choice seeds; shared by runs with and without pricing."""
    return [seed, 0, episode], [seed, 1, episode]


def greedy_values(params: Params, spec: ModelSpec, inputs: np.ndarray, hidden: np.ndarray | None
                  ) -> tuple[np.ndarray, np.ndarray | None]:
    Q = np.empty((spec.n_agents, spec.n_levels))
    new_hidden = None if hidden is None else np.empty_like(hidden)
    for k, idx in enumerate(spec.net_agents()):
        if hidden is None:
            Q[idx], _ = mlp_forward(params, net_prefix(k), inputs[idx])
        else:
            Q[idx], new_hidden[idx] = q_forward(params, net_prefix(k), inputs[idx], hidden[idx])
    return Q, new_hidden


def train(world: WorldConfig, algorithm: Algorithm = "vdn", seed: int = 50, config: TrainConfig = TrainConfig(),
          env_factory: Callable[[WorldConfig], ChargingEnv] = ChargingEnv,
          progress: Callable[[int, float, float], None] | None = None) -> TrainResult:
    """Run ``config.episodes`` training episodes and return the learned parameters.

    Raises:
        TrainingDiverged: if a TD loss becomes non-finite.
    """
    env = env_factory(world)
    spec = model_spec_for(env, algorithm, config)
    grid = ActionGrid.uniform(config.levels)
    params = init_params(spec, np.random.default_rng([seed, 2]))
    target = {k: v.copy() for k, v in params.items()}
    explore_rng = np.random.default_rng([seed, 3])
    replay_rng = np.random.default_rng([seed, 4])
    buffer = ReplayBuffer(config.buffer_size)

    rewards: list[float] = []
    epsilons: list[float] = []
    steps = updates = peak = 0
    for m in range(config.episodes):
        eps = config.epsilon(m)
        pop_seed, choice_seed = episode_seeds(seed, m)
        state = env.reset(pop_seed, choice_seed)
        obs, mask = state.observations(), state.mask
        hidden = np.zeros((spec.n_agents, spec.hidden)) if spec.recurrent else None
        prev_action = np.zeros(spec.n_agents, dtype=int)
        history = EpisodeHistory([obs], []) if spec.recurrent else None
        total = 0.0
        done = False
        while not done:
            t = env.t
            if spec.recurrent:
                prev = one_hot(prev_action, spec.n_levels) if t > 0 else np.zeros((spec.n_agents, spec.n_levels))
                Q, hidden = greedy_values(params, spec, np.concatenate([obs, prev], axis=1), hidden)
            else:
                Q, _ = greedy_values(params, spec, obs, None)
            a_idx = epsilon_greedy_batch(Q, eps, explore_rng)
            state, reward, done = env.step(grid.values(a_idx))
            next_obs, next_mask = state.observations(), state.mask
            if history is not None:
                history.actions.append(a_idx)
                history.obs.append(next_obs)
            buffer.add(Transition(obs, a_idx, reward.total * config.reward_scale, next_obs, done, mask,
                                  next_mask, history, t))
            peak = max(peak, len(buffer))
            total += reward.total
            obs, mask, prev_action = next_obs, next_mask, a_idx
            steps += 1

            if config.updates_enabled and len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size, replay_rng)
                loss, grads = loss_and_gradients(batch, params, target, spec, config.gamma)
                if not np.isfinite(loss):
                    raise TrainingDiverged(f"non-finite TD loss at episode {m + 1}, step {t}")
                sgd_step(params, grads, config.lr, config.grad_clip)
                updates += 1
            if steps % config.target_sync == 0:
                target = {k: v.copy() for k, v in params.items()}
        rewards.append(total)
        epsilons.append(eps)
        if progress is not None:
            progress(m + 1, total, eps)
    report = convergence_report(rewards, config.convergence_window, config.convergence_final,
                                config.convergence_tol)
    log.info("trained %s for %d episodes, %d updates, convergence %s", algorithm, config.episodes, updates, report)
    return TrainResult(params, spec, grid, rewards, epsilons, report, peak, updates, env)
