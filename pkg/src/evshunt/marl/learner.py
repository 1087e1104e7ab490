"""TD learning with additive (VDN) or monotone (Q-mix) value factorisation.

All agents of one pile kind share a network. The loss over a mini-batch is the
sum of squared joint TD errors; its gradient with respect to every parameter is
computed analytically, through the mixer and the agent networks (including
backpropagation through time for the recurrent agents).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .mixers import init_qmix, qmix_backward, qmix_forward
from .networks import Params, init_mlp, init_rnn, mlp_backward, mlp_forward, rnn_backward, rnn_forward
from .replay import Transition

Algorithm = Literal["vdn", "qmix"]


@dataclass(frozen=True)
class ActionGrid:
    levels: tuple[float, ...]

    def __post_init__(self) -> None:
        lv = self.levels
        if len(lv) < 2 or list(lv) != sorted(set(lv)) or lv[0] != -1.0 or lv[-1] != 1.0:
            raise ValueError("action levels must be sorted, unique and span -1..1")

    @classmethod
    def uniform(cls, n: int = 11) -> "ActionGrid":
        return cls(tuple(float(x) for x in np.linspace(-1.0, 1.0, n)))

    def __len__(self) -> int:
        return len(self.levels)

    def values(self, idx: np.ndarray) -> np.ndarray:
        return np.asarray(self.levels)[idx]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor shared by online and target parameters."""

    algorithm: Algorithm
    n_agents: int
    obs_dim: int
    n_levels: int
    agent_net: tuple[int, ...]
    hidden: int = 64
    mixer_embed: int = 32
    hyper_hidden: int = 64

    @property
    def recurrent(self) -> bool:
        return self.algorithm == "qmix"

    @property
    def input_dim(self) -> int:
        # the recurrent agent also sees its previous action
        return self.obs_dim + (self.n_levels if self.recurrent else 0)

    @property
    def state_dim(self) -> int:
        return self.n_agents * self.obs_dim

    @property
    def n_nets(self) -> int:
        return max(self.agent_net) + 1

    def net_agents(self) -> list[np.ndarray]:
        nets = np.asarray(self.agent_net)
        return [np.flatnonzero(nets == k) for k in range(self.n_nets)]


def net_prefix(k: int) -> str:
    return f"net{k}"


def init_params(spec: ModelSpec, rng: np.random.Generator) -> Params:
    params: Params = {}
    for k in range(spec.n_nets):
        init = init_rnn if spec.recurrent else init_mlp
        params.update(init(rng, net_prefix(k), spec.input_dim, spec.hidden, spec.n_levels))
    if spec.algorithm == "qmix":
        params.update(init_qmix(rng, spec.n_agents, spec.state_dim, spec.mixer_embed, spec.hyper_hidden))
    return params


def td_target(reward: float, gamma: float, next_qtot_max: float, done: bool) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    return reward if done else reward + gamma * next_qtot_max


def epsilon_greedy(q_values: Sequence[float], epsilon: float, rng: np.random.Generator) -> int:
    """Greedy level with probability ``1 - epsilon``, else a uniform level.

    Ties in the greedy choice go to the lowest index.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    q = np.asarray(q_values)
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def epsilon_greedy_batch(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Row-wise :func:`epsilon_greedy` for an (agents, levels) array."""
    n, L = q_values.shape
    explore = rng.random(n) < epsilon
    random_idx = rng.integers(L, size=n)
    return np.where(explore, random_idx, np.argmax(q_values, axis=1))


def one_hot(idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(idx.shape + (n,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


# -- batched agent values ---------------------------------------------------

def feedforward_values(params: Params, spec: ModelSpec, obs: np.ndarray,
                       mask: np.ndarray | None = None) -> tuple[np.ndarray, list]:
    """Agent values (B, n, L) for observations (B, n, obs_dim).

    Rows outside ``mask`` are not evaluated and stay zero; they carry no value
    and no gradient in the joint TD error.
    """
    B = obs.shape[0]
    live = np.ones((B, spec.n_agents), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    nets = np.asarray(spec.agent_net)
    Q = np.zeros((B, spec.n_agents, spec.n_levels))
    caches = []
    for k in range(spec.n_nets):
        rows, agents = np.nonzero(live & (nets == k)[None, :])
        q, cache = mlp_forward(params, net_prefix(k), obs[rows, agents])
        Q[rows, agents] = q
        caches.append((rows, agents, cache))
    return Q, caches


def feedforward_backward(params: Params, spec: ModelSpec, caches: list, dQ: np.ndarray) -> Params:
    grads: Params = {}
    for k, (rows, agents, cache) in enumerate(caches):
        grads.update(mlp_backward(params, net_prefix(k), cache, dQ[rows, agents]))
    return grads


def recurrent_inputs(batch: Sequence[Transition], spec: ModelSpec, length: int) -> np.ndarray:
    """Stack agent inputs (obs ++ previous action) of every history, zero padded."""
    B = len(batch)
    X = np.zeros((length, B, spec.n_agents, spec.input_dim))
    for b, tr in enumerate(batch):
        hist = tr.history
        steps = min(length, len(hist.obs))
        X[:steps, b, :, :spec.obs_dim] = np.stack(hist.obs[:steps])
        prev = hist.actions[:steps - 1]
        if prev:
            X[1:steps, b, :, spec.obs_dim:] = one_hot(np.stack(prev), spec.n_levels)
    return X


def recurrent_values(params: Params, spec: ModelSpec, X: np.ndarray) -> tuple[np.ndarray, list]:
    """Agent values (T, B, n, L) by unrolling every history from a zero hidden state."""
    T, B = X.shape[:2]
    Q = np.empty((T, B, spec.n_agents, spec.n_levels))
    caches = []
    for k, idx in enumerate(spec.net_agents()):
        if len(idx) == 0:
            caches.append(None)
            continue
        q, cache = rnn_forward(params, net_prefix(k), X[:, :, idx].reshape(T, B * len(idx), -1))
        Q[:, :, idx] = q.reshape(T, B, len(idx), -1)
        caches.append(cache)
    return Q, caches


def recurrent_backward(params: Params, spec: ModelSpec, caches: list, dQ: np.ndarray) -> Params:
    T, B = dQ.shape[:2]
    grads: Params = {}
    for k, idx in enumerate(spec.net_agents()):
        prefix = net_prefix(k)
        if caches[k] is None:
            grads.update({name: np.zeros_like(v) for name, v in params.items() if name.startswith(prefix + ".")})
            continue
        grads.update(rnn_backward(params, prefix, caches[k], dQ[:, :, idx].reshape(T, B * len(idx), -1)))
    return grads


def loss_and_gradients(batch: Sequence[Transition], params: Params, target_params: Params,
                       spec: ModelSpec, gamma: float) -> tuple[float, Params]:
    """Squared joint TD error summed over the batch, and its exact gradient.

    The bootstrap term uses ``target_params`` and is treated as a constant.
    Unoccupied agents are excluded from both the joint value and the target.
    """
    if not batch:
        raise ValueError("empty batch")
    B = len(batch)
    actions = np.stack([tr.actions for tr in batch])
    rewards = np.array([tr.reward for tr in batch], dtype=float)
    done = np.array([tr.done for tr in batch], dtype=bool)
    mask = np.stack([tr.agent_mask for tr in batch]).astype(float)
    next_mask = np.stack([tr.next_mask for tr in batch]).astype(float)
    rows = np.arange(B)[:, None]
    cols = np.arange(spec.n_agents)[None, :]

    if spec.recurrent:
        t = np.array([tr.t for tr in batch])
        length = int(t.max()) + 2
        X = recurrent_inputs(batch, spec, length)
        Q_seq, caches = recurrent_values(params, spec, X[:length - 1])
        Q = Q_seq[t, np.arange(B)]
        Qn_seq, _ = recurrent_values(target_params, spec, X)
        Qn = Qn_seq[t + 1, np.arange(B)]
    else:
        obs = np.stack([tr.obs for tr in batch])
        Q, caches = feedforward_values(params, spec, obs, mask)
        Qn, _ = feedforward_values(target_params, spec, np.stack([tr.next_obs for tr in batch]), next_mask)

    chosen = Q[rows, cols, actions] * mask
    next_best = Qn.max(axis=2) * next_mask

    if spec.algorithm == "vdn":
        qtot = chosen.sum(axis=1)
        next_qtot = next_best.sum(axis=1)
    else:
        states = np.stack([tr.obs.ravel() for tr in batch])
        next_states = np.stack([tr.next_obs.ravel() for tr in batch])
        qtot, mix_cache = qmix_forward(params, chosen, states)
        next_qtot, _ = qmix_forward(target_params, next_best, next_states)

    y = np.where(done, rewards, rewards + gamma * next_qtot)
    err = y - qtot
    loss = float(np.sum(err * err))
    dqtot = -2.0 * err

    if spec.algorithm == "vdn":
        dchosen = dqtot[:, None] * mask
        grads: Params = {}
    else:
        grads, dqs = qmix_backward(params, mix_cache, dqtot)
        dchosen = dqs * mask

    if spec.recurrent:
        dQ_seq = np.zeros_like(Q_seq)
        dQ_seq[t[:, None], rows, cols, actions] = dchosen
        grads.update(recurrent_backward(params, spec, caches, dQ_seq))
    else:
        dQ = np.zeros_like(Q)
        dQ[rows, cols, actions] = dchosen
        grads.update(feedforward_backward(params, spec, caches, dQ))
    return loss, grads


def sgd_step(params: Params, grads: Params, lr: float, clip_norm: float | None = None) -> float:
    """In-place gradient descent; returns the pre-clipping global gradient norm."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    scale = lr
    if clip_norm is not None and norm > clip_norm:
        scale = lr * clip_norm / norm
    for k, g in grads.items():
        params[k] -= scale * g
    return norm
