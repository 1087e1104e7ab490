"""Joint-value mixers: additive (VDN) and monotone hypernetwork mixing (Q-mix).

The Q-mix mixing weights pass through softplus, so they are strictly positive for
every parameter setting and ``dQ_tot/dQ_i >= 0`` holds by construction.
"""

from __future__ import annotations

import numpy as np

from .networks import Params, _linear, elu, elu_grad, sigmoid, softplus

MIX = "mix"


def vdn_mix(agent_qs, mask=None) -> float:
    """Sum of the (unmasked) agent values, accumulated left to right."""
    qs = np.asarray(agent_qs, dtype=float)
    if mask is not None:
        qs = np.where(np.asarray(mask, dtype=bool), qs, 0.0)
    total = 0.0
    for q in qs:
        total += float(q)
    return total


def init_qmix(rng: np.random.Generator, n_agents: int, state_dim: int, embed: int = 32,
              hyper_hidden: int = 64) -> Params:
    p: Params = {}
    p[f"{MIX}.hw1_W1"], p[f"{MIX}.hw1_b1"] = _linear(rng, state_dim, hyper_hidden)
    p[f"{MIX}.hw1_W2"], p[f"{MIX}.hw1_b2"] = _linear(rng, hyper_hidden, n_agents * embed)
    p[f"{MIX}.hb1_W"], p[f"{MIX}.hb1_b"] = _linear(rng, state_dim, embed)
    p[f"{MIX}.hw2_W1"], p[f"{MIX}.hw2_b1"] = _linear(rng, state_dim, hyper_hidden)
    p[f"{MIX}.hw2_W2"], p[f"{MIX}.hw2_b2"] = _linear(rng, hyper_hidden, embed)
    p[f"{MIX}.hv_W1"], p[f"{MIX}.hv_b1"] = _linear(rng, state_dim, hyper_hidden)
    p[f"{MIX}.hv_W2"], p[f"{MIX}.hv_b2"] = _linear(rng, hyper_hidden, 1)
    return p


def qmix_forward(params: Params, qs: np.ndarray, states: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Mix agent values ``qs`` (B, n) conditioned on ``states`` (B, S) into (B,)."""
    B, n = qs.shape
    embed = params[f"{MIX}.hb1_b"].shape[0]
    if states.shape[1] != params[f"{MIX}.hw1_W1"].shape[0] or params[f"{MIX}.hw1_b2"].shape[0] != n * embed:
        raise ValueError("agent values or state width do not match the mixer")
    pre1 = states @ params[f"{MIX}.hw1_W1"] + params[f"{MIX}.hw1_b1"]
    a1 = elu(pre1)
    w1_raw = (a1 @ params[f"{MIX}.hw1_W2"] + params[f"{MIX}.hw1_b2"]).reshape(B, n, embed)
    w1 = softplus(w1_raw)
    b1 = states @ params[f"{MIX}.hb1_W"] + params[f"{MIX}.hb1_b"]
    hid_pre = np.einsum("bn,bne->be", qs, w1) + b1
    hid = elu(hid_pre)
    pre2 = states @ params[f"{MIX}.hw2_W1"] + params[f"{MIX}.hw2_b1"]
    a2 = elu(pre2)
    w2_raw = a2 @ params[f"{MIX}.hw2_W2"] + params[f"{MIX}.hw2_b2"]
    w2 = softplus(w2_raw)
    prev = states @ params[f"{MIX}.hv_W1"] + params[f"{MIX}.hv_b1"]
    av = elu(prev)
    v = (av @ params[f"{MIX}.hv_W2"] + params[f"{MIX}.hv_b2"])[:, 0]
    qtot = (hid * w2).sum(axis=1) + v
    cache = (qs, states, pre1, a1, w1_raw, w1, hid_pre, hid, pre2, a2, w2_raw, w2, prev, av)
    return qtot, cache


def qmix_backward(params: Params, cache: tuple, dqtot: np.ndarray) -> tuple[Params, np.ndarray]:
    """Gradients of the mixer parameters and of the agent values."""
    qs, states, pre1, a1, w1_raw, w1, hid_pre, hid, pre2, a2, w2_raw, w2, prev, av = cache
    B, n, embed = w1.shape
    g: Params = {}
    d = dqtot[:, None]

    # state value branch
    g[f"{MIX}.hv_W2"] = av.T @ d
    g[f"{MIX}.hv_b2"] = d.sum(axis=0)
    dprev = (d @ params[f"{MIX}.hv_W2"].T) * elu_grad(prev)
    g[f"{MIX}.hv_W1"] = states.T @ dprev
    g[f"{MIX}.hv_b1"] = dprev.sum(axis=0)

    # second-layer weights
    dw2_raw = d * hid * sigmoid(w2_raw)
    g[f"{MIX}.hw2_W2"] = a2.T @ dw2_raw
    g[f"{MIX}.hw2_b2"] = dw2_raw.sum(axis=0)
    dpre2 = (dw2_raw @ params[f"{MIX}.hw2_W2"].T) * elu_grad(pre2)
    g[f"{MIX}.hw2_W1"] = states.T @ dpre2
    g[f"{MIX}.hw2_b1"] = dpre2.sum(axis=0)

    # hidden mixing layer
    dhid_pre = d * w2 * elu_grad(hid_pre)
    g[f"{MIX}.hb1_W"] = states.T @ dhid_pre
    g[f"{MIX}.hb1_b"] = dhid_pre.sum(axis=0)
    dqs = np.einsum("be,bne->bn", dhid_pre, w1)
    dw1_raw = (qs[:, :, None] * dhid_pre[:, None, :] * sigmoid(w1_raw)).reshape(B, n * embed)
    g[f"{MIX}.hw1_W2"] = a1.T @ dw1_raw
    g[f"{MIX}.hw1_b2"] = dw1_raw.sum(axis=0)
    dpre1 = (dw1_raw @ params[f"{MIX}.hw1_W2"].T) * elu_grad(pre1)
    g[f"{MIX}.hw1_W1"] = states.T @ dpre1
    g[f"{MIX}.hw1_b1"] = dpre1.sum(axis=0)
    return g, dqs


def qmix_mix(agent_qs, global_state, params: Params) -> float:
    qtot, _ = qmix_forward(params, np.atleast_2d(np.asarray(agent_qs, dtype=float)),
                           np.atleast_2d(np.asarray(global_state, dtype=float)))
    return float(qtot[0])


def mixing_gradient(params: Params, agent_qs, global_state) -> np.ndarray:
    """Analytic ``dQ_tot/dQ_i`` for one state."""
    _, cache = qmix_forward(params, np.atleast_2d(np.asarray(agent_qs, dtype=float)),
                            np.atleast_2d(np.asarray(global_state, dtype=float)))
    _, dqs = qmix_backward(params, cache, np.ones(1))
    return dqs[0]
