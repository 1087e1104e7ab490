"""Agent value networks in plain numpy with hand-written backward passes.

Parameters live in flat ``dict[str, np.ndarray]`` keyed ``"<prefix>.<name>"`` so
that several networks (and the mixer) share one dictionary, one optimiser step
and one checkpoint format.

Feed-forward agent:  obs -> 64 -> 64 -> |levels|  (ELU hidden units)
Recurrent agent:     obs -> 64 (ELU) -> GRU(64) -> |levels|
"""

from __future__ import annotations

import numpy as np

Params = dict[str, np.ndarray]


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def elu_grad_from_output(y: np.ndarray) -> np.ndarray:
    """ELU derivative expressed through its output (``exp(x) = y + 1`` for x <= 0)."""
    return np.where(y > 0, 1.0, y + 1.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)


def init_mlp(rng: np.random.Generator, prefix: str, in_dim: int, hidden: int, out_dim: int) -> Params:
    p: Params = {}
    dims = [in_dim, hidden, hidden, out_dim]
    for k in range(3):
        p[f"{prefix}.W{k + 1}"], p[f"{prefix}.b{k + 1}"] = _linear(rng, dims[k], dims[k + 1])
    return p


def mlp_forward(params: Params, prefix: str, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    z1 = x @ params[f"{prefix}.W1"] + params[f"{prefix}.b1"]
    h1 = elu(z1)
    z2 = h1 @ params[f"{prefix}.W2"] + params[f"{prefix}.b2"]
    h2 = elu(z2)
    q = h2 @ params[f"{prefix}.W3"] + params[f"{prefix}.b3"]
    return q, (x, z1, h1, z2, h2)


def mlp_backward(params: Params, prefix: str, cache: tuple, dq: np.ndarray) -> Params:
    x, z1, h1, z2, h2 = cache
    g: Params = {}
    g[f"{prefix}.W3"] = h2.T @ dq
    g[f"{prefix}.b3"] = dq.sum(axis=0)
    dz2 = (dq @ params[f"{prefix}.W3"].T) * elu_grad_from_output(h2)
    g[f"{prefix}.W2"] = h1.T @ dz2
    g[f"{prefix}.b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params[f"{prefix}.W2"].T) * elu_grad_from_output(h1)
    g[f"{prefix}.W1"] = x.T @ dz1
    g[f"{prefix}.b1"] = dz1.sum(axis=0)
    return g


def init_rnn(rng: np.random.Generator, prefix: str, in_dim: int, hidden: int, out_dim: int) -> Params:
    p: Params = {}
    p[f"{prefix}.W_in"], p[f"{prefix}.b_in"] = _linear(rng, in_dim, hidden)
    p[f"{prefix}.Wi"], p[f"{prefix}.bi"] = _linear(rng, hidden, 3 * hidden)
    p[f"{prefix}.Wh"], p[f"{prefix}.bh"] = _linear(rng, hidden, 3 * hidden)
    p[f"{prefix}.W_out"], p[f"{prefix}.b_out"] = _linear(rng, hidden, out_dim)
    return p


def is_recurrent(params: Params, prefix: str) -> bool:
    return f"{prefix}.Wh" in params


def rnn_hidden_size(params: Params, prefix: str) -> int:
    return params[f"{prefix}.Wh"].shape[0]


def gru_cell(params: Params, prefix: str, x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, tuple]:
    """One step of input layer + GRU; returns the new hidden state and a cache."""
    H = h.shape[1]
    ze = x @ params[f"{prefix}.W_in"] + params[f"{prefix}.b_in"]
    e = elu(ze)
    gi = e @ params[f"{prefix}.Wi"] + params[f"{prefix}.bi"]
    gh = h @ params[f"{prefix}.Wh"] + params[f"{prefix}.bh"]
    r = sigmoid(gi[:, :H] + gh[:, :H])
    z = sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
    n = np.tanh(gi[:, 2 * H:] + r * gh[:, 2 * H:])
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, ze, e, h, gh, r, z, n)


def rnn_forward(params: Params, prefix: str, xs: np.ndarray, h0: np.ndarray | None = None
                ) -> tuple[np.ndarray, list]:
    """Unroll over ``xs`` of shape (T, rows, in_dim); returns q of shape (T, rows, out)."""
    T, R, _ = xs.shape
    h = np.zeros((R, rnn_hidden_size(params, prefix))) if h0 is None else h0
    qs, caches = [], []
    for t in range(T):
        h_new, cache = gru_cell(params, prefix, xs[t], h)
        qs.append(h_new @ params[f"{prefix}.W_out"] + params[f"{prefix}.b_out"])
        caches.append((cache, h_new))
        h = h_new
    return np.stack(qs), caches


def rnn_backward(params: Params, prefix: str, caches: list, dqs: np.ndarray) -> Params:
    """Backpropagation through time for :func:`rnn_forward`."""
    g = {k: np.zeros_like(v) for k, v in params.items() if k.startswith(prefix + ".")}
    Wi, Wh, W_out, W_in = (params[f"{prefix}.{n}"] for n in ("Wi", "Wh", "W_out", "W_in"))
    H = Wh.shape[0]
    dh_next = np.zeros((dqs.shape[1], H))
    for t in range(len(caches) - 1, -1, -1):
        (x, ze, e, h_prev, gh, r, z, n), h_new = caches[t]
        dq = dqs[t]
        g[f"{prefix}.W_out"] += h_new.T @ dq
        g[f"{prefix}.b_out"] += dq.sum(axis=0)
        dh = dq @ W_out.T + dh_next
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z
        dan = dn * (1.0 - n * n)
        dar = dan * gh[:, 2 * H:] * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dgi = np.concatenate([dar, daz, dan], axis=1)
        dgh = np.concatenate([dar, daz, dan * r], axis=1)
        g[f"{prefix}.Wi"] += e.T @ dgi
        g[f"{prefix}.bi"] += dgi.sum(axis=0)
        g[f"{prefix}.Wh"] += h_prev.T @ dgh
        g[f"{prefix}.bh"] += dgh.sum(axis=0)
        dh_prev += dgh @ Wh.T
        dze = (dgi @ Wi.T) * elu_grad(ze)
        g[f"{prefix}.W_in"] += x.T @ dze
        g[f"{prefix}.b_in"] += dze.sum(axis=0)
        dh_next = dh_prev
    return g


def q_forward(params: Params, prefix: str, observation: np.ndarray, hidden: np.ndarray | None = None
              ) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-level action values for a batch of observations (rows).

    The feed-forward path ignores ``hidden`` and returns ``None`` for it; the
    recurrent path advances the GRU by one step from ``hidden`` (zeros if None).
    """
    x = np.atleast_2d(observation)
    expected = params[f"{prefix}.W_in" if is_recurrent(params, prefix) else f"{prefix}.W1"].shape[0]
    if x.shape[1] != expected:
        raise ValueError(f"observation width {x.shape[1]} does not match network input {expected}")
    if not is_recurrent(params, prefix):
        q, _ = mlp_forward(params, prefix, x)
        return q, None
    h = np.zeros((x.shape[0], rnn_hidden_size(params, prefix))) if hidden is None else np.atleast_2d(hidden)
    h_new, _ = gru_cell(params, prefix, x, h)
    return h_new @ params[f"{prefix}.W_out"] + params[f"{prefix}.b_out"], h_new
