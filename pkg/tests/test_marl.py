import itertools
import math

import numpy as np
import pytest
from scipy import stats

from evshunt.marl.learner import (
    ActionGrid,
    ModelSpec,
    epsilon_greedy,
    init_params,
    loss_and_gradients,
    sgd_step,
    td_target,
)
from evshunt.marl.mixers import MIX, init_qmix, mixing_gradient, qmix_mix, vdn_mix
from evshunt.marl.networks import init_mlp, init_rnn, q_forward
from evshunt.marl.replay import ReplayBuffer, Transition

from oracles import gradient_check, scalar_gru, scalar_mlp


# -- agent networks -------------------------------------------------------------

@pytest.mark.parametrize("init", [init_mlp, init_rnn])
def test_zero_network_outputs_zero(init):
    params = {k: np.zeros_like(v) for k, v in init(np.random.default_rng(0), "a", 6, 8, 5).items()}
    q, _ = q_forward(params, "a", np.ones(6))
    assert np.array_equal(q, np.zeros((1, 5)))


@pytest.mark.parametrize("init", [init_mlp, init_rnn])
def test_forward_is_deterministic(init):
    params = init(np.random.default_rng(0), "a", 6, 8, 5)
    x = np.random.default_rng(1).normal(size=(3, 6))
    q1, h1 = q_forward(params, "a", x)
    q2, h2 = q_forward(params, "a", x)
    assert np.array_equal(q1, q2)
    assert (h1 is None and h2 is None) or np.array_equal(h1, h2)


def test_feedforward_matches_scalar_reimplementation():
    rng = np.random.default_rng(3)
    params = init_mlp(rng, "a", 7, 6, 4)
    params = {k: v + rng.normal(0, 0.2, v.shape) for k, v in params.items()}
    for _ in range(20):
        x = rng.normal(size=7)
        q, _ = q_forward(params, "a", x)
        assert np.max(np.abs(q[0] - np.array(scalar_mlp(params, "a", x)))) < 1e-10


def test_recurrent_matches_scalar_reimplementation_over_a_sequence():
    rng = np.random.default_rng(4)
    params = init_rnn(rng, "a", 5, 6, 3)
    params = {k: v + rng.normal(0, 0.2, v.shape) for k, v in params.items()}
    h = np.zeros(6)
    h_ref = [0.0] * 6
    for _ in range(12):
        x = rng.normal(size=5)
        q, h = q_forward(params, "a", x, h)
        q_ref, h_ref = scalar_gru(params, "a", x, h_ref)
        assert np.max(np.abs(q[0] - np.array(q_ref))) < 1e-10
        assert np.max(np.abs(h[0] - np.array(h_ref))) < 1e-10
        h = h[0]


def test_input_width_mismatch():
    params = init_mlp(np.random.default_rng(0), "a", 6, 8, 5)
    with pytest.raises(ValueError, match="width"):
        q_forward(params, "a", np.ones(5))


# -- mixers ---------------------------------------------------------------------

def test_vdn_mix_examples():
    assert vdn_mix([1.0, 2.0, -0.5]) == 2.5
    assert vdn_mix([-3.25]) == -3.25
    assert vdn_mix([1.0, 2.0, 4.0], mask=[True, False, True]) == 5.0


def _identity_mixer(n_agents: int, state_dim: int):
    """Mixer whose first layer weights are all 1, second layer 1, no biases or state value."""
    p = {k: np.zeros_like(v) for k, v in init_qmix(np.random.default_rng(0), n_agents, state_dim, 1, 4).items()}
    one = math.log(math.e - 1.0)  # softplus^-1(1)
    p[f"{MIX}.hw1_b2"][:] = one
    p[f"{MIX}.hw2_b2"][:] = one
    return p


def test_identity_equivalent_mixer_reduces_to_sum():
    p = _identity_mixer(3, 5)
    rng = np.random.default_rng(0)
    for _ in range(10):
        qs = rng.uniform(0.1, 3.0, size=3)  # ELU is the identity on positive inputs
        assert qmix_mix(qs, rng.normal(size=5), p) == pytest.approx(qs.sum(), abs=1e-12)


def test_qmix_upward_perturbation_never_decreases():
    rng = np.random.default_rng(1)
    p = init_qmix(rng, 4, 6, 8, 16)
    for _ in range(200):
        qs, s = rng.normal(0, 3, size=4), rng.normal(size=6)
        i, delta = rng.integers(4), rng.uniform(1e-6, 5)
        bumped = qs.copy()
        bumped[i] += delta
        assert qmix_mix(bumped, s, p) >= qmix_mix(qs, s, p)


def test_qmix_analytic_gradient_matches_finite_difference():
    rng = np.random.default_rng(2)
    p = init_qmix(rng, 3, 4, 5, 6)
    qs, s = rng.normal(size=3), rng.normal(size=4)
    g = mixing_gradient(p, qs, s)
    h = 1e-6
    for i in range(3):
        e = np.eye(3)[i] * h
        fd = (qmix_mix(qs + e, s, p) - qmix_mix(qs - e, s, p)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)
        assert g[i] > 0


def test_decentralised_argmax_equals_joint_argmax():
    rng = np.random.default_rng(5)
    mixer = init_qmix(rng, 3, 4, 6, 8)
    for _ in range(20):
        Q = rng.normal(size=(3, 5))
        s = rng.normal(size=4)
        local = tuple(int(a) for a in Q.argmax(axis=1))
        joint = list(itertools.product(range(5), repeat=3))
        vdn_best = max(joint, key=lambda a: vdn_mix([Q[i, a[i]] for i in range(3)]))
        qmix_best = max(joint, key=lambda a: qmix_mix([Q[i, a[i]] for i in range(3)], s, mixer))
        assert vdn_best == local
        assert qmix_best == local


# -- TD learning ------------------------------------------------------------------

@pytest.mark.parametrize("r, gamma, nxt, done, y", [
    (1.0, 0.9, 2.0, False, 2.8),
    (1.0, 0.9, 2.0, True, 1.0),
    (1.0, 0.0, 2.0, False, 1.0),
])
def test_td_target(r, gamma, nxt, done, y):
    assert td_target(r, gamma, nxt, done) == pytest.approx(y, abs=1e-15)


def test_td_target_rejects_gamma_one():
    with pytest.raises(ValueError):
        td_target(1.0, 1.0, 0.0, False)


def _transition(rng, n, obs_dim, levels, reward=0.0, done=False):
    return Transition(rng.normal(size=(n, obs_dim)), rng.integers(levels, size=n), reward,
                      rng.normal(size=(n, obs_dim)), done, np.ones(n, bool), np.ones(n, bool))


def test_loss_is_zero_at_fixed_point():
    rng = np.random.default_rng(0)
    spec = ModelSpec("vdn", 3, 4, 5, (0, 1, 0), hidden=6)
    params = init_params(spec, rng)
    batch = [_transition(rng, 3, 4, 5) for _ in range(4)]
    for tr in batch:
        q = np.array([scalar_mlp(params, f"net{spec.agent_net[i]}", tr.obs[i]) for i in range(3)])
        tr.reward = float(q[np.arange(3), tr.actions].sum())
    loss, grads = loss_and_gradients(batch, params, params, spec, 0.0)
    assert loss == pytest.approx(0.0, abs=1e-24)
    assert all(np.max(np.abs(g)) < 1e-12 for g in grads.values())


def test_single_transition_loss_by_hand():
    rng = np.random.default_rng(1)
    spec = ModelSpec("vdn", 2, 3, 4, (0, 1), hidden=5)
    params, target = init_params(spec, rng), init_params(spec, rng)
    tr = _transition(rng, 2, 3, 4, reward=0.7)
    tr.next_mask = np.array([True, False])
    qtot = sum(scalar_mlp(params, f"net{i}", tr.obs[i])[tr.actions[i]] for i in range(2))
    next_best = max(scalar_mlp(target, "net0", tr.next_obs[0]))  # agent 1 is masked next step
    expected = (0.7 + 0.95 * next_best - qtot) ** 2
    loss, _ = loss_and_gradients([tr], params, target, spec, 0.95)
    assert loss == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("algorithm", ["vdn", "qmix"])
@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(algorithm, seed):
    assert gradient_check(algorithm, 1000 + seed) < 1e-4


def test_sgd_step_clips_global_norm():
    params = {"w": np.zeros(2)}
    norm = sgd_step(params, {"w": np.array([3.0, 4.0])}, lr=1.0, clip_norm=1.0)
    assert norm == 5.0
    assert np.allclose(params["w"], [-0.6, -0.8])


# -- exploration ------------------------------------------------------------------

def test_greedy_when_epsilon_zero_and_ties_go_low():
    rng = np.random.default_rng(0)
    assert all(epsilon_greedy([0.1, 0.9, 0.3], 0.0, rng) == 1 for _ in range(100))
    assert epsilon_greedy([0.5, 0.9, 0.9], 0.0, rng) == 1


def test_uniform_when_epsilon_one():
    rng = np.random.default_rng(1)
    counts = np.bincount([epsilon_greedy(np.arange(5.0), 1.0, rng) for _ in range(10_000)], minlength=5)
    assert stats.chisquare(counts).pvalue > 0.001


def test_argmax_frequency_matches_closed_form():
    rng = np.random.default_rng(2)
    eps, levels = 0.3, 11
    hits = np.mean([epsilon_greedy(np.arange(levels), eps, rng) == levels - 1 for _ in range(10_000)])
    assert abs(hits - (1 - eps + eps / levels)) <= 0.02


def test_epsilon_out_of_range():
    with pytest.raises(ValueError):
        epsilon_greedy([1.0], 1.5, np.random.default_rng(0))


def test_action_grid():
    grid = ActionGrid.uniform(11)
    assert len(grid) == 11 and grid.levels[0] == -1.0 and grid.levels[5] == 0.0
    assert list(grid.values(np.array([0, 10]))) == [-1.0, 1.0]
    with pytest.raises(ValueError):
        ActionGrid((-1.0, 0.5))


# -- replay -----------------------------------------------------------------------

def test_replay_buffer_is_bounded_fifo():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(5)
    items = [_transition(rng, 1, 2, 3, reward=float(i)) for i in range(8)]
    for tr in items:
        buf.add(tr)
    assert len(buf) == 5
    assert buf.oldest().reward == 3.0
    rewards = sorted(tr.reward for tr in buf.sample(5, rng))
    assert rewards == [3.0, 4.0, 5.0, 6.0, 7.0]  # sampled without replacement


def test_replay_capacity_must_be_positive():
    with pytest.raises(ValueError):
        ReplayBuffer(0)
