import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risfed.dqn import (
    Adam,
    Batch,
    DQNAgent,
    NetworkWeights,
    ReplayMemory,
    TrainConfig,
    epsilon_at,
    forward,
    init_network,
    loss_and_gradients,
    select_action,
    sync_target,
    td_targets,
    train_step,
)
from risfed.errors import DomainError, TrainingDivergence


def linear(W, b=None):
    W = np.asarray(W, dtype=float)
    return NetworkWeights([W], [np.zeros(W.shape[0]) if b is None else np.asarray(b, float)], ["linear"])


def test_forward_zero_network():
    net = NetworkWeights([np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)], ["relu", "linear"])
    assert forward(net, [1.0, -2.0, 3.0]).tolist() == [0.0, 0.0]


def test_forward_identity_slice():
    net = linear(np.eye(2, 3))
    assert forward(net, [0.3, -0.7, 9.0]).tolist() == [0.3, -0.7]


def test_forward_batch_matches_single():
    net = init_network((3, 8, 5), np.random.default_rng(0))
    states = np.random.default_rng(1).standard_normal((2, 3))
    batch = forward(net, states)
    assert batch.shape == (2, 5)
    for i in range(2):
        np.testing.assert_allclose(batch[i], forward(net, states[i]), rtol=1e-15, atol=1e-15)


def test_forward_width_mismatch():
    with pytest.raises(DomainError):
        forward(linear(np.eye(2)), [1.0, 2.0, 3.0])


def test_forward_deterministic():
    net = init_network((6, 16, 16, 4), np.random.default_rng(2))
    s = np.random.default_rng(3).standard_normal(6)
    assert forward(net, s).tobytes() == forward(net, s).tobytes()


def test_select_action_greedy():
    rng = np.random.default_rng(0)
    assert select_action([1.0, 5.0, 3.0], 0.0, None, rng) + 1 == 2
    assert select_action([1.0, 5.0, 3.0], 0.0, [True, False, True], rng) == 2
    assert select_action([4.0, 4.0, 1.0], 0.0, None, rng) == 0


def test_select_action_all_masked():
    with pytest.raises(DomainError):
        select_action([1.0, 2.0], 0.0, [False, False], np.random.default_rng(0))


def test_select_action_uniform_exploration_chi_square():
    rng = np.random.default_rng(11)
    mask = np.array([True, False, True, True, False, True])
    draws = [select_action(np.arange(6.0), 1.0, mask, rng) for _ in range(10_000)]
    counts = np.bincount(draws, minlength=6)
    assert counts[~mask].sum() == 0
    observed = counts[mask]
    expected = 10_000 / mask.sum()
    chi2 = float(((observed - expected) ** 2 / expected).sum())
    # chi-square critical value, 3 degrees of freedom, alpha = 0.001
    assert chi2 < 16.27


def _batch(rewards, dones, next_states=None):
    n = len(rewards)
    ns = np.zeros((n, 1)) if next_states is None else np.asarray(next_states, float)
    return Batch(np.zeros((n, 1)), np.zeros(n, int), np.asarray(rewards, float), ns, np.asarray(dones, bool))


def test_td_target_examples():
    ten = linear([[10.0], [2.0]], [0.0, 0.0])
    assert td_targets(_batch([5.0], [True], [[1.0]]), ten, 0.9).tolist() == [5.0]
    assert td_targets(_batch([3.0, -1.0], [False, False], [[1.0], [1.0]]), ten, 0.0).tolist() == [3.0, -1.0]
    assert td_targets(_batch([1.0], [False], [[1.0]]), ten, 0.9)[0] == pytest.approx(10.0, rel=1e-15)


def test_td_target_respects_next_mask():
    net = linear([[10.0], [2.0]])
    b = _batch([0.0], [False], [[1.0]])
    b.next_masks = np.array([[False, True]])
    assert td_targets(b, net, 0.5)[0] == 1.0


def test_train_step_zero_rate_keeps_weights():
    net = init_network((3, 4, 2), np.random.default_rng(0))
    b = Batch(np.ones((2, 3)), np.array([0, 1]), np.zeros(2), np.ones((2, 3)), np.zeros(2, bool))
    new, loss = train_step(net, b, np.array([1.0, -1.0]), 0.0)
    assert new.equal(net)
    assert loss > 0


def test_linear_gradient_closed_form():
    # One transition on a single linear layer: dL/dW[a] = 2 (q_a - y) x, dL/db[a] = 2 (q_a - y).
    W = np.array([[0.5, -1.0], [2.0, 0.25]])
    b = np.array([0.1, -0.3])
    x = np.array([1.5, -2.0])
    y = 0.75
    q1 = W[1] @ x + b[1]
    loss, gw, gb = loss_and_gradients(linear(W, b), x[None], [1], [y])
    assert loss == pytest.approx((q1 - y) ** 2, rel=1e-15)
    np.testing.assert_allclose(gw[0], [[0.0, 0.0], 2 * (q1 - y) * x], rtol=1e-15)
    np.testing.assert_allclose(gb[0], [0.0, 2 * (q1 - y)], rtol=1e-15)
    new, _ = train_step(linear(W, b), Batch(x[None], np.array([1]), np.zeros(1), x[None], np.ones(1, bool)), [y], 0.1)
    np.testing.assert_allclose(new.weights[0][1], W[1] - 0.1 * 2 * (q1 - y) * x, rtol=1e-15)


def finite_difference_error(seed: int, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences."""
    rng = np.random.default_rng(seed)
    net = init_network((4, 7, 5, 3), rng)
    for b in net.biases:
        b[:] = rng.uniform(-0.5, 0.5, b.shape)
    x = rng.standard_normal((6, 4))
    actions = rng.integers(0, 3, 6)
    targets = rng.standard_normal(6)
    _, gw, gb = loss_and_gradients(net, x, actions, targets)
    analytic = np.concatenate([g.ravel() for pair in zip(gw, gb) for g in pair])
    params = net.arrays()
    numeric = []
    for arr in params:
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss_and_gradients(net, x, actions, targets)[0]
            arr[idx] = old - h
            down = loss_and_gradients(net, x, actions, targets)[0]
            arr[idx] = old
            numeric.append((up - down) / (2 * h))
    numeric = np.array(numeric)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


def test_gradient_matches_finite_differences():
    assert finite_difference_error(0) < 1e-4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    net = linear([[1e300, 1e300]])
    b = Batch(np.array([[1e10, 1e10]]), np.array([0]), np.zeros(1), np.zeros((1, 2)), np.ones(1, bool))
    with pytest.raises(TrainingDivergence):
        train_step(net, b, np.zeros(1), 0.1)


def test_adam_moves_against_gradient():
    net = linear([[1.0]])
    b = Batch(np.array([[1.0]]), np.array([0]), np.zeros(1), np.zeros((1, 1)), np.ones(1, bool))
    new, _ = train_step(net, b, np.zeros(1), 0.01, Adam())
    # The first bias-corrected Adam step has magnitude alpha.
    assert new.weights[0][0, 0] == pytest.approx(1.0 - 0.01, rel=1e-6)


def test_sync_target_copy_semantics():
    online = init_network((2, 3, 2), np.random.default_rng(0))
    target = sync_target(online)
    assert target.equal(online)
    online.weights[0][0, 0] += 1.0
    assert not target.equal(online)
    assert sync_target(sync_target(target)).equal(target)


def test_replay_fifo_eviction():
    mem = ReplayMemory(3, 1)
    for i in range(5):
        mem.push([float(i)], i, float(i), [i + 1.0], False)
    assert len(mem) == 3
    assert mem.contents().actions.tolist() == [2, 3, 4]


@settings(max_examples=40)
@given(st.integers(1, 20), st.integers(0, 60), st.integers(0, 2**32 - 1))
def test_replay_samples_only_live_entries(capacity, pushes, seed):
    mem = ReplayMemory(capacity, 2)
    for i in range(pushes):
        mem.push([i, -i], i, 0.0, [0, 0], False)
    assert len(mem) == min(capacity, pushes)
    if pushes:
        batch = mem.sample(16, np.random.default_rng(seed))
        assert set(batch.actions.tolist()) <= set(range(max(0, pushes - capacity), pushes))


def test_epsilon_schedule():
    cfg = TrainConfig()
    assert epsilon_at(0, 100, cfg) == 1.0
    assert epsilon_at(30, 100, cfg) == pytest.approx(0.525)
    assert epsilon_at(60, 100, cfg) == pytest.approx(0.05)
    assert epsilon_at(99, 100, cfg) == pytest.approx(0.05)


def test_agent_target_sync_period():
    cfg = TrainConfig(batch_size=2, target_sync_period=3, memory_capacity=10, hidden_layers=(4,), learning_rate=0.1)
    agent = DQNAgent.create(2, 3, cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for _ in range(2):
        agent.remember(rng.standard_normal(2), 0, 1.0, rng.standard_normal(2), False)
    for step in range(1, 7):
        agent.remember(rng.standard_normal(2), step % 3, 1.0, rng.standard_normal(2), False)
        agent.learn()
        assert agent.target.equal(agent.online) == (step % 3 == 0)


def test_train_config_validation():
    with pytest.raises(DomainError):
        TrainConfig(gamma=1.0)
    with pytest.raises(DomainError):
        TrainConfig(batch_size=64, memory_capacity=32)
