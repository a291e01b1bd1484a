"""Numpy deep Q-network: dense value network, replay memory and updates.

The network is a chain of affine layers with ``relu`` hidden activations and
a linear head. Weights are stored as ``W`` (out x in) and ``b`` (out,).
Training minimizes the mean squared TD error over the Q-values of the
actions actually taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, TrainingDivergence

ACTIVATIONS = ("relu", "linear")


@dataclass
class NetworkWeights:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise DomainError("weights, biases and activations must align")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if act not in ACTIVATIONS:
                raise DomainError(f"unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DomainError(f"layer {i} has inconsistent shapes")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DomainError(f"layer {i} input width does not chain")

    @property
    def input_size(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_size(self) -> int:
        return self.weights[-1].shape[0]

    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        return [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], list(self.activations)
        )

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in layer order, ``W`` before ``b``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def same_shape(self, other: "NetworkWeights") -> bool:
        return self.shapes() == other.shapes() and self.activations == other.activations

    def equal(self, other: "NetworkWeights") -> bool:
        return self.same_shape(other) and all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_network(sizes, rng: np.random.Generator) -> NetworkWeights:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    ws, bs, acts = [], [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / math.sqrt(n_in)
        ws.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        bs.append(np.zeros(n_out))
        acts.append("linear" if i == len(sizes) - 2 else "relu")
    return NetworkWeights(ws, bs, acts)


def _forward_trace(w: NetworkWeights, x: np.ndarray) -> list[np.ndarray]:
    outs = [x]
    for W, b, act in zip(w.weights, w.biases, w.activations):
        z = outs[-1] @ W.T + b
        outs.append(np.maximum(z, 0.0) if act == "relu" else z)
    return outs


def forward(w: NetworkWeights, state) -> np.ndarray:
    """Q-values for one state ``(in,)`` or a batch ``(B, in)``."""
    x = np.asarray(state, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != w.input_size:
        raise DomainError(f"state width {x.shape[1]} != network input {w.input_size}")
    q = _forward_trace(w, x)[-1]
    return q[0] if single else q


def select_action(q, epsilon: float, mask, rng: np.random.Generator) -> int:
    """Masked epsilon-greedy choice; greedy ties go to the lowest index.

    Exactly one uniform draw is consumed per call, plus one integer draw when
    exploring.
    """
    q = np.asarray(q, dtype=float)
    mask = np.ones(q.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    allowed = np.flatnonzero(mask)
    if allowed.size == 0:
        raise DomainError("every action is masked")
    if rng.random() < epsilon:
        return int(allowed[rng.integers(allowed.size)])
    return int(allowed[np.argmax(q[allowed])])


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    next_masks: np.ndarray | None = None

    def __len__(self):
        return self.states.shape[0]


def td_targets(batch: Batch, target_w: NetworkWeights, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')``, or ``r`` when terminal.

    The max is restricted to the actions allowed in the next state when the
    batch carries ``next_masks``.
    """
    if len(batch) == 0:
        raise DomainError("empty batch")
    q_next = forward(target_w, batch.next_states)
    if batch.next_masks is not None:
        q_next = np.where(batch.next_masks, q_next, -np.inf)
    best = q_next.max(axis=1)
    return batch.rewards + np.where(batch.dones, 0.0, gamma * best)


def loss_and_gradients(w: NetworkWeights, states, actions, targets):
    """Mean squared TD error and its gradient w.r.t. every weight and bias."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=float)
    n = x.shape[0]
    outs = _forward_trace(w, x)
    q = outs[-1]
    err = q[np.arange(n), actions] - targets
    loss = float(np.mean(err**2))
    delta = np.zeros_like(q)
    delta[np.arange(n), actions] = 2.0 * err / n
    grads_w = [None] * len(w.weights)
    grads_b = [None] * len(w.weights)
    for i in range(len(w.weights) - 1, -1, -1):
        if w.activations[i] == "relu":
            delta = delta * (outs[i + 1] > 0.0)
        grads_w[i] = delta.T @ outs[i]
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = delta @ w.weights[i]
    return loss, grads_w, grads_b


class SGD:
    def step(self, w: NetworkWeights, grads_w, grads_b, alpha: float) -> NetworkWeights:
        return NetworkWeights(
            [W - alpha * g for W, g in zip(w.weights, grads_w)],
            [b - alpha * g for b, g in zip(w.biases, grads_b)],
            list(w.activations),
        )


class Adam:
    """Adam with bias correction; state is tied to one online network."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, w: NetworkWeights, grads_w, grads_b, alpha: float) -> NetworkWeights:
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads += [gw, gb]
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        new = []
        for p, g, m, v in zip(w.arrays(), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            new.append(p - alpha * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return NetworkWeights(new[0::2], new[1::2], list(w.activations))

    def reset(self):
        self.t = 0
        self.m = self.v = None


def make_optimizer(name: str):
    if name == "sgd":
        return SGD()
    if name == "adam":
        return Adam()
    raise DomainError(f"unknown optimizer {name!r}")


def train_step(w: NetworkWeights, batch: Batch, targets, alpha: float, optimizer=None):
    """One descent step on the TD loss; returns ``(new_weights, loss_before)``."""
    loss, gw, gb = loss_and_gradients(w, batch.states, batch.actions, targets)
    if not math.isfinite(loss):
        raise TrainingDivergence(f"non-finite TD loss {loss}")
    optimizer = optimizer or SGD()
    return optimizer.step(w, gw, gb, alpha), loss


def sync_target(online: NetworkWeights) -> NetworkWeights:
    return online.copy()


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer of transitions."""

    def __init__(self, capacity: int, state_dim: int, num_actions: int | None = None):
        if capacity < 1:
            raise DomainError("capacity must be >= 1")
        self.capacity = capacity
        self.state_dim = state_dim
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.next_masks = None if num_actions is None else np.ones((capacity, num_actions), dtype=bool)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def push(self, state, action, reward, next_state, done, next_mask=None):
        state = np.asarray(state, dtype=float)
        if state.shape != (self.state_dim,):
            raise DomainError(f"state width {state.shape} != memory width {self.state_dim}")
        i = self.inserted % self.capacity
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        if self.next_masks is not None:
            self.next_masks[i] = True if next_mask is None else next_mask
        self.inserted += 1

    def _take(self, idx) -> Batch:
        return Batch(
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
            None if self.next_masks is None else self.next_masks[idx],
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if len(self) == 0:
            raise DomainError("cannot sample from an empty memory")
        return self._take(rng.integers(0, len(self), size=batch_size))

    def contents(self) -> Batch:
        """All stored transitions, oldest first."""
        n = len(self)
        start = self.inserted - n
        return self._take(np.arange(start, self.inserted) % self.capacity)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.6
    batch_size: int = 128
    target_sync_period: int = 200
    memory_capacity: int = 20_000
    hidden_layers: tuple[int, ...] = (64, 64)
    optimizer: str = "sgd"

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        if not 0 <= self.gamma < 1:
            raise DomainError("gamma must lie in [0, 1)")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise DomainError(f"{name} must lie in [0, 1]")
        if not 0 < self.epsilon_decay_fraction <= 1:
            raise DomainError("epsilon_decay_fraction must lie in (0, 1]")
        if not 1 <= self.batch_size <= self.memory_capacity:
            raise DomainError("need 1 <= batch_size <= memory_capacity")
        if self.target_sync_period < 1:
            raise DomainError("target_sync_period must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")


def epsilon_at(episode: int, num_episodes: int, cfg: TrainConfig) -> float:
    """Linear decay over the first ``epsilon_decay_fraction`` of episodes."""
    horizon = max(1.0, cfg.epsilon_decay_fraction * num_episodes)
    frac = min(1.0, episode / horizon)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


@dataclass
class DQNAgent:
    """Online/target network pair with its own replay memory and RNG."""

    online: NetworkWeights
    cfg: TrainConfig
    rng: np.random.Generator
    masked: bool = False
    target: NetworkWeights = None
    memory: ReplayMemory = None
    optimizer: object = None
    steps: int = 0
    last_loss: float = field(default=float("nan"))

    def __post_init__(self):
        if self.target is None:
            self.target = sync_target(self.online)
        if self.memory is None:
            self.memory = ReplayMemory(
                self.cfg.memory_capacity,
                self.online.input_size,
                self.online.output_size if self.masked else None,
            )
        if self.optimizer is None:
            self.optimizer = make_optimizer(self.cfg.optimizer)

    @classmethod
    def create(cls, state_dim: int, num_actions: int, cfg: TrainConfig, rng: np.random.Generator, masked=False):
        net = init_network((state_dim, *cfg.hidden_layers, num_actions), rng)
        return cls(online=net, cfg=cfg, rng=rng, masked=masked)

    def act(self, state, epsilon: float, mask=None) -> int:
        return select_action(forward(self.online, state), epsilon, mask, self.rng)

    def remember(self, state, action, reward, next_state, done, next_mask=None):
        self.memory.push(state, action, reward, next_state, done, next_mask)

    def learn(self):
        """Store-then-learn bookkeeping for one environment step.

        Trains once the memory holds a full minibatch and refreshes the target
        network every ``target_sync_period`` steps. Returns the loss or None.
        """
        self.steps += 1
        loss = None
        if len(self.memory) >= self.cfg.batch_size:
            batch = self.memory.sample(self.cfg.batch_size, self.rng)
            targets = td_targets(batch, self.target, self.cfg.gamma)
            self.online, loss = train_step(self.online, batch, targets, self.cfg.learning_rate, self.optimizer)
            self.last_loss = loss
        if self.steps % self.cfg.target_sync_period == 0:
            self.target = sync_target(self.online)
        return loss
