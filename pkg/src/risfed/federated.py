"""Federated averaging of the robots' Q-networks.

Only weights cross the robot/AP boundary; replay memories stay local. Each
round is a barrier: every robot uploads its online and target networks, the
AP averages them element-wise and every robot downloads the result before
its next action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dqn import NetworkWeights
from .errors import DomainError


@dataclass(frozen=True)
class FederationConfig:
    sync_period: int = 25
    num_participants: int = 1

    def __post_init__(self):
        if self.sync_period < 1:
            raise DomainError("sync_period must be >= 1")


def aggregate(weight_sets) -> NetworkWeights:
    """Element-wise arithmetic mean of identically shaped networks.

    Computed as ``w_1 + mean_k(w_k - w_1)`` so that averaging identical copies
    returns those weights bit for bit.
    """
    weight_sets = list(weight_sets)
    if not weight_sets:
        raise DomainError("cannot aggregate an empty participant list")
    ref = weight_sets[0]
    for w in weight_sets[1:]:
        if not ref.same_shape(w):
            raise DomainError("participant networks have different shapes")
    k = len(weight_sets)
    params = []
    for i, base in enumerate(ref.arrays()):
        acc = np.zeros_like(base)
        for w in weight_sets[1:]:
            acc += w.arrays()[i] - base
        params.append(base + acc / k)
    return NetworkWeights(params[0::2], params[1::2], list(ref.activations))


def should_sync(step: int, cfg: FederationConfig) -> bool:
    if step < 1:
        raise DomainError("steps are counted from 1")
    return step % cfg.sync_period == 0


def broadcast(global_pair: tuple[NetworkWeights, NetworkWeights], agents) -> None:
    """Install deep copies of the global (online, target) pair on every agent."""
    online, target = global_pair
    for agent in agents:
        if not (agent.online.same_shape(online) and agent.target.same_shape(target)):
            raise DomainError("global network shape does not match a robot network")
    for agent in agents:
        agent.online = online.copy()
        agent.target = target.copy()


@dataclass
class AggregationRound:
    step: int
    participants: list[int]
    online: NetworkWeights
    target: NetworkWeights


class InMemoryTransport:
    """Upload queue between robots and the AP.

    Uploads are drained in ascending robot id, so the aggregate does not
    depend on the order in which learners finished their step.
    """

    def __init__(self):
        self._queue: dict[int, tuple[NetworkWeights, NetworkWeights]] = {}

    def upload(self, robot_id: int, online: NetworkWeights, target: NetworkWeights) -> None:
        self._queue[robot_id] = (online.copy(), target.copy())

    def drain(self) -> list[tuple[int, NetworkWeights, NetworkWeights]]:
        items = [(rid, *self._queue[rid]) for rid in sorted(self._queue)]
        self._queue.clear()
        return items


@dataclass
class FederatedAveraging:
    """AP-side coordinator running one full-participation round per period."""

    cfg: FederationConfig
    transport: InMemoryTransport = field(default_factory=InMemoryTransport)
    num_rounds: int = 0
    last_round: AggregationRound | None = None

    def maybe_round(self, step: int, agents: dict) -> AggregationRound | None:
        """Run a round at ``step`` if due; ``agents`` maps robot id to agent."""
        if not should_sync(step, self.cfg):
            return None
        if self.cfg.num_participants and len(agents) != self.cfg.num_participants:
            raise DomainError(f"expected {self.cfg.num_participants} participants, got {len(agents)}")
        for rid, agent in agents.items():
            self.transport.upload(rid, agent.online, agent.target)
        uploads = self.transport.drain()
        online = aggregate([u[1] for u in uploads])
        target = aggregate([u[2] for u in uploads])
        broadcast((online, target), [agents[u[0]] for u in uploads])
        rnd = AggregationRound(step, [u[0] for u in uploads], online, target)
        self.num_rounds += 1
        self.last_round = rnd
        return rnd
