"""Training loops: federated DRL, centralized DQN, OMA and QoE variants.

Every run is a pure function of its :class:`SimConfig` (seed included).
Randomness comes from independent streams spawned from the run seed, one
for channels, one for placements, one for evaluation channels and one per
agent, so adding an agent never perturbs another agent's draws.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import SimConfig, resolved_summary
from .dqn import DQNAgent, NetworkWeights, epsilon_at
from .env import random_placements
from .errors import ActionSpaceTooLarge, DomainError
from .federated import FederatedAveraging
from .mdp import centralized_action_space_size, global_action_space_size, local_action_space_size
from .metrics import EPISODE_HEADER, MetricsWriter, episode_objective
from .simulator import Simulator

log = logging.getLogger(__name__)

OBJECTIVE_FORMULA = "sum_k (1/T_k) * sum_{t<=T_k} R_k^t / E_k,  E_k = (e1*v + e2) * T_k"

_STREAMS = {"channel": 0, "placement": 1, "global": 2, "central": 3, "eval": 4, "robots": 5}


def _streams(seed: int):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: children[i] for name, i in _STREAMS.items()}


def _rng(seq) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seq))


def placements(cfg: SimConfig):
    """Starts and destinations: explicit in the config or a seeded draw."""
    if cfg.fleet.starts is not None:
        return [tuple(map(float, p)) for p in cfg.fleet.starts], [tuple(map(float, p)) for p in cfg.fleet.destinations]
    rng = _rng(_streams(cfg.run.seed)["placement"])
    return random_placements(cfg.grid(), cfg.fleet.num_robots, rng)


@dataclass
class RunResult:
    algorithm: str
    episode_rewards: list[float] = field(default_factory=list)
    episode_objectives: list[float] = field(default_factory=list)
    episode_steps: list[int] = field(default_factory=list)
    episode_seconds: list[float] = field(default_factory=list)
    eval_objectives: list[float] = field(default_factory=list)
    eval_rewards: list[float] = field(default_factory=list)
    networks: dict[str, NetworkWeights] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def eval_objective(self) -> float:
        return float(np.mean(self.eval_objectives)) if self.eval_objectives else float("nan")


# -- policies ------------------------------------------------------------------


class FederatedPolicy:
    """RIS agent at the AP plus one local agent per robot."""

    def __init__(self, cfg: SimConfig, sim: Simulator, streams):
        k = cfg.fleet.num_robots
        self.global_cfg = cfg.train_config("global")
        self.local_cfg = cfg.train_config("local")
        self.global_agent = DQNAgent.create(3 * k, sim.num_global_actions, self.global_cfg, _rng(streams["global"]))
        robot_seqs = streams["robots"].spawn(k)
        num_local = local_action_space_size(cfg.power.num_levels)
        self.local_agents = {
            i: DQNAgent.create(3, num_local, self.local_cfg, _rng(robot_seqs[i])) for i in range(k)
        }
        self.federation = FederatedAveraging(cfg.federation_config())

    def load(self, networks: dict[str, NetworkWeights]):
        self.global_agent.online = networks["global"].copy()
        self.global_agent.target = networks["global"].copy()
        for i, agent in self.local_agents.items():
            net = networks.get(f"local_{i}", networks.get("local"))
            agent.online, agent.target = net.copy(), net.copy()

    def networks(self) -> dict[str, NetworkWeights]:
        nets = {"global": self.global_agent.online.copy()}
        for i, agent in self.local_agents.items():
            nets[f"local_{i}"] = agent.online.copy()
        return nets

    def play_slot(self, sim: Simulator, eps_g: float, eps_l: float, learn: bool, step: int):
        s_g = sim.global_state()
        a_g = self.global_agent.act(s_g, eps_g)
        ranks = sim.ranks(a_g)
        active = sim.active()
        actions = [None] * sim.k
        s_l = {}
        for k, agent in self.local_agents.items():
            if active[k]:
                s_l[k] = sim.local_state(k)
                actions[k] = agent.act(s_l[k], eps_l, sim.local_mask(k, ranks))
        out = sim.step(a_g, actions)
        if learn:
            all_arrived = not any(sim.active())
            self.global_agent.remember(s_g, a_g, out.global_reward, sim.global_state(), all_arrived)
            self.global_agent.learn()
            for k in s_l:
                agent = self.local_agents[k]
                agent.remember(s_l[k], actions[k], out.local_rewards[k], sim.local_state(k), out.arrived_now[k])
                agent.learn()
            self.federation.maybe_round(step, self.local_agents)
        return out


class CentralizedPolicy:
    """One DQN over the joint RIS x (orientation, power)^K action space.

    Joint index ``j = ris + G * sum_k l_k * L**k`` with ``G`` RIS actions and
    ``L = 4 N_P`` local actions per robot.
    """

    def __init__(self, cfg: SimConfig, sim: Simulator, streams):
        k = cfg.fleet.num_robots
        self.g = sim.num_global_actions
        self.l = local_action_space_size(cfg.power.num_levels)
        size = centralized_action_space_size(cfg.power.num_levels, k, sim.ris.num_levels, sim.ris.num_subsurfaces)
        if size > cfg.run.action_space_cap:
            raise ActionSpaceTooLarge(size, cfg.run.action_space_cap)
        self.size = size
        j = np.arange(size)
        self.ris_of = j % self.g
        rest = j // self.g
        self.local_of = np.stack([(rest // self.l**i) % self.l for i in range(k)])
        self.level_of = self.local_of // 4 + 1
        self.train_cfg = cfg.train_config("central")
        self.agent = DQNAgent.create(3 * k, size, self.train_cfg, _rng(streams["central"]))

    def load(self, networks):
        self.agent.online = networks["central"].copy()
        self.agent.target = networks["central"].copy()

    def networks(self):
        return {"central": self.agent.online.copy()}

    def joint_mask(self, sim: Simulator) -> np.ndarray:
        rank1 = np.empty(self.g, dtype=int)
        n_users = 0
        for g in range(self.g):
            ranks = sim.ranks(g)
            n_users = len(ranks)
            rank1[g] = next(r for r, v in ranks.items() if v == 1) if ranks else 0
        if n_users <= 1:
            return np.ones(self.size, dtype=bool)
        robot = rank1[self.ris_of]
        return self.level_of[robot, np.arange(self.size)] >= n_users

    def play_slot(self, sim: Simulator, eps: float, _eps_l: float, learn: bool, step: int):
        s = sim.global_state()
        a = self.agent.act(s, eps, self.joint_mask(sim))
        out = sim.step(int(self.ris_of[a]), [int(x) for x in self.local_of[:, a]])
        if learn:
            reward = float(out.local_rewards[np.asarray(out.active)].sum()) + out.global_reward / 10.0
            self.agent.remember(s, a, reward, sim.global_state(), not any(sim.active()))
            self.agent.learn()
        return out


# -- run driver ----------------------------------------------------------------


def _episode(policy, sim, starts, dests, eps_g, eps_l, learn, step, writer, episode):
    sim.reset(starts, dests)
    history = [[] for _ in range(sim.k)]
    total = 0.0
    outages = 0
    while not sim.done:
        step += 1
        out = policy.play_slot(sim, eps_g, eps_l, learn, step)
        total += float(out.local_rewards[np.asarray(out.active)].sum()) + out.global_reward
        outages += 0 if out.feasible else 1
        for k in range(sim.k):
            if out.active[k]:
                history[k].append(float(out.rates[k]))
        if writer is not None:
            writer.slot(episode, out, [r.position for r in sim.robots], episode_objective(history, sim.cfg))
    objective = episode_objective(history, sim.cfg)
    return total, objective, sim.episode.slot, outages, step


def _run(cfg: SimConfig, out_dir=None, algorithm=None) -> RunResult:
    algorithm = algorithm or cfg.run.algorithm
    streams = _streams(cfg.run.seed)
    variant = "oma" if algorithm == "oma-fdrl" else "noma"
    sim = Simulator(cfg, _rng(streams["channel"]), variant=variant, qoe=algorithm == "qoe-fdrl")
    starts, dests = placements(cfg)
    policy = CentralizedPolicy(cfg, sim, streams) if algorithm == "central" else FederatedPolicy(cfg, sim, streams)
    result = RunResult(algorithm)
    out_dir = Path(out_dir) if out_dir is not None else None
    writer = eval_writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = MetricsWriter(out_dir / "metrics.csv")
        episodes_file = open(out_dir / "episodes.csv", "w", newline="")
        episodes_file.write(",".join(EPISODE_HEADER) + "\n")

    n_e = cfg.run.episodes
    if algorithm == "central":
        eps_cfg_g = eps_cfg_l = policy.train_cfg
    else:
        eps_cfg_g, eps_cfg_l = policy.global_cfg, policy.local_cfg
    step = 0
    try:
        for e in range(n_e):
            eps_g = epsilon_at(e, n_e, eps_cfg_g)
            eps_l = epsilon_at(e, n_e, eps_cfg_l)
            t0 = time.perf_counter()
            total, objective, steps, outages, step = _episode(
                policy, sim, starts, dests, eps_g, eps_l, True, step, writer, e + 1
            )
            result.episode_seconds.append(time.perf_counter() - t0)
            result.episode_rewards.append(total)
            result.episode_objectives.append(objective)
            result.episode_steps.append(steps)
            arrived = sum(r.arrived for r in sim.robots)
            if writer is not None:
                episodes_file.write(
                    ",".join(map(str, (e + 1, steps, repr(total), repr(objective), repr(eps_l), arrived, outages))) + "\n"
                )
            if (e + 1) % max(1, n_e // 10) == 0:
                log.info("%s episode %d/%d reward %.2f steps %d", algorithm, e + 1, n_e, total, steps)

        if out_dir is not None:
            eval_writer = MetricsWriter(out_dir / "eval.csv")
        evaluate(cfg, policy, sim, starts, dests, cfg.run.eval_episodes, _rng(streams["eval"]), result, eval_writer)
    finally:
        if writer is not None:
            writer.close()
            episodes_file.close()
        if eval_writer is not None:
            eval_writer.close()

    result.networks = policy.networks()
    k = cfg.fleet.num_robots
    ris = sim.ris
    result.summary = {
        "algorithm": algorithm,
        "seed": cfg.run.seed,
        "episodes": n_e,
        "eval_episodes": cfg.run.eval_episodes,
        "eval_objective": result.eval_objective,
        "eval_objectives": result.eval_objectives,
        "eval_rewards": result.eval_rewards,
        "final_training_reward": result.episode_rewards[-1],
        "objective_formula": OBJECTIVE_FORMULA,
        "action_space": {
            "global": global_action_space_size(ris.num_levels, ris.num_subsurfaces),
            "local": local_action_space_size(cfg.power.num_levels),
            "centralized": centralized_action_space_size(cfg.power.num_levels, k, ris.num_levels, ris.num_subsurfaces),
        },
        "federation_rounds": getattr(getattr(policy, "federation", None), "num_rounds", 0),
        "starts": [list(p) for p in starts],
        "destinations": [list(p) for p in dests],
        "resolved": resolved_summary(cfg),
    }
    if out_dir is not None:
        (out_dir / "summary.json").write_text(json.dumps(result.summary, indent=2) + "\n")
        (out_dir / "timing.json").write_text(
            json.dumps({"episode_seconds": result.episode_seconds, "total_seconds": sum(result.episode_seconds)}) + "\n"
        )
        (out_dir / "config.yaml").write_text(cfg.dump())
        ckpt.save_checkpoint(out_dir / "checkpoint.bin", result.networks, {"algorithm": algorithm, "seed": cfg.run.seed})
    return result


def evaluate(cfg, policy, sim, starts, dests, n, rng, result: RunResult, writer=None):
    """Greedy episodes on a dedicated channel stream; no learning."""
    train_rng = sim.rng
    sim.rng = rng
    try:
        for e in range(n):
            total, objective, _, _, _ = _episode(policy, sim, starts, dests, 0.0, 0.0, False, 0, writer, e + 1)
            result.eval_rewards.append(total)
            result.eval_objectives.append(objective)
    finally:
        sim.rng = train_rng
    return result


def run_fdrl(cfg: SimConfig, out_dir=None) -> RunResult:
    return _run(cfg, out_dir, "fdrl")


def run_centralized(cfg: SimConfig, out_dir=None) -> RunResult:
    return _run(cfg, out_dir, "central")


def run_variant(cfg: SimConfig, variant: str, out_dir=None) -> RunResult:
    tags = {"oma": "oma-fdrl", "qoe": "qoe-fdrl"}
    if variant not in tags:
        raise DomainError(f"variant must be 'oma' or 'qoe', got {variant!r}")
    return _run(cfg, out_dir, tags[variant])


def run(cfg: SimConfig, out_dir=None) -> RunResult:
    return _run(cfg, out_dir, cfg.run.algorithm)


def evaluate_checkpoint(cfg: SimConfig, path, n_episodes: int | None = None) -> RunResult:
    """Greedy evaluation of saved networks under ``cfg``.

    The checkpoint must hold every network the configured algorithm needs,
    with matching shapes; otherwise :class:`CheckpointError` is raised.
    """
    _, meta = ckpt.load_checkpoint(path)
    algorithm = meta.get("algorithm", cfg.run.algorithm)
    streams = _streams(cfg.run.seed)
    variant = "oma" if algorithm == "oma-fdrl" else "noma"
    sim = Simulator(cfg, _rng(streams["channel"]), variant=variant, qoe=algorithm == "qoe-fdrl")
    policy = CentralizedPolicy(cfg, sim, streams) if algorithm == "central" else FederatedPolicy(cfg, sim, streams)
    networks, _ = ckpt.load_checkpoint(path, expected=policy.networks())
    policy.load(networks)
    starts, dests = placements(cfg)
    result = RunResult(algorithm)
    n = cfg.run.eval_episodes if n_episodes is None else n_episodes
    evaluate(cfg, policy, sim, starts, dests, n, _rng(streams["eval"]), result)
    result.summary = {
        "algorithm": algorithm,
        "eval_objective": result.eval_objective,
        "eval_objectives": result.eval_objectives,
        "eval_rewards": result.eval_rewards,
    }
    if not all(math.isfinite(x) for x in result.eval_objectives):
        raise DomainError("evaluation produced a non-finite objective")
    return result
