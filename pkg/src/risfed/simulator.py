"""Slot-level environment shared by every training algorithm.

Within one slot the order of events is fixed:

1. the channels of the current positions are already drawn;
2. the RIS phase configuration is chosen, which fixes the combined gains and
   therefore the NOMA decoding order of the active robots;
3. every active robot picks an orientation and a power level;
4. rates are computed on the current channels, robots move, rewards are
   assigned, and the next slot's channels are drawn at the new positions.

A slot is an outage (all rates zero) when the power budget is exceeded or,
under NOMA, when any SIC power gap falls below ``rho_min``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, sample_channels, subsurface_cascade
from .config import SimConfig
from .env import EpisodeState, RobotState, distance_to_destination, is_terminal, step_robot
from .errors import DomainError
from .mdp import (
    decode_global_action,
    decode_local_action,
    encode_global_state,
    encode_local_state,
    global_action_space_size,
    global_reward,
    local_reward,
    mask_power_actions,
    qoe_reward,
)
from .noma import decoding_order, noma_rates, oma_rates, power_level_set, sic_gaps

VARIANTS = ("noma", "oma")


@dataclass
class SlotOutcome:
    slot: int  # 1-based slot the actions were taken in
    ris_index: int
    active: list[bool]
    positions: list[tuple[float, float]]  # positions the rates were served at
    orientations: list[str | None]
    power_levels: list[int | None]
    powers: np.ndarray
    rates: np.ndarray
    utilities: np.ndarray  # what enters the rewards: rate, or QoE value
    feasible: bool
    local_rewards: np.ndarray
    global_reward: float
    arrived_now: list[bool]
    blocked: list[bool]
    done: bool


class Simulator:
    def __init__(self, cfg: SimConfig, rng: np.random.Generator, variant: str = "noma", qoe: bool = False):
        if variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}")
        self.cfg = cfg
        self.rng = rng
        self.variant = variant
        self.qoe = qoe
        self.grid = cfg.grid()
        self.ris = cfg.ris_config()
        self.channel_cfg = cfg.channel
        self.sigma2 = cfg.channel.noise_power_w
        self.power_cfg = cfg.power_config()
        self.levels = power_level_set(self.power_cfg)
        self.reward_cfg = cfg.reward_config()
        self.norm = cfg.feature_norm()
        self.t_max = cfg.fleet.t_max
        self.k = cfg.fleet.num_robots
        self.num_power_levels = cfg.power.num_levels
        self.num_global_actions = global_action_space_size(self.ris.num_levels, self.ris.num_subsurfaces)
        phases = np.stack([decode_global_action(i, self.ris) for i in range(self.num_global_actions)])
        self._phase_table = np.exp(1j * phases)  # (G, N)
        self.episode = EpisodeState()
        self.channels: ChannelRealization | None = None
        self._last_power = np.zeros(self.k)

    # -- episode lifecycle ---------------------------------------------------

    def reset(self, starts, destinations) -> None:
        robots = [
            RobotState.at_start(i, tuple(s), tuple(d), self.cfg.fleet.speed)
            for i, (s, d) in enumerate(zip(starts, destinations, strict=True))
        ]
        self.episode = EpisodeState(slot=0, robots=robots, done=False)
        self.episode.done = is_terminal(self.episode, self.t_max)
        self._last_power = np.zeros(self.k)
        self._draw_channels()

    def _draw_channels(self) -> None:
        self.channels = sample_channels(
            self.channel_cfg,
            [r.position for r in self.episode.robots],
            self.grid,
            self.ris.elements_per_side,
            self.rng,
        )
        self._cascade = subsurface_cascade(self.channels, self.ris.num_subsurfaces)

    @property
    def robots(self) -> list[RobotState]:
        return self.episode.robots

    @property
    def done(self) -> bool:
        return self.episode.done

    def active(self) -> list[bool]:
        return [not r.arrived for r in self.robots]

    # -- observations ----------------------------------------------------------

    def global_state(self) -> np.ndarray:
        return encode_global_state(self.robots, self.channels.direct, self.grid, self.norm)

    def local_state(self, k: int) -> np.ndarray:
        return encode_local_state(self.robots[k], self.channels.direct[k], self.grid, self.norm)

    def gains_for(self, ris_index: int) -> np.ndarray:
        """``|h_k|**2`` of every robot under RIS action ``ris_index``."""
        h = self._cascade @ self._phase_table[ris_index] + self.channels.direct
        return np.abs(h) ** 2

    def _users(self) -> list[int]:
        if self.cfg.fleet.remove_arrived:
            return [k for k, a in enumerate(self.active()) if a]
        return list(range(self.k))

    def ranks(self, ris_index: int) -> dict[int, int]:
        """1-based decoding rank of every robot in the NOMA user set."""
        users = self._users()
        gains = self.gains_for(ris_index)[users]
        order = decoding_order(gains)
        return {users[j]: rank + 1 for rank, j in enumerate(order)}

    def local_mask(self, k: int, ranks: dict[int, int]) -> np.ndarray:
        return mask_power_actions(ranks[k], len(ranks), self.num_power_levels)

    # -- dynamics --------------------------------------------------------------

    def step(self, ris_index: int, local_actions) -> SlotOutcome:
        """Advance one slot; ``local_actions[k]`` is ignored for arrived robots."""
        if self.episode.done:
            raise DomainError("episode already finished")
        active = self.active()
        users = self._users()
        gains = self.gains_for(ris_index)
        orient: list[str | None] = [None] * self.k
        levels: list[int | None] = [None] * self.k
        powers = self._last_power.copy()
        for k in range(self.k):
            if active[k]:
                a = decode_local_action(int(local_actions[k]), self.num_power_levels)
                orient[k], levels[k] = a.orientation, a.power_level
                powers[k] = self.levels[a.power_level - 1]
            elif self.cfg.fleet.remove_arrived:
                powers[k] = 0.0
        self._last_power = powers.copy()

        rates = np.zeros(self.k)
        feasible = bool(powers[users].sum() <= self.power_cfg.p_max * (1.0 + 1e-12))
        if users and self.variant == "noma":
            order = [users[j] for j in decoding_order(gains[users])]
            if feasible:
                gaps = sic_gaps(gains[order], powers[order])
                feasible = bool(np.all(gaps >= self.power_cfg.rho_min))
            if feasible:
                rates[order] = noma_rates(gains[order], powers[order], self.sigma2)
        elif users:
            if feasible:
                rates[users] = oma_rates(gains[users], powers[users], self.sigma2, len(users))
        rates[~np.asarray(active)] = 0.0

        if self.qoe:
            rc = self.reward_cfg
            utilities = np.array([qoe_reward(r, rc.qoe_c1, rc.qoe_c2, rc.qoe_floor) for r in rates])
        else:
            utilities = rates.copy()

        positions = [r.position for r in self.robots]
        slot = self.episode.slot + 1
        new_robots = list(self.robots)
        local_r = np.zeros(self.k)
        arrived_now = [False] * self.k
        blocked = [False] * self.k
        for k in range(self.k):
            if not active[k]:
                continue
            robot = self.robots[k]
            d_prev = distance_to_destination(robot)
            moved, blocked[k] = step_robot(robot, orient[k], self.grid)
            arrived_now[k] = moved.arrived
            local_r[k] = local_reward(
                utilities[k], d_prev, distance_to_destination(moved), moved.arrived, slot + 1, self.reward_cfg
            )
            new_robots[k] = moved
        g_reward = global_reward(utilities[np.asarray(active)], self.reward_cfg.tau1)

        self.episode = EpisodeState(slot=slot, robots=new_robots, done=False)
        self.episode.done = is_terminal(self.episode, self.t_max)
        self._draw_channels()
        return SlotOutcome(
            slot=slot,
            ris_index=ris_index,
            active=active,
            positions=positions,
            orientations=orient,
            power_levels=levels,
            powers=powers,
            rates=rates,
            utilities=utilities,
            feasible=feasible,
            local_rewards=local_r,
            global_reward=g_reward,
            arrived_now=arrived_now,
            blocked=blocked,
            done=self.episode.done,
        )
