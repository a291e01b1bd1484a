"""State/action encodings and rewards of the RIS agent and the robot agents.

The RIS (global) agent observes every robot's position and direct-link
strength and picks one quantized phase per sub-surface. Each robot (local)
agent observes its own slice of that state and picks an orientation plus a
discrete downlink power level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import RisConfig, quantized_phase_set
from .env import ORIENTATIONS, GridMap, RobotState
from .errors import DomainError

# Rate (bits/s/Hz) used to check that time cost dominates the rate bonus.
TYPICAL_MAX_RATE = 20.0


@dataclass(frozen=True)
class RewardConfig:
    tau1: float = 0.1
    phi: float = 0.05
    psi: float = 2.0
    r_time: float = -1.0
    r_goal: float = 100.0
    qoe_c1: float = 10.0
    qoe_c2: float = 0.0
    qoe_floor: float = -10.0

    def __post_init__(self):
        if self.r_time >= 0:
            raise DomainError("r_time must be negative")
        if self.r_goal < 0:
            raise DomainError("r_goal must be non-negative")
        if self.r_time + self.phi * TYPICAL_MAX_RATE > 0:
            raise DomainError(
                f"r_time + phi * {TYPICAL_MAX_RATE:g} must be <= 0 so robots do not wander"
            )


@dataclass(frozen=True)
class FeatureNorm:
    floor_db: float = -120.0
    ceil_db: float = -40.0

    def __post_init__(self):
        if self.floor_db >= self.ceil_db:
            raise DomainError("feature floor must lie below ceil")

    def scale(self, magnitude: float) -> float:
        db = 20.0 * math.log10(magnitude) if magnitude > 0 else -math.inf
        db = min(max(db, self.floor_db), self.ceil_db)
        return (db - self.floor_db) / (self.ceil_db - self.floor_db)


@dataclass(frozen=True)
class LocalAction:
    orientation: str
    power_level: int  # 1-based, power = P_max / 2**power_level


def encode_local_state(robot: RobotState, direct, grid: GridMap, norm: FeatureNorm = FeatureNorm()) -> np.ndarray:
    x, y = robot.position
    return np.array(
        [
            (x - grid.x_min) / (grid.x_max - grid.x_min),
            (y - grid.y_min) / (grid.y_max - grid.y_min),
            norm.scale(abs(direct)),
        ]
    )


def encode_global_state(robots, direct, grid: GridMap, norm: FeatureNorm = FeatureNorm()) -> np.ndarray:
    """Concatenated local states in robot order (length ``3K``)."""
    return np.concatenate([encode_local_state(r, d, grid, norm) for r, d in zip(robots, direct, strict=True)])


def global_action_space_size(num_levels: int, num_subsurfaces: int) -> int:
    return num_levels**num_subsurfaces


def local_action_space_size(num_power_levels: int) -> int:
    return 4 * num_power_levels


def joint_local_action_space_size(num_power_levels: int, k: int) -> int:
    return local_action_space_size(num_power_levels) ** k


def centralized_action_space_size(num_power_levels: int, k: int, num_levels: int, num_subsurfaces: int) -> int:
    return joint_local_action_space_size(num_power_levels, k) * global_action_space_size(num_levels, num_subsurfaces)


def global_action_digits(index: int, num_levels: int, num_subsurfaces: int) -> list[int]:
    """Base-``N_R`` digits of ``index``, most significant (sub-surface 1) first."""
    size = global_action_space_size(num_levels, num_subsurfaces)
    if not 0 <= index < size:
        raise DomainError(f"global action {index} outside [0, {size})")
    digits = []
    for _ in range(num_subsurfaces):
        index, d = divmod(index, num_levels)
        digits.append(d)
    return digits[::-1]


def encode_global_action(digits, num_levels: int) -> int:
    index = 0
    for d in digits:
        if not 0 <= d < num_levels:
            raise DomainError(f"phase digit {d} outside [0, {num_levels})")
        index = index * num_levels + int(d)
    return index


def decode_global_action(index: int, ris: RisConfig) -> np.ndarray:
    phases = quantized_phase_set(ris.resolution_bits)
    return phases[global_action_digits(index, ris.num_levels, ris.num_subsurfaces)]


def decode_local_action(index: int, num_power_levels: int) -> LocalAction:
    size = local_action_space_size(num_power_levels)
    if not 0 <= index < size:
        raise DomainError(f"local action {index} outside [0, {size})")
    level, o = divmod(index, 4)
    return LocalAction(ORIENTATIONS[o], level + 1)


def encode_local_action(action: LocalAction, num_power_levels: int) -> int:
    if not 1 <= action.power_level <= num_power_levels:
        raise DomainError("power level out of range")
    return (action.power_level - 1) * 4 + ORIENTATIONS.index(action.orientation)


def mask_power_actions(robot_rank: int, k: int, num_power_levels: int) -> np.ndarray:
    """Selectable local actions for the robot at ``robot_rank`` (1 = strongest).

    The strongest robot must use ``p < P_max / 2**(K-1)``, i.e. a level
    ``>= K``; every other robot is unrestricted.
    """
    mask = np.ones(local_action_space_size(num_power_levels), dtype=bool)
    if robot_rank == 1 and k > 1:
        levels = np.arange(local_action_space_size(num_power_levels)) // 4 + 1
        mask = levels >= k
    return mask


def global_reward(rates, tau1: float = 0.1) -> float:
    return tau1 * math.fsum(np.asarray(rates, dtype=float).ravel())


def local_reward(rate, d_prev, d_now, arrived_this_slot, slot_index, cfg: RewardConfig = RewardConfig()) -> float:
    """Rate bonus + guidance + time cost + arrival bonus for one robot.

    The guidance term ``d_prev - d_now`` is only defined from the second slot.
    """
    guidance = (d_prev - d_now) if slot_index >= 2 else 0.0
    goal = cfg.r_goal if arrived_this_slot else 0.0
    return cfg.phi * rate + cfg.psi * guidance + cfg.r_time + goal


def qoe_reward(rate, c1: float = 10.0, c2: float = 0.0, floor: float = -10.0) -> float:
    """``c1 * log10(rate) + c2``, clamped below at ``floor``.

    Non-positive rates (outage) map to ``floor``; the clamp keeps the utility
    non-decreasing in the rate.
    """
    if rate <= 0:
        return floor
    return max(c1 * math.log10(rate) + c2, floor)
