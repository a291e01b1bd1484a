"""Per-slot channel generation and RIS-combined channel gains.

Link model
----------
- Direct AP -> robot: Rayleigh fading, log-distance pathloss with its own
  exponent, plus a fixed penetration loss for every wall the 2D AP -> robot
  segment crosses.
- AP -> RIS and RIS -> robot: Rician fading whose LoS part is the response
  of a uniform planar array with half-wavelength spacing.

The combined coefficient of robot ``k`` is ``sum_m h[k, m] e^{j theta_m} g[m]
+ direct[k]`` where ``theta_m`` is the phase of the sub-surface owning
element ``m``. Sub-surfaces are contiguous blocks of ``M / N`` elements, in
row-major element order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import GridMap, count_walls_crossed
from .errors import DomainError

TWO_PI = 2.0 * math.pi


def quantized_phase_set(resolution_bits: int) -> np.ndarray:
    """Odd half-multiples of ``2*pi / 2**b``, ascending in ``[0, 2*pi)``."""
    if int(resolution_bits) != resolution_bits or resolution_bits < 1:
        raise DomainError("resolution_bits must be an integer >= 1")
    levels = 2 ** int(resolution_bits)
    step = TWO_PI / levels
    return (2.0 * np.arange(1, levels + 1) - 1.0) / 2.0 * step


@dataclass
class RisConfig:
    elements_per_side: int
    num_subsurfaces: int = 1
    resolution_bits: int = 2
    phases: np.ndarray | None = None

    def __post_init__(self):
        if self.elements_per_side < 0 or self.num_subsurfaces < 1:
            raise DomainError("RIS dimensions must be non-negative with N >= 1")
        m = self.num_elements
        if m and m % self.num_subsurfaces:
            raise DomainError(f"N={self.num_subsurfaces} does not divide M={m}")
        allowed = quantized_phase_set(self.resolution_bits)
        if self.phases is None:
            self.phases = np.full(self.num_subsurfaces, allowed[0])
        self.phases = np.asarray(self.phases, dtype=float)
        if self.phases.shape != (self.num_subsurfaces,):
            raise DomainError("need exactly one phase per sub-surface")
        dist = np.abs(self.phases[:, None] - allowed[None, :]).min(axis=1)
        if np.any(dist > 1e-12):
            raise DomainError("phase outside the quantized set")

    @property
    def num_elements(self) -> int:
        return self.elements_per_side**2

    @property
    def num_levels(self) -> int:
        return 2**self.resolution_bits

    def element_phases(self) -> np.ndarray:
        """Per-element phases (the ``theta (x) 1`` expansion)."""
        return np.repeat(self.phases, self.num_elements // self.num_subsurfaces)

    def with_phases(self, phases) -> "RisConfig":
        return RisConfig(self.elements_per_side, self.num_subsurfaces, self.resolution_bits, phases)


@dataclass
class ChannelModelConfig:
    pathloss_exponent_direct: float = 3.5
    pathloss_exponent_ris: float = 2.2
    reference_loss_db_at_1m: float = 30.0
    rician_k_factor_db: float = 3.0
    wall_penetration_loss_db: float = 10.0
    noise_psd_dbm_per_hz: float = -100.0
    bandwidth_hz: float = 10e6

    def __post_init__(self):
        for name in ("pathloss_exponent_direct", "pathloss_exponent_ris"):
            if getattr(self, name) < 1.8:
                raise DomainError(f"{name} must be >= 1.8")
        if self.bandwidth_hz <= 0:
            raise DomainError("bandwidth_hz must be positive")
        if self.wall_penetration_loss_db < 0:
            raise DomainError("wall_penetration_loss_db must be >= 0")

    @property
    def rician_k_factor(self) -> float:
        return 10.0 ** (self.rician_k_factor_db / 10.0)

    @property
    def noise_power_w(self) -> float:
        dbm = self.noise_psd_dbm_per_hz + 10.0 * math.log10(self.bandwidth_hz)
        return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class ChannelRealization:
    direct: np.ndarray  # (K,) complex
    ris_to_robot: np.ndarray  # (K, M) complex
    ap_to_ris: np.ndarray  # (M,) complex
    walls_crossed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def num_robots(self) -> int:
        return self.direct.shape[0]

    @property
    def num_elements(self) -> int:
        return self.ap_to_ris.shape[0]


def pathloss_gain(distance: float, exponent: float, reference_loss_db: float) -> float:
    """Linear power gain of the log-distance model; distances clamp at 1 m."""
    d = max(float(distance), 1.0)
    return 10.0 ** (-(reference_loss_db + 10.0 * exponent * math.log10(d)) / 10.0)


def ris_axes(grid: GridMap) -> tuple[np.ndarray, np.ndarray]:
    """In-plane unit vectors of the RIS, inferred from the wall it sits on.

    RIS on a vertical wall ``x = const`` spans (y, z); on ``y = const`` it
    spans (x, z). Interior placements default to the (y, z) plane.
    """
    x, y, _ = grid.ris_position
    ey, ex, ez = np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    on_x_wall = math.isclose(x, grid.x_min) or math.isclose(x, grid.x_max)
    on_y_wall = math.isclose(y, grid.y_min) or math.isclose(y, grid.y_max)
    if on_y_wall and not on_x_wall:
        return ex, ez
    return ey, ez


def upa_response(direction: np.ndarray, elements_per_side: int, axes) -> np.ndarray:
    """Unit-modulus planar-array response toward ``direction`` (row-major)."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    c1, c2 = float(u @ axes[0]), float(u @ axes[1])
    idx = np.arange(elements_per_side)
    phase = math.pi * (idx[:, None] * c1 + idx[None, :] * c2)
    return np.exp(1j * phase).ravel()


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


def _rician(los: np.ndarray, k_factor: float, scatter: np.ndarray) -> np.ndarray:
    if math.isinf(k_factor):
        return los.astype(complex)
    return math.sqrt(k_factor / (k_factor + 1.0)) * los + math.sqrt(1.0 / (k_factor + 1.0)) * scatter


def sample_channels(
    cfg: ChannelModelConfig,
    positions: Sequence[Sequence[float]],
    grid: GridMap,
    elements_per_side: int,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw one block-fading realization for robots at ``positions`` (height 0).

    Random draws happen in a fixed order (AP->RIS scatter, then per robot the
    direct and RIS->robot scatter), so the result is a pure function of the
    generator state, the positions and the config.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    for p in pos:
        if not grid.contains(p):
            raise DomainError(f"robot position {tuple(p)} outside map")
    k_rob = pos.shape[0]
    m = elements_per_side**2
    ap = np.asarray(grid.ap_position, dtype=float)
    ris = np.asarray(grid.ris_position, dtype=float)
    axes = ris_axes(grid)
    kf = cfg.rician_k_factor

    g = np.zeros(m, dtype=complex)
    if m:
        beta = pathloss_gain(np.linalg.norm(ap - ris), cfg.pathloss_exponent_ris, cfg.reference_loss_db_at_1m)
        los = upa_response(ap - ris, elements_per_side, axes)
        g = math.sqrt(beta) * _rician(los, kf, _cn(rng, m))

    direct = np.empty(k_rob, dtype=complex)
    h = np.zeros((k_rob, m), dtype=complex)
    walls = np.zeros(k_rob, dtype=int)
    for k, (x, y) in enumerate(pos):
        robot = np.array([x, y, 0.0])
        walls[k] = count_walls_crossed(ap[:2], (x, y), grid.walls)
        beta_d = pathloss_gain(np.linalg.norm(ap - robot), cfg.pathloss_exponent_direct, cfg.reference_loss_db_at_1m)
        beta_d *= 10.0 ** (-walls[k] * cfg.wall_penetration_loss_db / 10.0)
        direct[k] = math.sqrt(beta_d) * _cn(rng, 1)[0]
        if m:
            beta_r = pathloss_gain(np.linalg.norm(robot - ris), cfg.pathloss_exponent_ris, cfg.reference_loss_db_at_1m)
            los = upa_response(robot - ris, elements_per_side, axes)
            h[k] = math.sqrt(beta_r) * _rician(los, kf, _cn(rng, m))
    return ChannelRealization(direct=direct, ris_to_robot=h, ap_to_ris=g, walls_crossed=walls)


def combined_channel(re: ChannelRealization, ris: RisConfig) -> np.ndarray:
    """Combined complex coefficient per robot under the RIS phase assignment."""
    if re.ris_to_robot.shape[1] != ris.num_elements or re.ap_to_ris.shape[0] != ris.num_elements:
        raise DomainError(
            f"channel has {re.ap_to_ris.shape[0]} RIS elements, configuration has {ris.num_elements}"
        )
    return combine(re.direct, re.ris_to_robot, re.ap_to_ris, ris.element_phases())


def combine(direct, ris_to_robot, ap_to_ris, element_phases) -> np.ndarray:
    """``h @ (e^{j theta} * g) + direct`` for arbitrary per-element phases."""
    h = np.atleast_2d(np.asarray(ris_to_robot, dtype=complex))
    g = np.asarray(ap_to_ris, dtype=complex)
    theta = np.asarray(element_phases, dtype=float)
    if h.shape[1] != g.shape[0] or theta.shape != g.shape:
        raise DomainError("element counts of h, g and phases differ")
    return h @ (np.exp(1j * theta) * g) + np.asarray(direct, dtype=complex)


def subsurface_cascade(re: ChannelRealization, num_subsurfaces: int) -> np.ndarray:
    """Per-sub-surface cascaded gains ``c[k, n] = sum_{m in n} h[k, m] g[m]``."""
    m = re.num_elements
    if m == 0:
        return np.zeros((re.num_robots, num_subsurfaces), dtype=complex)
    if m % num_subsurfaces:
        raise DomainError(f"N={num_subsurfaces} does not divide M={m}")
    prod = re.ris_to_robot * re.ap_to_ris[None, :]
    return prod.reshape(re.num_robots, num_subsurfaces, m // num_subsurfaces).sum(axis=2)
