"""Downlink NOMA rates, SIC feasibility, OMA rates and motion energy.

Ordered lists follow the decoding order: position 0 holds the robot with the
strongest combined channel. All gains are ``|h|**2`` in linear units and all
powers are Watts; rates are in bits/s/Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PowerConfig:
    p_max: float  # Watts
    num_levels: int = 6
    rho_min: float = 1e-6  # Watts

    def __post_init__(self):
        if self.p_max <= 0 or self.rho_min <= 0:
            raise DomainError("p_max and rho_min must be positive")
        if self.num_levels < 1:
            raise DomainError("num_levels must be >= 1")


@dataclass(frozen=True)
class EnergyModel:
    e1: float = 7.4
    e2: float = 0.29
    speed: float = 0.5

    def __post_init__(self):
        if min(self.e1, self.e2, self.speed) <= 0:
            raise DomainError("energy constants and speed must be positive")


def power_level_set(cfg: PowerConfig) -> np.ndarray:
    """``P_max / 2**i`` for ``i = 1..N_P``, descending."""
    return cfg.p_max / 2.0 ** np.arange(1, cfg.num_levels + 1)


def decoding_order(gains) -> np.ndarray:
    """Indices by descending gain; equal gains keep ascending index order."""
    g = np.asarray(gains, dtype=float)
    return np.argsort(-g, kind="stable")


def sic_gaps(gains_ordered, powers_ordered) -> np.ndarray:
    """Power gaps ``Delta_k`` for ``k = 2..K`` (empty for a single robot).

    ``Delta_k = (p_k - sum_{i<k} p_i) * |h_{k-1}|**2``.
    """
    g = np.asarray(gains_ordered, dtype=float)
    p = np.asarray(powers_ordered, dtype=float)
    if g.shape != p.shape:
        raise DomainError("gains and powers must have equal length")
    before = np.cumsum(p)[:-1]
    return p[1:] * g[:-1] - before * g[:-1]


def sic_feasible(gaps, rho_min: float) -> bool:
    return bool(np.all(np.asarray(gaps) >= rho_min))


def noma_rates(gains_ordered, powers_ordered, sigma2: float) -> np.ndarray:
    """Achievable rates after SIC; robot ``k`` sees the stronger robots' power."""
    if sigma2 <= 0:
        raise DomainError("sigma2 must be positive")
    g = np.asarray(gains_ordered, dtype=float)
    p = np.asarray(powers_ordered, dtype=float)
    interf = np.concatenate(([0.0], np.cumsum(p)[:-1]))
    return np.log2(1.0 + g * p / (g * interf + sigma2))


def oma_rates(gains, powers, sigma2: float, k: int) -> np.ndarray:
    """Equal-bandwidth orthogonal access: ``(1/K) log2(1 + K |h|^2 p / sigma2)``."""
    if sigma2 <= 0 or k < 1:
        raise DomainError("need sigma2 > 0 and K >= 1")
    g = np.asarray(gains, dtype=float)
    p = np.asarray(powers, dtype=float)
    return (1.0 / k) * np.log2(1.0 + g * p / (sigma2 / k))


def motion_energy(model: EnergyModel, travel_slots: int) -> float:
    if travel_slots < 0:
        raise DomainError("travel_slots must be >= 0")
    return model.e1 * travel_slots * model.speed + model.e2 * travel_slots


def energy_efficiency(rate_history, energies, travel_slots) -> float:
    """Sum over robots of time-averaged rate divided by motion energy.

    ``rate_history[k]`` holds robot ``k``'s per-slot rates up to its arrival;
    only the first ``travel_slots[k]`` entries count.
    """
    total = 0.0
    for rates, energy, t_k in zip(rate_history, energies, travel_slots, strict=True):
        if energy <= 0:
            raise DomainError("motion energy must be positive")
        if t_k <= 0:
            raise DomainError("travel_slots must be positive")
        r = np.asarray(rates, dtype=float)[:t_k]
        total += math.fsum(r) / t_k / energy
    return total
