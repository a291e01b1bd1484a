"""CSV metrics stream and offline recomputation of the objective.

``metrics.csv`` (training) and ``eval.csv`` (greedy evaluation) share one
fixed header, one row per (episode, slot, acting robot). Floats are written
with ``repr`` so values round-trip exactly.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .noma import EnergyModel, energy_efficiency, motion_energy

HEADER = (
    "episode",
    "slot",
    "robot",
    "x",
    "y",
    "next_x",
    "next_y",
    "orientation",
    "power_level",
    "power_w",
    "rate",
    "utility",
    "local_reward",
    "ris_action",
    "sic_feasible",
    "global_reward",
    "objective",
)
HEADER_LINE = ",".join(HEADER)

EPISODE_HEADER = ("episode", "steps", "total_reward", "objective", "epsilon", "arrived", "outage_slots")


def _f(x) -> str:
    return repr(float(x))


def episode_objective(history, cfg) -> float:
    """Objective over the slots seen so far; robots with no slot are skipped."""
    model = cfg.energy_model()
    rates, energies, slots = [], [], []
    for h in history:
        if h:
            rates.append(h)
            energies.append(motion_energy(model, len(h)))
            slots.append(len(h))
    if not rates:
        return 0.0
    return energy_efficiency(rates, energies, slots)


class MetricsWriter:
    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(HEADER_LINE + "\n")

    def slot(self, episode: int, out, next_positions, objective: float) -> None:
        for k, active in enumerate(out.active):
            if not active:
                continue
            x, y = out.positions[k]
            nx, ny = next_positions[k]
            row = (
                str(episode),
                str(out.slot),
                str(k),
                _f(x),
                _f(y),
                _f(nx),
                _f(ny),
                out.orientations[k],
                str(out.power_levels[k]),
                _f(out.powers[k]),
                _f(out.rates[k]),
                _f(out.utilities[k]),
                _f(out.local_rewards[k]),
                str(out.ris_index),
                "1" if out.feasible else "0",
                _f(out.global_reward),
                _f(objective),
            )
            self._fh.write(",".join(row) + "\n")

    def close(self) -> None:
        self._fh.close()


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def recompute_objectives(path, energy: EnergyModel) -> dict[int, float]:
    """Per-episode objective rebuilt from raw per-slot rates in a metrics CSV."""
    per_episode: dict[int, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in read_metrics(path):
        per_episode[int(row["episode"])][int(row["robot"])].append(float(row["rate"]))
    out = {}
    for ep, robots in sorted(per_episode.items()):
        rates = [robots[k] for k in sorted(robots)]
        slots = [len(r) for r in rates]
        energies = [motion_energy(energy, t) for t in slots]
        out[ep] = energy_efficiency(rates, energies, slots)
    return out


def read_episodes(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- learning-curve statistics ---------------------------------------------------


def moving_average(values, window: int = 50) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what is available."""
    x = np.asarray(values, dtype=float)
    c = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def relative_improvement(rewards, window: int = 50) -> tuple[float, float, float]:
    """``(first, final, gain)`` for a reward curve split into thirds.

    ``first`` is the mean reward over the first third, ``final`` the mean of
    the ``window``-episode moving average over the last third, and ``gain``
    their difference relative to ``|first|``.
    """
    r = np.asarray(rewards, dtype=float)
    third = len(r) // 3
    if third < 1:
        raise ValueError("need at least three episodes")
    first = float(r[:third].mean())
    final = float(moving_average(r, window)[len(r) - third :].mean())
    return first, final, (final - first) / abs(first) if first else math.inf


def time_to_plateau_fraction(rewards, seconds, fraction: float = 0.9, window: int = 50) -> float:
    """Wall-clock until the moving average covers ``fraction`` of its rise.

    The rise runs from the first full-window average to the plateau, taken
    as the mean moving average over the last ``window`` episodes. A curve
    that never rises is at its plateau from the first full window.
    """
    ma = moving_average(rewards, window)
    elapsed = np.cumsum(np.asarray(seconds, dtype=float))
    if len(ma) < window:
        raise ValueError(f"need at least {window} episodes")
    start = ma[window - 1]
    plateau = float(ma[-window:].mean())
    if plateau <= start:
        return float(elapsed[window - 1])
    target = start + fraction * (plateau - start)
    hit = window - 1 + int(np.argmax(ma[window - 1 :] >= target))
    return float(elapsed[hit])
