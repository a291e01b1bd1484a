"""Grid-world geometry, robot kinematics and episode bookkeeping.

Positions are 2D cell centres in meters. One time slot is one grid move, so
the slot duration is ``cell_size / speed``. Walls are axis-aligned rectangles
``(x0, y0, x1, y1)``; a zero-width rectangle is a thin wall segment. Walls
block motion and attenuate the direct AP link (see :mod:`risfed.channel`).
Robots do not collide with each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DomainError

ORIENTATIONS = ("n", "s", "e", "w")
_MOVES = {"n": (0.0, 1.0), "s": (0.0, -1.0), "e": (1.0, 0.0), "w": (-1.0, 0.0)}

Point = tuple[float, float]
Rect = tuple[float, float, float, float]


@dataclass(frozen=True)
class GridMap:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cell_size: float
    walls: tuple[Rect, ...] = ()
    ap_position: tuple[float, float, float] = (15.0, 30.0, 2.0)
    ris_position: tuple[float, float, float] = (30.0, 7.5, 2.0)

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DomainError("map bounds must satisfy min < max")
        if self.cell_size <= 0:
            raise DomainError("cell_size must be positive")
        for span in (self.x_max - self.x_min, self.y_max - self.y_min):
            ratio = span / self.cell_size
            if abs(ratio - round(ratio)) > 1e-9:
                raise DomainError("map extent must be an integer multiple of cell_size")
        walls = tuple(_normalize_rect(w) for w in self.walls)
        object.__setattr__(self, "walls", walls)
        for name in ("ap_position", "ris_position"):
            x, y, _ = getattr(self, name)
            if not (self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max):
                raise DomainError(f"{name} lies outside the map")

    @property
    def n_cols(self) -> int:
        return int(round((self.x_max - self.x_min) / self.cell_size))

    @property
    def n_rows(self) -> int:
        return int(round((self.y_max - self.y_min) / self.cell_size))

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)

    def contains(self, p: Sequence[float]) -> bool:
        return self.x_min <= p[0] <= self.x_max and self.y_min <= p[1] <= self.y_max

    def cell_center(self, col: int, row: int) -> Point:
        h = self.cell_size
        return (self.x_min + (col + 0.5) * h, self.y_min + (row + 0.5) * h)

    def cell_index(self, p: Sequence[float]) -> tuple[int, int]:
        if not self.contains(p):
            raise DomainError(f"point {tuple(p)} outside map bounds")
        col = min(int(math.floor((p[0] - self.x_min) / self.cell_size)), self.n_cols - 1)
        row = min(int(math.floor((p[1] - self.y_min) / self.cell_size)), self.n_rows - 1)
        return col, row

    def free_cells(self) -> list[Point]:
        """Cell centres not lying inside any wall rectangle."""
        cells = []
        for row in range(self.n_rows):
            for col in range(self.n_cols):
                c = self.cell_center(col, row)
                if not any(_point_in_rect(c, w) for w in self.walls):
                    cells.append(c)
        return cells


def _normalize_rect(r) -> Rect:
    x0, y0, x1, y1 = (float(v) for v in r)
    return (min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))


def _point_in_rect(p, r: Rect) -> bool:
    return r[0] <= p[0] <= r[2] and r[1] <= p[1] <= r[3]


def segment_hits_rect(p0, p1, rect: Rect) -> bool:
    """Liang-Barsky clip of segment ``p0 -> p1`` against a closed rectangle."""
    x0, y0 = p0[0], p0[1]
    dx, dy = p1[0] - x0, p1[1] - y0
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-dx, x0 - rect[0]),
        (dx, rect[2] - x0),
        (-dy, y0 - rect[1]),
        (dy, rect[3] - y0),
    ):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return False
            t0 = max(t0, t)
        else:
            if t < t0:
                return False
            t1 = min(t1, t)
    return t0 <= t1


def count_walls_crossed(p0, p1, walls: Sequence[Rect]) -> int:
    return sum(1 for w in walls if segment_hits_rect(p0, p1, w))


def snap_to_grid(p: Sequence[float], grid: GridMap) -> Point:
    """Centre of the grid cell containing ``p``; idempotent on centres."""
    return grid.cell_center(*grid.cell_index(p))


@dataclass(frozen=True)
class RobotState:
    id: int
    position: Point
    start: Point
    destination: Point
    speed: float = 0.5
    arrived: bool = False
    elapsed_slots: int = 0
    travel_slots: int = 0

    @classmethod
    def at_start(cls, id: int, start: Point, destination: Point, speed: float = 0.5):
        start, destination = tuple(map(float, start)), tuple(map(float, destination))
        return cls(
            id=id,
            position=start,
            start=start,
            destination=destination,
            speed=speed,
            arrived=_same_point(start, destination),
        )


def _same_point(a, b, tol=1e-9) -> bool:
    return abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol


def step_robot(robot: RobotState, orientation: str, grid: GridMap) -> tuple[RobotState, bool]:
    """Move one cell in ``orientation``; returns ``(new_state, blocked)``.

    Leaving the map or crossing a wall leaves the position unchanged, but the
    slot is still consumed.
    """
    if robot.arrived:
        raise DomainError(f"robot {robot.id} has already arrived")
    try:
        ux, uy = _MOVES[orientation]
    except KeyError:
        raise DomainError(f"unknown orientation {orientation!r}") from None
    x, y = robot.position
    target = (x + ux * grid.cell_size, y + uy * grid.cell_size)
    blocked = not grid.contains(target) or any(
        segment_hits_rect(robot.position, target, w) for w in grid.walls
    )
    if blocked:
        target = robot.position
    else:
        # Re-snap so repeated moves never accumulate floating drift.
        target = snap_to_grid(target, grid)
    elapsed = robot.elapsed_slots + 1
    arrived = _same_point(target, robot.destination)
    if arrived:
        target = robot.destination
    return (
        replace(
            robot,
            position=target,
            elapsed_slots=elapsed,
            arrived=arrived,
            travel_slots=elapsed,
        ),
        blocked,
    )


def distance_to_destination(robot: RobotState) -> float:
    if robot.arrived:
        return 0.0
    return math.hypot(robot.position[0] - robot.destination[0], robot.position[1] - robot.destination[1])


@dataclass
class EpisodeState:
    slot: int = 0
    robots: list[RobotState] = field(default_factory=list)
    done: bool = False


def is_terminal(episode: EpisodeState, t_max: int) -> bool:
    return all(r.arrived for r in episode.robots) or episode.slot >= t_max


def random_placements(grid: GridMap, k: int, rng: np.random.Generator) -> tuple[list[Point], list[Point]]:
    """Seeded start/destination draw over wall-free cells; each pair distinct."""
    cells = grid.free_cells()
    if len(cells) < 2:
        raise DomainError("map has fewer than two free cells")
    starts, dests = [], []
    for _ in range(k):
        i, j = rng.choice(len(cells), size=2, replace=False)
        starts.append(cells[int(i)])
        dests.append(cells[int(j)])
    return starts, dests
