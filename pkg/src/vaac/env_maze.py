"""Continuous 4-room maze and visit-count bookkeeping.

Layout: a vertical wall at ``x = size/2`` and a horizontal wall at ``y = size/2``,
each split into two half-walls with one doorway apiece. Rooms are numbered

    1 | 3          room 0: x < size/2, y < size/2 (start room)
    --+--          room 1: x < size/2, y > size/2
    0 | 2          room 2: x > size/2, y < size/2
                   room 3: x > size/2, y > size/2
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn_core import ConfigurationError

REWARD_MODES = ("none", "sparse_goal")


@dataclass
class MazeConfig:
    size: float = 100.0
    wall_thickness: float = 1.0
    doorway_width: float = 4.0
    # (vertical wall lower half, vertical wall upper half,
    #  horizontal wall left half, horizontal wall right half)
    doorway_centers: tuple[float, float, float, float] = (25.0, 75.0, 25.0, 75.0)
    episode_length: int = 1000
    start: tuple[float, float] = (1.0, 1.0)
    reward_mode: str = "none"
    goal_region: tuple[float, float, float, float] | None = None  # (x0, y0, x1, y1)

    def __post_init__(self):
        self.doorway_centers = tuple(float(c) for c in self.doorway_centers)
        self.start = tuple(float(c) for c in self.start)
        if self.reward_mode not in REWARD_MODES:
            raise ConfigurationError(f"maze.reward_mode must be one of {REWARD_MODES}")
        if self.goal_region is None and self.reward_mode == "sparse_goal":
            s = self.size
            self.goal_region = (s - 5.0, s - 5.0, s, s)
        if self.goal_region is not None:
            self.goal_region = tuple(float(c) for c in self.goal_region)
        self.validate()

    def validate(self) -> None:
        half = self.size / 2
        if not 0 < self.doorway_width < half:
            raise ConfigurationError("maze.doorway_width must lie in (0, size/2)")
        if len(self.doorway_centers) != 4:
            raise ConfigurationError("maze.doorway_centers needs four values")
        lo_half = (0.0, half - self.wall_thickness / 2)
        hi_half = (half + self.wall_thickness / 2, self.size)
        for c, (lo, hi) in zip(self.doorway_centers, (lo_half, hi_half, lo_half, hi_half)):
            if not (lo < c - self.doorway_width / 2 and c + self.doorway_width / 2 < hi):
                raise ConfigurationError(f"maze doorway centred at {c} is not inside its half-wall")
        if self.episode_length < 1:
            raise ConfigurationError("maze.episode_length must be >= 1")
        if point_in_wall(self, *self.start) or not _inside(self, *self.start):
            raise ConfigurationError(f"maze.start {self.start} lies in a wall or outside the arena")

    @property
    def grid_size(self) -> int:
        return int(math.ceil(self.size))


@dataclass
class EnvState:
    position: np.ndarray
    steps_in_episode: int = 0


def wall_boxes(config: MazeConfig) -> list[tuple[float, float, float, float]]:
    """Wall material as closed boxes ``(x0, y0, x1, y1)``, doorways excluded."""
    s, half = config.size, config.size / 2
    t, w = config.wall_thickness / 2, config.doorway_width / 2
    c_lo_v, c_hi_v, c_lo_h, c_hi_h = config.doorway_centers
    boxes = []
    # vertical wall, split by its two doorways
    for y0, y1 in ((0.0, c_lo_v - w), (c_lo_v + w, c_hi_v - w), (c_hi_v + w, s)):
        boxes.append((half - t, y0, half + t, y1))
    for x0, x1 in ((0.0, c_lo_h - w), (c_lo_h + w, c_hi_h - w), (c_hi_h + w, s)):
        boxes.append((x0, half - t, x1, half + t))
    return boxes


def point_in_wall(config: MazeConfig, x: float, y: float) -> bool:
    return any(x0 <= x <= x1 and y0 <= y <= y1 for x0, y0, x1, y1 in wall_boxes(config))


def _inside(config: MazeConfig, x: float, y: float) -> bool:
    return 0.0 <= x <= config.size and 0.0 <= y <= config.size


def room_of(config: MazeConfig, x: float, y: float) -> int:
    half = config.size / 2
    return int(x > half) * 2 + int(y > half)


class Maze:
    """Deterministic maze dynamics with axis-separated sliding collisions."""

    def __init__(self, config: MazeConfig | None = None):
        self.config = config or MazeConfig()
        self._boxes = wall_boxes(self.config)

    def _blocked(self, x0: float, y0: float, x1: float, y1: float) -> bool:
        """Does the axis-aligned segment (x0, y0) -> (x1, y1) leave the arena or touch a wall?"""
        if not _inside(self.config, x1, y1):
            return True
        lo_x, hi_x = min(x0, x1), max(x0, x1)
        lo_y, hi_y = min(y0, y1), max(y0, y1)
        for bx0, by0, bx1, by1 in self._boxes:
            if lo_x <= bx1 and hi_x >= bx0 and lo_y <= by1 and hi_y >= by0:
                return True
        return False

    def reset(self) -> EnvState:
        return EnvState(np.array(self.config.start, dtype=np.float64), 0)

    def step(self, state: EnvState, action) -> tuple[EnvState, float, bool]:
        dx, dy = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        x, y = float(state.position[0]), float(state.position[1])
        if not self._blocked(x, y, x + dx, y):
            x = x + dx
        if not self._blocked(x, y, x, y + dy):
            y = y + dy
        new = EnvState(np.array([x, y]), state.steps_in_episode + 1)
        reward = 0.0
        if self.config.reward_mode == "sparse_goal":
            gx0, gy0, gx1, gy1 = self.config.goal_region
            reward = float(gx0 <= x <= gx1 and gy0 <= y <= gy1)
        done = new.steps_in_episode == self.config.episode_length
        return new, reward, done


def reset(config: MazeConfig) -> EnvState:
    return Maze(config).reset()


def step(config: MazeConfig, state: EnvState, action) -> tuple[EnvState, float, bool]:
    return Maze(config).step(state, action)


@dataclass
class VisitGrid:
    size: int = 100
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.size, self.size), dtype=np.int64)

    def record(self, position) -> None:
        i = min(int(math.floor(position[0])), self.size - 1)
        j = min(int(math.floor(position[1])), self.size - 1)
        self.counts[i, j] += 1

    def unique_cells(self) -> int:
        return int(np.count_nonzero(self.counts))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def record_visit(grid: VisitGrid, state: EnvState) -> None:
    grid.record(state.position)


def unique_cells(grid: VisitGrid) -> int:
    return grid.unique_cells()


def rooms_visited(grid: VisitGrid, config: MazeConfig) -> set[int]:
    """Rooms containing at least one visited cell (cells judged by their centre)."""
    xs, ys = np.nonzero(grid.counts)
    return {room_of(config, x + 0.5, y + 0.5) for x, y in zip(xs, ys)}


def export_histogram(grid: VisitGrid, path) -> tuple[Path, Path]:
    """Write a binary PGM (brightness ~ log(1 + count), y axis pointing up) and a
    CSV of raw counts (row ``i`` is x-cell ``i``). Returns both paths."""
    path = Path(path)
    pgm_path = path.with_suffix(".pgm")
    csv_path = path.with_suffix(".csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    logc = np.log1p(grid.counts.astype(np.float64))
    peak = logc.max()
    pixels = np.zeros_like(logc) if peak == 0 else np.round(255.0 * logc / peak)
    image = pixels.astype(np.uint8).T[::-1]  # rows = y, top row = largest y
    with open(pgm_path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        fh.write(np.ascontiguousarray(image).tobytes())
    with open(csv_path, "w", newline="") as fh:
        csv.writer(fh).writerows(grid.counts.tolist())
    return pgm_path, csv_path


def read_counts_csv(path) -> VisitGrid:
    with open(path, newline="") as fh:
        rows = [[int(v) for v in row] for row in csv.reader(fh)]
    counts = np.array(rows, dtype=np.int64)
    return VisitGrid(counts.shape[0], counts)


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by :func:`export_histogram`."""
    data = Path(path).read_bytes()
    header, _, rest = data.partition(b"\n255\n")
    _, dims = header.split(b"\n", 1)
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w)
