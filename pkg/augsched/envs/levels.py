"""
Procedural level generation and the BFS optimal-path oracle.

A level is fully determined by its integer id (the level seed) and the
generator knobs of the env config.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from augsched.utils.errors import EnvError

Cell = Tuple[int, int]

# up, down, left, right
ACTIONS: Tuple[Cell, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))

AGENT_COLOR = (1.0, 0.0, 0.0)
GOAL_COLOR = (1.0, 1.0, 0.0)
WALL_COLOR = (51 / 255.0, 51 / 255.0, 51 / 255.0)
RESERVED_COLORS = (AGENT_COLOR, GOAL_COLOR, WALL_COLOR)

LEVEL_SALT = 0x1E7E1
MAX_ATTEMPTS = 1000


def safe_color(rng: np.random.Generator, margin: float = 0.2) -> Tuple[float, float, float]:
    """A colour quantized to 1/255 steps and at least ``margin`` (L-inf) from every reserved colour."""
    while True:
        color = rng.integers(0, 256, size=3) / 255.0
        if all(np.max(np.abs(color - np.asarray(r))) >= margin for r in RESERVED_COLORS):
            return tuple(float(c) for c in color)


@dataclass(frozen=True, eq=False)
class LevelSpec:
    """Walls, start, goal and distractor tiles of one level"""
    level_id: int
    walls: np.ndarray  # (G, G) bool
    start: Cell
    goal: Cell
    distractors: Tuple[Tuple[Cell, Tuple[float, float, float]], ...]

    @property
    def grid_size(self) -> int:
        return int(self.walls.shape[0])

    def is_free(self, cell: Cell) -> bool:
        r, c = cell
        g = self.grid_size
        return 0 <= r < g and 0 <= c < g and not self.walls[r, c]


def bfs_distances(walls: np.ndarray, source: Cell) -> Dict[Cell, int]:
    g = walls.shape[0]
    dist = {source: 0}
    queue = deque([source])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ACTIONS:
            nxt = (r + dr, c + dc)
            if 0 <= nxt[0] < g and 0 <= nxt[1] < g and not walls[nxt] and nxt not in dist:
                dist[nxt] = dist[(r, c)] + 1
                queue.append(nxt)
    return dist


def _goal_distances(level: LevelSpec) -> Dict[Cell, int]:
    return bfs_distances(level.walls, level.goal)


def next_optimal_action(level: LevelSpec, cell: Cell) -> int:
    """First action (lowest index) that moves ``cell`` one step closer to the goal"""
    dist = _goal_distances(level)
    if cell not in dist:
        raise EnvError(f"cell {cell} cannot reach the goal of level {level.level_id}")
    for a, (dr, dc) in enumerate(ACTIONS):
        if dist.get((cell[0] + dr, cell[1] + dc), -1) == dist[cell] - 1:
            return a
    raise EnvError(f"cell {cell} is already the goal of level {level.level_id}")


def shortest_path(level: LevelSpec) -> List[int]:
    """Action indices of one shortest start→goal path (the optimal-return witness)."""
    dist = _goal_distances(level)
    if level.start not in dist:
        raise EnvError(f"level {level.level_id} has no path from start to goal")
    actions, cell = [], level.start
    while cell != level.goal:
        a = next_optimal_action(level, cell)
        actions.append(a)
        cell = (cell[0] + ACTIONS[a][0], cell[1] + ACTIONS[a][1])
    return actions


def optimal_return(level: LevelSpec, reward_goal: float, gamma: float) -> float:
    """Discounted return of the shortest path: reward_goal * gamma^(p-1)"""
    return reward_goal * gamma ** (len(shortest_path(level)) - 1)


@lru_cache(maxsize=4096)
def generate_level(
    level_id: int,
    grid_size: int,
    wall_density: float,
    distractor_density: float,
    max_goal_distance: Optional[int] = None,
) -> LevelSpec:
    """
    Generate the level with the given id

    Args:
        level_id (int): level seed
        grid_size (int): G, cells per side (border cells are always walls)
        wall_density (float): probability an interior cell is a wall
        distractor_density (float): probability a free non-start/goal cell holds a distractor
        max_goal_distance (Optional[int]): re-draw until BFS distance start→goal ≤ this bound

    Returns:
        LevelSpec: a solvable level (start ≠ goal, path verified by flood fill)

    Raises:
        EnvError: if no valid level is found within the attempt budget
    """
    rng = np.random.default_rng([LEVEL_SALT, level_id])
    for _ in range(MAX_ATTEMPTS):
        walls = np.ones((grid_size, grid_size), dtype=bool)
        walls[1:-1, 1:-1] = rng.random((grid_size - 2, grid_size - 2)) < wall_density
        free = [tuple(int(v) for v in cell) for cell in np.argwhere(~walls)]
        if len(free) < 2:
            continue
        i, j = rng.choice(len(free), size=2, replace=False)
        start, goal = free[i], free[j]
        distance = bfs_distances(walls, start).get(goal)
        if distance is None or (max_goal_distance is not None and distance > max_goal_distance):
            continue
        distractors = tuple(
            (cell, safe_color(rng))
            for cell in free
            if cell not in (start, goal) and rng.random() < distractor_density
        )
        walls.setflags(write=False)
        return LevelSpec(level_id=level_id, walls=walls, start=start, goal=goal, distractors=distractors)
    raise EnvError(f"could not generate a valid level for id {level_id}", error_code="level_generation")
