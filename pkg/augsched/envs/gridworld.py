"""
Pixel gridworld navigation environment.

The agent (red) must reach the goal (yellow) on a procedurally generated
level drawn over a background texture. Modes split levels and backgrounds
into train and held-out sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from augsched.envs.backgrounds import background_texture
from augsched.envs.levels import (
    ACTIONS,
    AGENT_COLOR,
    GOAL_COLOR,
    WALL_COLOR,
    Cell,
    LevelSpec,
    generate_level,
)
from augsched.utils.errors import EnvError

logger = structlog.get_logger("augsched")

ENV_SALT = 0xE4F
NUM_ACTIONS = len(ACTIONS)

Seed = Union[int, Sequence[int]]


class EnvConfig(BaseModel):
    """Generator and dynamics knobs of the gridworld"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    grid_size: int = Field(8, ge=4)
    image_size: int = Field(64, ge=4)
    num_levels: int = Field(50, ge=1)
    train_background: int = Field(0, ge=0)
    num_test_backgrounds: int = Field(20, ge=0)
    reward_goal: float = 10.0
    step_penalty: float = 0.0
    max_episode_steps: int = Field(256, ge=1)
    distractor_density: float = Field(0.1, ge=0.0, le=1.0)
    wall_density: float = Field(0.2, ge=0.0, le=0.6)
    max_goal_distance: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_image_size(self) -> "EnvConfig":
        if self.image_size % self.grid_size != 0:
            raise ValueError(
                f"image_size ({self.image_size}) must be divisible by grid_size ({self.grid_size})"
            )
        return self

    @property
    def cell_pixels(self) -> int:
        return self.image_size // self.grid_size

    @property
    def observation_shape(self) -> Tuple[int, int, int]:
        return (self.image_size, self.image_size, 3)

    def test_backgrounds(self) -> List[int]:
        """Held-out background ids, disjoint from the train background"""
        b0 = self.train_background
        return list(range(b0 + 1, b0 + 1 + self.num_test_backgrounds))

    def level(self, level_id: int) -> LevelSpec:
        return generate_level(
            level_id, self.grid_size, self.wall_density, self.distractor_density, self.max_goal_distance
        )


class EnvMode(str, Enum):
    EASYBG = "easybg"
    TEST_BG = "test_bg"
    TEST_LV = "test_lv"

    @classmethod
    def parse(cls, value: Union[str, "EnvMode"]) -> "EnvMode":
        if isinstance(value, EnvMode):
            return value
        try:
            return cls(str(value).replace("-", "_"))
        except ValueError:
            raise EnvError(f"unknown env mode {value!r}", error_code="env_mode")


@dataclass
class EnvState:
    level: LevelSpec
    background_id: int
    agent: Cell
    steps: int = 0
    done: bool = False


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: Dict[str, object] = field(default_factory=dict)


def render(state: EnvState, config: EnvConfig) -> np.ndarray:
    """
    Draw a state over its background

    Walls, distractors, goal and agent fill whole cells in that order, so two
    backgrounds differ only on pixels of cells holding no entity.

    Args:
        state (EnvState): level, agent cell and background id
        config (EnvConfig): image geometry

    Returns:
        np.ndarray: (H, W, 3) float64 image in [0, 1]
    """
    image = background_texture(state.background_id, config.image_size).copy()
    px = config.cell_pixels

    def fill(cell: Cell, color) -> None:
        r, c = cell
        image[r * px:(r + 1) * px, c * px:(c + 1) * px] = color

    for r, c in np.argwhere(state.level.walls):
        fill((int(r), int(c)), WALL_COLOR)
    for cell, color in state.level.distractors:
        fill(cell, color)
    fill(state.level.goal, GOAL_COLOR)
    fill(state.agent, AGENT_COLOR)
    return image


def entity_mask(state: EnvState, config: EnvConfig) -> np.ndarray:
    """(H, W) bool mask of pixels covered by walls, distractors, goal or agent"""
    cells = np.array(state.level.walls, dtype=bool)
    for (r, c), _ in state.level.distractors:
        cells[r, c] = True
    cells[state.level.goal] = True
    cells[state.agent] = True
    px = config.cell_pixels
    return np.kron(cells, np.ones((px, px), dtype=bool)).astype(bool)


class GridWorldEnv:
    """Single-owner environment instance with its own rng stream"""

    def __init__(self, config: EnvConfig, mode: Union[str, EnvMode], instance_seed: Seed):
        self.config = config
        self.mode = EnvMode.parse(mode)
        if self.mode == EnvMode.TEST_BG and config.num_test_backgrounds < 1:
            raise EnvError("test_bg mode needs at least one held-out background", error_code="env_mode_split")
        seed = list(instance_seed) if isinstance(instance_seed, (list, tuple)) else [int(instance_seed)]
        self.rng = np.random.default_rng([ENV_SALT, *seed])
        self.total_steps = 0
        self._state: Optional[EnvState] = None

    def level_ids(self) -> range:
        n = self.config.num_levels
        if self.mode == EnvMode.TEST_LV:
            return range(n, 2 * n)
        return range(0, n)

    def background_ids(self) -> List[int]:
        if self.mode == EnvMode.TEST_BG:
            return self.config.test_backgrounds()
        return [self.config.train_background]

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise EnvError("environment has not been reset", error_code="env_not_reset")
        return self._state

    def reset(self, level_id: Optional[int] = None) -> np.ndarray:
        """
        Start a new episode

        Args:
            level_id (Optional[int]): force a level (used by evaluation oracles); sampled per mode otherwise

        Returns:
            np.ndarray: (H, W, 3) observation
        """
        levels = self.level_ids()
        if level_id is None:
            level_id = int(levels[self.rng.integers(len(levels))])
        backgrounds = self.background_ids()
        background = int(backgrounds[self.rng.integers(len(backgrounds))])
        level = self.config.level(level_id)
        self._state = EnvState(level=level, background_id=background, agent=level.start)
        return self.render()

    def render(self) -> np.ndarray:
        return render(self.state, self.config)

    def step(self, action: int) -> StepResult:
        """
        Advance one step

        Args:
            action (int): 0 up, 1 down, 2 left, 3 right

        Returns:
            StepResult: observation, reward, done and info (``success``, ``level_id``)

        Raises:
            EnvError: on an invalid action or stepping a finished episode
        """
        state = self.state
        if state.done:
            raise EnvError("step called on a finished episode; call reset", error_code="env_done")
        if isinstance(action, (bool, np.bool_)) or not isinstance(action, (int, np.integer)) or not 0 <= action < NUM_ACTIONS:
            raise EnvError(f"invalid action {action!r}", error_code="env_action")

        dr, dc = ACTIONS[int(action)]
        target = (state.agent[0] + dr, state.agent[1] + dc)
        if state.level.is_free(target):
            state.agent = target
        state.steps += 1
        self.total_steps += 1

        success = state.agent == state.level.goal
        reward = self.config.reward_goal if success else self.config.step_penalty
        state.done = success or state.steps >= self.config.max_episode_steps
        info = {"success": success, "level_id": state.level.level_id, "steps": state.steps}
        return StepResult(self.render(), float(reward), state.done, info)


def make_env(config: EnvConfig, mode: Union[str, EnvMode], instance_seed: Seed) -> GridWorldEnv:
    return GridWorldEnv(config, mode, instance_seed)


class VecEnv:
    """
    A batch of independent environments with auto-reset

    ``step`` returns the observation of the next episode's first frame for
    environments that just finished.
    """

    def __init__(self, envs: Sequence[GridWorldEnv]):
        if not envs:
            raise EnvError("VecEnv needs at least one environment")
        self.envs = list(envs)
        self.config = self.envs[0].config
        self._returns = np.zeros(len(self.envs))
        self._obs: Optional[np.ndarray] = None

    @property
    def num_envs(self) -> int:
        return len(self.envs)

    @property
    def total_steps(self) -> int:
        return sum(env.total_steps for env in self.envs)

    @property
    def observations(self) -> np.ndarray:
        if self._obs is None:
            self._obs = self.reset()
        return self._obs

    def reset(self) -> np.ndarray:
        self._returns[:] = 0.0
        self._obs = np.stack([env.reset() for env in self.envs])
        return self._obs

    def step(self, actions: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[float], List[bool]]:
        """
        Step every environment

        Returns:
            Tuple: next observations (n, H, W, 3), rewards (n,), dones (n,),
            returns of episodes that finished this step, and their success flags
        """
        if len(actions) != self.num_envs:
            raise EnvError(f"expected {self.num_envs} actions, got {len(actions)}")
        obs, rewards, dones = [], np.zeros(self.num_envs), np.zeros(self.num_envs, dtype=bool)
        finished, successes = [], []
        for i, (env, action) in enumerate(zip(self.envs, actions)):
            result = env.step(int(action))
            rewards[i], dones[i] = result.reward, result.done
            self._returns[i] += result.reward
            if result.done:
                finished.append(float(self._returns[i]))
                successes.append(bool(result.info["success"]))
                self._returns[i] = 0.0
                obs.append(env.reset())
            else:
                obs.append(result.observation)
        self._obs = np.stack(obs)
        return self._obs, rewards, dones, finished, successes


def make_vec_env(config: EnvConfig, mode: Union[str, EnvMode], num_envs: int, seed: int) -> VecEnv:
    """``num_envs`` environments whose rng streams are derived from (seed, index)"""
    return VecEnv([make_env(config, mode, (int(seed), i)) for i in range(num_envs)])
