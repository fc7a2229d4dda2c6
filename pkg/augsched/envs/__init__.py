# Procedural pixel gridworld
from augsched.envs.gridworld import (
    NUM_ACTIONS,
    EnvConfig,
    EnvMode,
    EnvState,
    GridWorldEnv,
    StepResult,
    VecEnv,
    make_env,
    make_vec_env,
    render,
)
from augsched.envs.levels import LevelSpec, generate_level, optimal_return, shortest_path
