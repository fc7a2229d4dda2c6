"""Episode-return evaluation on the three env modes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Union

import numpy as np

from augsched.envs.gridworld import EnvConfig, EnvMode, GridWorldEnv, make_env
from augsched.envs.levels import next_optimal_action
from augsched.nn.network import ParameterSet, forward
from augsched.services.ppo import sample_actions

# (active envs, their current observations) -> actions
Policy = Callable[[Sequence[GridWorldEnv], np.ndarray], np.ndarray]

EVAL_SALT = 0xE7A1


@dataclass
class EvalResult:
    mode: str
    returns: List[float] = field(default_factory=list)
    successes: List[bool] = field(default_factory=list)

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns)) if self.returns else 0.0

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.successes)) if self.successes else 0.0


def params_policy(params: ParameterSet, rng: np.random.Generator) -> Policy:
    """Stochastic policy of ``params``"""

    def act(envs, obs):
        return sample_actions(forward(params, obs).logits, rng)
    return act


def oracle_policy(envs: Sequence[GridWorldEnv], obs: np.ndarray) -> np.ndarray:
    """Follows a BFS shortest path from the agent's current cell"""
    return np.array([next_optimal_action(env.state.level, env.state.agent) for env in envs])


def run_episodes(
    config: EnvConfig, mode: Union[str, EnvMode], episodes: int, seed: int, policy: Policy
) -> EvalResult:
    """
    Run exactly ``episodes`` episodes, one per environment instance, batched

    Args:
        config (EnvConfig): environment configuration
        mode (Union[str, EnvMode]): easybg, test_bg or test_lv
        episodes (int): number of episodes
        seed (int): derives every instance's rng stream
        policy (Policy): action selection

    Returns:
        EvalResult: undiscounted return and success flag per episode
    """
    mode = EnvMode.parse(mode)
    envs = [make_env(config, mode, (EVAL_SALT, int(seed), i)) for i in range(episodes)]
    obs = [env.reset() for env in envs]
    returns = np.zeros(episodes)
    successes = np.zeros(episodes, dtype=bool)
    active = list(range(episodes))
    while active:
        actions = policy([envs[i] for i in active], np.stack([obs[i] for i in active]))
        still_active = []
        for i, action in zip(active, actions):
            result = envs[i].step(int(action))
            returns[i] += result.reward
            obs[i] = result.observation
            if result.done:
                successes[i] = bool(result.info["success"])
            else:
                still_active.append(i)
        active = still_active
    return EvalResult(mode=mode.value, returns=returns.tolist(), successes=successes.tolist())


def evaluate(
    params: ParameterSet, config: EnvConfig, mode: Union[str, EnvMode], episodes: int, seed: int
) -> EvalResult:
    """Mean undiscounted return of the stochastic policy; deterministic given ``seed``"""
    rng = np.random.default_rng([EVAL_SALT, int(seed)])
    return run_episodes(config, mode, episodes, seed, params_policy(params, rng))
