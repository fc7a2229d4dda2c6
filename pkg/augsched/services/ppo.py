"""
Rollout collection, GAE, reward normalization and the clipped PPO update.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from augsched.envs.gridworld import VecEnv
from augsched.nn.gradients import GradientSet, backward
from augsched.nn.network import NetworkSpec, ParameterSet, forward, network_for
from augsched.nn.optim import AdamState, adam_step
from augsched.nn.tensor import Tensor
from augsched.utils.errors import NumericalError
from augsched.utils.images import decode_obs, encode_obs

logger = structlog.get_logger("augsched")


class PPOConfig(BaseModel):
    """PPO hyperparameters"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: float = Field(0.999, ge=0.0, le=1.0)
    gae_lambda: float = Field(0.95, ge=0.0, le=1.0)
    clip_eps: float = Field(0.2, gt=0.0)
    value_coef: float = Field(0.5, ge=0.0)
    entropy_coef: float = Field(0.01, ge=0.0)
    epochs: int = Field(3, ge=0)
    minibatches: int = Field(8, ge=1)
    lr: float = Field(5e-4, gt=0.0)
    reward_norm: bool = True
    normalize_advantages: bool = True
    max_grad_norm: Optional[float] = Field(0.5, gt=0.0)
    num_envs: int = Field(8, ge=1)
    num_steps: int = Field(128, ge=1)


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    done: bool
    log_prob: float
    value: float


@dataclass
class RolloutBuffer:
    """
    T steps of E parallel environments, time-major

    Observations are stored encoded (uint8). ``advantages`` and ``returns``
    are filled by ``process_rollout``.
    """
    obs: np.ndarray  # (T, E, H, W, C) uint8
    actions: np.ndarray  # (T, E)
    rewards: np.ndarray  # (T, E) as used for GAE (normalized when enabled)
    raw_rewards: np.ndarray
    dones: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    bootstrap_values: np.ndarray  # (E,)
    episode_returns: List[float] = field(default_factory=list)
    episode_successes: List[bool] = field(default_factory=list)
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    @property
    def num_steps(self) -> int:
        return int(self.actions.shape[0])

    @property
    def num_envs(self) -> int:
        return int(self.actions.shape[1])

    def __len__(self) -> int:
        return self.num_steps * self.num_envs

    @property
    def processed(self) -> bool:
        return self.advantages is not None

    def transition(self, t: int, e: int) -> Transition:
        return Transition(
            self.obs[t, e], int(self.actions[t, e]), float(self.rewards[t, e]),
            bool(self.dones[t, e]), float(self.log_probs[t, e]), float(self.values[t, e]),
        )

    def flat_obs(self) -> np.ndarray:
        return self.obs.reshape(len(self), *self.obs.shape[2:])


class Minibatch(NamedTuple):
    obs: np.ndarray  # float64 (n, H, W, C)
    actions: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    log_probs_old: np.ndarray


class RewardNormalizer:
    """
    Scales rewards by the running std of the per-env discounted return

    No mean subtraction and no clipping.
    """

    def __init__(self, num_envs: int, gamma: float, eps: float = 1e-8):
        self.gamma = gamma
        self.eps = eps
        self.returns = np.zeros(num_envs)
        # unit-variance prior with negligible weight, merged with every batch
        self.count = 1e-4
        self.mean = 0.0
        self.var = 1.0

    def _update(self, batch: np.ndarray) -> None:
        # parallel-variance merge of the batch into the running moments
        n = batch.size
        batch_mean, batch_var = float(batch.mean()), float(batch.var())
        total = self.count + n
        delta = batch_mean - self.mean
        m2 = self.var * self.count + batch_var * n + delta ** 2 * self.count * n / total
        self.mean += delta * n / total
        self.var = m2 / total
        self.count = total

    def __call__(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        self.returns = self.returns * self.gamma + rewards
        self._update(self.returns)
        normalized = rewards / np.sqrt(self.var + self.eps)
        self.returns[np.asarray(dones, dtype=bool)] = 0.0
        return normalized

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var + self.eps))

    def state_dict(self) -> Dict[str, object]:
        return {
            "gamma": self.gamma, "eps": self.eps, "returns": self.returns.tolist(),
            "count": self.count, "mean": self.mean, "var": self.var,
        }

    def load_state_dict(self, state: Mapping[str, object]) -> None:
        self.gamma = float(state["gamma"])
        self.eps = float(state["eps"])
        self.returns = np.asarray(state["returns"], dtype=np.float64)
        self.count = float(state["count"])
        self.mean = float(state["mean"])
        self.var = float(state["var"])


def sample_actions(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling from softmax(logits), one uniform draw per row"""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    probs = np.exp(shifted)
    cdf = np.cumsum(probs / probs.sum(axis=-1, keepdims=True), axis=-1)
    cdf[:, -1] = 1.0
    u = rng.random(logits.shape[0])
    return (cdf > u[:, None]).argmax(axis=-1)


def collect_rollout(
    params: ParameterSet,
    envs: VecEnv,
    num_steps: int,
    rng: np.random.Generator,
    normalizer: Optional[RewardNormalizer] = None,
) -> RolloutBuffer:
    """
    Run the stochastic policy for ``num_steps`` steps in every environment

    Args:
        params (ParameterSet): acting parameters; logπ_old and V_old come from them
        envs (VecEnv): environments, auto-reset on done
        num_steps (int): T
        rng (np.random.Generator): action-sampling stream
        normalizer (Optional[RewardNormalizer]): reward scaling, updated in place

    Returns:
        RolloutBuffer: E·T transitions with a bootstrap value per environment
    """
    n_envs = envs.num_envs
    obs = envs.observations
    shape = (num_steps, n_envs)
    obs_buf = np.zeros(shape + obs.shape[1:], dtype=np.uint8)
    actions = np.zeros(shape, dtype=np.int64)
    raw_rewards, dones = np.zeros(shape), np.zeros(shape, dtype=bool)
    log_probs, values = np.zeros(shape), np.zeros(shape)
    episode_returns, successes = [], []

    for t in range(num_steps):
        out = forward(params, obs)
        action = sample_actions(out.logits, rng)
        obs_buf[t] = encode_obs(obs)
        actions[t] = action
        log_probs[t] = out.log_probs()[np.arange(n_envs), action]
        values[t] = out.values
        obs, raw_rewards[t], dones[t], finished, done_success = envs.step(action)
        episode_returns.extend(finished)
        successes.extend(done_success)

    if normalizer is not None:
        rewards = np.stack([normalizer(raw_rewards[t], dones[t]) for t in range(num_steps)])
    else:
        rewards = raw_rewards.copy()
    bootstrap = forward(params, obs).values
    return RolloutBuffer(
        obs=obs_buf, actions=actions, rewards=rewards, raw_rewards=raw_rewards, dones=dones,
        log_probs=log_probs, values=values, bootstrap_values=bootstrap,
        episode_returns=episode_returns, episode_successes=successes,
    )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_values: np.ndarray,
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation, time-major

    Args:
        rewards (np.ndarray): (T, ...) rewards
        values (np.ndarray): (T, ...) V_old(o_t)
        dones (np.ndarray): (T, ...) episode ended after step t
        bootstrap_values (np.ndarray): V_old of the observation following step T-1
        gamma (float): discount
        lam (float): GAE decay

    Returns:
        Tuple[np.ndarray, np.ndarray]: advantages Â and value targets Â + V_old
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    not_done = 1.0 - np.asarray(dones, dtype=np.float64)
    advantages = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap_values, dtype=np.float64)
    gae = np.zeros_like(next_value)
    for t in reversed(range(rewards.shape[0])):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        gae = delta + gamma * lam * not_done[t] * gae
        advantages[t] = gae
        next_value = values[t]
    return advantages, advantages + values


def process_rollout(buffer: RolloutBuffer, config: PPOConfig) -> RolloutBuffer:
    buffer.advantages, buffer.returns = compute_gae(
        buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap_values, config.gamma, config.gae_lambda
    )
    return buffer


def make_minibatch(buffer: RolloutBuffer, indices: np.ndarray) -> Minibatch:
    flat = lambda a: a.reshape(len(buffer), *a.shape[2:])[indices]  # noqa: E731
    return Minibatch(
        obs=decode_obs(flat(buffer.obs)),
        actions=flat(buffer.actions),
        advantages=flat(buffer.advantages),
        returns=flat(buffer.returns),
        log_probs_old=flat(buffer.log_probs),
    )


def ppo_loss(
    weights: Mapping[str, Tensor],
    spec: NetworkSpec,
    batch: Minibatch,
    config: PPOConfig,
    outputs: Optional[Tuple[Tensor, Tensor]] = None,
) -> Tuple[Tensor, Dict[str, float]]:
    """
    Clipped surrogate + value MSE − entropy bonus

    Args:
        weights (Mapping[str, Tensor]): tracked parameters
        spec (NetworkSpec): architecture
        batch (Minibatch): observations, actions, advantages, targets, logπ_old
        config (PPOConfig): clip range and coefficients
        outputs (Optional[Tuple[Tensor, Tensor]]): precomputed (logits, values) on ``batch.obs``

    Returns:
        Tuple[Tensor, Dict[str, float]]: scalar loss and its components

    Raises:
        NumericalError: if any intermediate is non-finite
    """
    logits, values = outputs if outputs is not None else network_for(spec)(weights, Tensor(batch.obs))
    advantages = np.asarray(batch.advantages, dtype=np.float64)
    if config.normalize_advantages and advantages.size > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    log_probs = logits.log_softmax(axis=-1)
    ratio = (log_probs.pick(batch.actions) - batch.log_probs_old).exp()
    surrogate = ratio * advantages
    clipped = ratio.clip(1.0 - config.clip_eps, 1.0 + config.clip_eps) * advantages
    policy_objective = Tensor.minimum(surrogate, clipped).mean()
    value_loss = ((values - batch.returns) ** 2).mean()
    entropy = -(log_probs.exp() * log_probs).sum(axis=-1).mean()

    loss = -policy_objective + config.value_coef * value_loss - config.entropy_coef * entropy
    components = {
        "policy_objective": policy_objective.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "loss": loss.item(),
    }
    return loss, components


class PPOUpdater:
    """
    Epochs × minibatches of Adam steps over one processed rollout

    Subclasses change what a minibatch step optimizes by overriding
    ``minibatch_gradients``.
    """

    def __init__(self, config: PPOConfig):
        self.config = config
        self.updates = 0

    def minibatch_gradients(
        self, params: ParameterSet, batch: Minibatch
    ) -> Tuple[GradientSet, Dict[str, float]]:
        weights = params.track()
        loss, components = ppo_loss(weights, params.spec, batch, self.config)
        return backward(loss, weights), components

    def apply_gradients(self, params: ParameterSet, adam: AdamState, grads: GradientSet) -> None:
        if self.config.max_grad_norm is not None:
            grads = grads.clip_by_global_norm(self.config.max_grad_norm)
        adam_step(params, grads, adam, self.config.lr)
        self.updates += 1

    def update(
        self, params: ParameterSet, adam: AdamState, buffer: RolloutBuffer, rng: np.random.Generator
    ) -> Dict[str, float]:
        """
        Run the update in place

        Args:
            params (ParameterSet): updated in place
            adam (AdamState): optimizer state, updated in place
            buffer (RolloutBuffer): processed rollout
            rng (np.random.Generator): minibatch shuffling stream

        Returns:
            Dict[str, float]: loss components averaged over all minibatch steps
        """
        if not buffer.processed:
            process_rollout(buffer, self.config)
        totals: Dict[str, float] = {}
        steps = 0
        for _ in range(self.config.epochs):
            permutation = rng.permutation(len(buffer))
            for indices in np.array_split(permutation, self.config.minibatches):
                if indices.size == 0:
                    continue
                grads, components = self.minibatch_gradients(params, make_minibatch(buffer, indices))
                if not grads.is_finite():
                    raise NumericalError("Non-finite gradient in PPO update")
                self.apply_gradients(params, adam, grads)
                for key, value in components.items():
                    totals[key] = totals.get(key, 0.0) + value
                steps += 1
        return {key: value / steps for key, value in totals.items()} if steps else {}


def ppo_update(
    params: ParameterSet,
    adam: AdamState,
    buffer: RolloutBuffer,
    config: PPOConfig,
    rng: np.random.Generator,
) -> ParameterSet:
    """Plain PPO update of ``params`` in place; returns ``params``"""
    PPOUpdater(config).update(params, adam, buffer, rng)
    return params
