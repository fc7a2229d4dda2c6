import numpy as np
import pytest

from augsched.config.experiment import ExperimentConfig
from augsched.envs.gridworld import EnvConfig
from augsched.nn.network import ConvLayer, DenseLayer, FlattenLayer, NetworkSpec, ReluLayer, init_params
from augsched.services.distill import DAConfig
from augsched.services.ppo import PPOConfig
from augsched.services.training.schedule import ScheduleConfig


@pytest.fixture
def tiny_env_config():
    """4x4 grid rendered at 8x8 pixels"""
    return EnvConfig(grid_size=4, image_size=8, num_levels=4, num_test_backgrounds=2, max_episode_steps=16)


@pytest.fixture
def tiny_spec():
    """One strided conv and one dense layer over 8x8 observations"""
    return NetworkSpec(
        input_shape=(8, 8, 3),
        layers=[
            ConvLayer(out_channels=2, kernel=3, stride=2),
            ReluLayer(),
            FlattenLayer(),
            DenseLayer(out_dim=8),
            ReluLayer(),
        ],
        num_actions=4,
    )


@pytest.fixture
def tiny_params(tiny_spec):
    """Parameters large enough that the policy is not uniform"""
    return init_params(tiny_spec, seed=0, scale=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def obs_batch(rng):
    """Six random observations quantized to 1/255"""
    return np.round(rng.random((6, 8, 8, 3)) * 255.0) / 255.0


@pytest.fixture
def make_experiment(tiny_env_config, tiny_spec):
    """Factory for tiny experiment configs; keyword overrides go to the schedule block"""

    def factory(method="ppo", augmentations=None, bandit=None, da=None, ppo=None, **schedule):
        schedule = {"epochs": 3, "interval": 1, "exda_epochs": 2, **schedule}
        data = {
            "env": tiny_env_config,
            "network": tiny_spec,
            "ppo": ppo or PPOConfig(num_envs=2, num_steps=8, minibatches=2, epochs=1),
            "da": da or DAConfig(epochs=1, minibatch_size=8, exda_buffer_size=16, exda_minibatch_size=8),
            "schedule": ScheduleConfig(method=method, **schedule),
            "seeds": [0],
            "eval_episodes": 2,
            "eval_every": 3,
            "init_scale": 0.3,
        }
        if augmentations is not None:
            data["augmentations"] = augmentations
        if bandit is not None:
            data["bandit"] = bandit
        return ExperimentConfig(**data)

    return factory
