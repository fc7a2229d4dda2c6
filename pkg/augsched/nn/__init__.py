# Tensor math, actor-critic network, optimizer and checkpoints
from augsched.nn.tensor import Tensor, conv2d
from augsched.nn.gradients import GradientSet, backward
from augsched.nn.network import (
    ActorCritic,
    ActorCriticOutput,
    NetworkSpec,
    ParameterSet,
    forward,
    init_params,
    network_for,
)
from augsched.nn.optim import AdamState, adam_step
from augsched.nn.functional import js_distance, kl_categorical
from augsched.nn.checkpoint import load_checkpoint, save_checkpoint
