"""
Actor-critic network: spec, parameters and forward evaluation.

The trunk is an ordered list of conv / relu / flatten / dense layers; the
final flat feature vector feeds a policy head (|A| logits) and a scalar
value head.
"""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from typing import Annotated, Dict, Iterator, List, Literal, Mapping, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from augsched.nn.tensor import Tensor, conv2d
from augsched.utils.errors import ConfigError, ShapeError
from augsched.utils.images import decode_obs


class ConvLayer(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["conv"] = "conv"
    out_channels: int = Field(gt=0)
    kernel: int = Field(gt=0)
    stride: int = Field(default=1, gt=0)


class ReluLayer(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["relu"] = "relu"


class FlattenLayer(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["flatten"] = "flatten"


class DenseLayer(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["dense"] = "dense"
    out_dim: int = Field(gt=0)


Layer = Annotated[Union[ConvLayer, ReluLayer, FlattenLayer, DenseLayer], Field(discriminator="kind")]


def default_layers() -> List[Layer]:
    return [
        ConvLayer(out_channels=16, kernel=4, stride=2),
        ReluLayer(),
        ConvLayer(out_channels=32, kernel=3, stride=2),
        ReluLayer(),
        FlattenLayer(),
        DenseLayer(out_dim=128),
        ReluLayer(),
    ]


class NetworkSpec(BaseModel):
    """Architecture of the actor-critic network"""

    model_config = ConfigDict(extra="forbid")

    input_shape: Tuple[int, int, int] = (64, 64, 3)
    layers: List[Layer] = Field(default_factory=default_layers)
    num_actions: int = Field(default=4, gt=0)

    @model_validator(mode="after")
    def _check_dims(self) -> "NetworkSpec":
        self.parameter_shapes()
        return self

    def parameter_shapes(self) -> "OrderedDict[str, Tuple[int, ...]]":
        """
        Trace shapes through the trunk and list every parameter

        Returns:
            OrderedDict[str, Tuple[int, ...]]: parameter name to shape, in creation order

        Raises:
            ShapeError: if any layer's input is inconsistent with its predecessor
        """
        h, w, c = self.input_shape
        if min(h, w, c) <= 0:
            raise ShapeError(f"input_shape must be positive, got {self.input_shape}")
        shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
        image, flat = (h, w, c), None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayer):
                if image is None:
                    raise ShapeError(f"layer {i}: conv after flatten")
                lh, lw, lc = image
                if lh < layer.kernel or lw < layer.kernel:
                    raise ShapeError(f"layer {i}: kernel {layer.kernel} larger than input {lh}x{lw}")
                shapes[f"layers.{i}.weight"] = (layer.kernel, layer.kernel, lc, layer.out_channels)
                shapes[f"layers.{i}.bias"] = (layer.out_channels,)
                image = (
                    (lh - layer.kernel) // layer.stride + 1,
                    (lw - layer.kernel) // layer.stride + 1,
                    layer.out_channels,
                )
            elif isinstance(layer, FlattenLayer):
                if image is None:
                    raise ShapeError(f"layer {i}: flatten of an already flat input")
                flat, image = int(np.prod(image)), None
            elif isinstance(layer, DenseLayer):
                if image is not None:
                    raise ShapeError(f"layer {i}: dense needs a flatten before it")
                shapes[f"layers.{i}.weight"] = (flat, layer.out_dim)
                shapes[f"layers.{i}.bias"] = (layer.out_dim,)
                flat = layer.out_dim
        if image is not None:
            raise ShapeError("trunk must end with a flat feature vector")
        shapes["policy.weight"] = (flat, self.num_actions)
        shapes["policy.bias"] = (self.num_actions,)
        shapes["value.weight"] = (flat, 1)
        shapes["value.bias"] = (1,)
        return shapes

    @property
    def spec_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()


class ParameterSet:
    """Ordered named parameter arrays of one actor-critic network (θ)."""

    def __init__(
        self,
        spec: NetworkSpec,
        tensors: Mapping[str, np.ndarray],
        seed: int = 0,
        scale: float = 0.0,
    ):
        expected = spec.parameter_shapes()
        if list(tensors) != list(expected):
            raise ShapeError("Parameter names do not match the network spec")
        for name, shape in expected.items():
            if tuple(np.shape(tensors[name])) != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {np.shape(tensors[name])}")
        self.spec = spec
        self.seed = int(seed)
        self.scale = float(scale)
        self._tensors: "OrderedDict[str, np.ndarray]" = OrderedDict(
            (name, np.asarray(value, dtype=np.float64)) for name, value in tensors.items()
        )

    @property
    def spec_hash(self) -> str:
        return self.spec.spec_hash

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self) -> Tuple[str, ...]:
        return tuple(self._tensors)

    def track(self) -> "OrderedDict[str, Tensor]":
        """Leaf tensors for one recorded computation"""
        return OrderedDict(
            (name, Tensor(value, requires_grad=True, name=name)) for name, value in self._tensors.items()
        )

    def constants(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((name, Tensor(value)) for name, value in self._tensors.items())

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            self.spec,
            OrderedDict((name, value.copy()) for name, value in self._tensors.items()),
            seed=self.seed,
            scale=self.scale,
        )

    def load_from(self, other: "ParameterSet") -> None:
        """Overwrite values in place with another set of the same spec"""
        if other.spec_hash != self.spec_hash:
            raise ShapeError("Cannot load parameters of a different network spec")
        for name in self._tensors:
            self._tensors[name][...] = other[name]

    def equals(self, other: "ParameterSet") -> bool:
        return (
            self.spec_hash == other.spec_hash
            and self.names() == other.names()
            and all(np.array_equal(value, other[name]) for name, value in self._tensors.items())
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, value in self._tensors.items():
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(value).tobytes())
        return h.hexdigest()


@dataclass
class ActorCriticOutput:
    """Batched π_θ(·|o) logits and V_θ(o)"""
    logits: np.ndarray
    values: np.ndarray

    def log_probs(self) -> np.ndarray:
        shifted = self.logits - self.logits.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())


class ActorCritic:
    """Evaluates a NetworkSpec over recorded tensors."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.shapes = spec.parameter_shapes()

    def __call__(self, weights: Mapping[str, Tensor], obs: Tensor) -> Tuple[Tensor, Tensor]:
        """
        Forward pass

        Args:
            weights (Mapping[str, Tensor]): parameters, tracked or constant
            obs (Tensor): observations of shape (N, H, W, C)

        Returns:
            Tuple[Tensor, Tensor]: logits (N, |A|) and values (N,)
        """
        if tuple(obs.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(f"expected observations of shape (N, {self.spec.input_shape}), got {obs.shape}")
        x = obs
        for i, layer in enumerate(self.spec.layers):
            if isinstance(layer, ConvLayer):
                x = conv2d(x, weights[f"layers.{i}.weight"], weights[f"layers.{i}.bias"], layer.stride)
            elif isinstance(layer, ReluLayer):
                x = x.relu()
            elif isinstance(layer, FlattenLayer):
                x = x.reshape(x.shape[0], -1)
            else:
                x = x @ weights[f"layers.{i}.weight"] + weights[f"layers.{i}.bias"]
        logits = x @ weights["policy.weight"] + weights["policy.bias"]
        values = (x @ weights["value.weight"] + weights["value.bias"]).reshape(x.shape[0])
        return logits, values


@lru_cache(maxsize=32)
def _network_for(spec_json: str) -> ActorCritic:
    return ActorCritic(NetworkSpec.model_validate_json(spec_json))


def network_for(spec: NetworkSpec) -> ActorCritic:
    return _network_for(spec.model_dump_json())


def init_params(spec: NetworkSpec, seed: int, scale: float = 0.05) -> ParameterSet:
    """
    Initialize θ close to the origin

    Args:
        spec (NetworkSpec): network architecture
        seed (int): rng seed; equal seeds give bit-identical parameters
        scale (float): weights are drawn i.i.d. uniform in [-scale, +scale]

    Returns:
        ParameterSet: weights uniform, biases zero
    """
    if scale < 0:
        raise ConfigError(f"init scale must be non-negative, got {scale}")
    rng = np.random.default_rng(seed)
    tensors: Dict[str, np.ndarray] = OrderedDict()
    for name, shape in spec.parameter_shapes().items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.uniform(-scale, scale, size=shape)
    return ParameterSet(spec, tensors, seed=seed, scale=scale)


def forward(params: ParameterSet, obs: np.ndarray, chunk_size: int = 256) -> ActorCriticOutput:
    """
    Evaluate π_θ and V_θ on a batch without recording gradients

    Args:
        params (ParameterSet): network parameters
        obs (np.ndarray): (N, H, W, C) batch, float in [0, 1] or encoded uint8
        chunk_size (int): evaluation chunk, bounds peak memory

    Returns:
        ActorCriticOutput: logits (N, |A|) and values (N,)
    """
    obs = np.asarray(obs)
    if obs.ndim != 4:
        raise ShapeError(f"expected a batch of images, got shape {obs.shape}")
    net = network_for(params.spec)
    weights = params.constants()
    logits, values = [], []
    for start in range(0, obs.shape[0], chunk_size):
        chunk = Tensor(decode_obs(obs[start:start + chunk_size]))
        lg, v = net(weights, chunk)
        logits.append(lg.data)
        values.append(v.data)
    if not logits:
        return ActorCriticOutput(np.zeros((0, params.spec.num_actions)), np.zeros(0))
    return ActorCriticOutput(np.concatenate(logits), np.concatenate(values))
