from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from augsched.nn.tensor import Tensor
from augsched.utils.errors import GraphError, ShapeError


class GradientSet:
    """Named gradient arrays matching a ParameterSet, flattenable to one vector."""

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self._arrays: "OrderedDict[str, np.ndarray]" = OrderedDict(
            (name, np.asarray(value, dtype=np.float64)) for name, value in arrays.items()
        )

    # ---- mapping protocol ----
    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self._arrays.items())

    def names(self) -> Tuple[str, ...]:
        return tuple(self._arrays)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: value.shape for name, value in self._arrays.items()}

    # ---- vector view ----
    def flatten(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([value.reshape(-1) for value in self._arrays.values()])

    def unflatten(self, vector: np.ndarray) -> "GradientSet":
        """Split a flat vector back into this set's names and shapes."""
        out, offset = OrderedDict(), 0
        for name, value in self._arrays.items():
            out[name] = vector[offset:offset + value.size].reshape(value.shape)
            offset += value.size
        if offset != vector.size:
            raise ShapeError(f"flat vector has {vector.size} entries, expected {offset}")
        return GradientSet(out)

    def check_matches(self, other: "GradientSet") -> None:
        if self.shapes() != other.shapes() or self.names() != other.names():
            raise ShapeError("Gradient sets do not share names and shapes")

    def dot(self, other: "GradientSet") -> float:
        self.check_matches(other)
        return float(sum(np.vdot(a, other[name]) for name, a in self._arrays.items()))

    def norm(self) -> float:
        return float(np.sqrt(self.dot(self)))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for value in self._arrays.values())

    # ---- arithmetic ----
    def __add__(self, other: "GradientSet") -> "GradientSet":
        self.check_matches(other)
        return GradientSet({name: a + other[name] for name, a in self._arrays.items()})

    def __sub__(self, other: "GradientSet") -> "GradientSet":
        self.check_matches(other)
        return GradientSet({name: a - other[name] for name, a in self._arrays.items()})

    def __mul__(self, scale: float) -> "GradientSet":
        return GradientSet({name: a * scale for name, a in self._arrays.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "GradientSet":
        return self * -1.0

    def clip_by_global_norm(self, max_norm: float) -> "GradientSet":
        norm = self.norm()
        if norm <= max_norm or norm == 0.0:
            return self
        return self * (max_norm / norm)

    @classmethod
    def zeros_like(cls, arrays: Mapping[str, np.ndarray]) -> "GradientSet":
        return cls({name: np.zeros_like(np.asarray(value, dtype=np.float64)) for name, value in arrays.items()})


def backward(loss: Tensor, leaves: Mapping[str, Tensor]) -> GradientSet:
    """
    Differentiate a scalar loss with respect to named leaf tensors

    Args:
        loss (Tensor): scalar produced by recorded ops over ``leaves``
        leaves (Mapping[str, Tensor]): tracked parameter tensors

    Returns:
        GradientSet: one gradient per leaf; leaves the loss does not depend on get zeros

    Raises:
        GraphError: if the loss does not depend on any tracked tensor
    """
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise GraphError("Loss is not connected to any tracked parameter")
    for leaf in leaves.values():
        leaf.grad = None
    loss.backward()
    return GradientSet(
        {
            name: leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
            for name, leaf in leaves.items()
        }
    )
