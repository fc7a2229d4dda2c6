"""
Reverse-mode differentiation over a small fixed op set.

Every op records its parents and a closure that pushes the upstream gradient
back into them; ``Tensor.backward`` replays the closures in reverse
topological order. Values are float64 and must stay finite.
"""
from __future__ import annotations

from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from augsched.utils.errors import NumericalError, ShapeError

Array = np.ndarray
Scalar = Union[int, float]


def _as_array(data: Any) -> Array:
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("Non-finite value in tensor data")
    return arr


def _unbroadcast(grad: Array, shape: Tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, (gs, ts) in enumerate(zip(grad.shape, shape)):
        if ts == 1 and gs != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array node in the recorded computation."""

    # numpy scalars/arrays on the left of an operator defer to Tensor
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        self.data: Array = _as_array(data)
        self.requires_grad: bool = bool(requires_grad)
        self.grad: Optional[Array] = None
        self.name = name
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] = lambda: None

    # ---- convenience ----
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{req}{nm})"

    def numpy(self) -> Array:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same values, cut from the graph (a stop-gradient)."""
        return Tensor(self.data, requires_grad=False)

    # ---- graph utilities ----
    def _child(self, data: Array, parents: Sequence["Tensor"]) -> "Tensor":
        tracked = tuple(p for p in parents if p.requires_grad)
        out = Tensor(data, requires_grad=bool(tracked))
        out._parents = tracked
        return out

    def _accumulate(self, grad: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + grad

    def backward(self) -> None:
        """Backprop from this scalar node into every tracked ancestor."""
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.grad is not None:
                node._backward()

    # ------------------------------
    # Elementwise ops
    # ------------------------------
    def __add__(self, other: Any) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = self._child(self.data + other.data, (self, other))

        def _bw():
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(out.grad, other.shape))
        out._backward = _bw
        return out

    def __radd__(self, other: Any) -> "Tensor":
        return self.__add__(other)

    def __neg__(self) -> "Tensor":
        out = self._child(-self.data, (self,))

        def _bw():
            self._accumulate(-out.grad)
        out._backward = _bw
        return out

    def __sub__(self, other: Any) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self.__add__(-other)

    def __rsub__(self, other: Any) -> "Tensor":
        return (-self).__add__(other)

    def __mul__(self, other: Any) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = self._child(self.data * other.data, (self, other))

        def _bw():
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(out.grad * self.data, other.shape))
        out._backward = _bw
        return out

    def __rmul__(self, other: Any) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: Any) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = self._child(self.data / other.data, (self, other))

        def _bw():
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-out.grad * self.data / (other.data ** 2), other.shape)
                )
        out._backward = _bw
        return out

    def __pow__(self, p: Scalar) -> "Tensor":
        out = self._child(self.data ** p, (self,))

        def _bw():
            self._accumulate(out.grad * (p * self.data ** (p - 1)))
        out._backward = _bw
        return out

    def exp(self) -> "Tensor":
        e = np.exp(self.data)
        out = self._child(e, (self,))

        def _bw():
            self._accumulate(out.grad * e)
        out._backward = _bw
        return out

    def log(self) -> "Tensor":
        out = self._child(np.log(self.data), (self,))

        def _bw():
            self._accumulate(out.grad / self.data)
        out._backward = _bw
        return out

    def relu(self) -> "Tensor":
        mask = self.data > 0.0
        out = self._child(np.where(mask, self.data, 0.0), (self,))

        def _bw():
            self._accumulate(out.grad * mask)
        out._backward = _bw
        return out

    def clip(self, low: float, high: float) -> "Tensor":
        # gradient passes where the input lies inside [low, high], bounds included
        mask = (self.data >= low) & (self.data <= high)
        out = self._child(np.clip(self.data, low, high), (self,))

        def _bw():
            self._accumulate(out.grad * mask)
        out._backward = _bw
        return out

    @staticmethod
    def minimum(a: "Tensor", b: "Tensor") -> "Tensor":
        a = a if isinstance(a, Tensor) else Tensor(a)
        b = b if isinstance(b, Tensor) else Tensor(b)
        take_a = a.data <= b.data
        out = a._child(np.where(take_a, a.data, b.data), (a, b))

        def _bw():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad * take_a, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad * ~take_a, b.shape))
        out._backward = _bw
        return out

    # ------------------------------
    # Reductions & shaping
    # ------------------------------
    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        out = self._child(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def _bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis=axis)
            self._accumulate(np.broadcast_to(g, self.shape))
        out._backward = _bw
        return out

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        denom = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / denom)

    def reshape(self, *shape: int) -> "Tensor":
        out = self._child(self.data.reshape(*shape), (self,))

        def _bw():
            self._accumulate(out.grad.reshape(self.shape))
        out._backward = _bw
        return out

    def pick(self, index: Array) -> "Tensor":
        """Row-wise gather on a (N, K) tensor: out[n] = self[n, index[n]]."""
        if self.data.ndim != 2 or len(index) != self.shape[0]:
            raise ShapeError(f"pick expects (N, K) data and N indices, got {self.shape}")
        rows = np.arange(self.shape[0])
        index = np.asarray(index, dtype=np.int64)
        out = self._child(self.data[rows, index], (self,))

        def _bw():
            g = np.zeros_like(self.data)
            g[rows, index] = out.grad
            self._accumulate(g)
        out._backward = _bw
        return out

    # ------------------------------
    # Matrix ops
    # ------------------------------
    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = self._child(self.data @ other.data, (self, other))

        def _bw():
            if self.requires_grad:
                self._accumulate(out.grad @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ out.grad)
        out._backward = _bw
        return out

    # ------------------------------
    # Softmax family
    # ------------------------------
    def log_softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = self._child(y, (self,))

        def _bw():
            probs = np.exp(y)
            self._accumulate(out.grad - probs * out.grad.sum(axis=axis, keepdims=True))
        out._backward = _bw
        return out

    def softmax(self, axis: int = -1) -> "Tensor":
        return self.log_softmax(axis=axis).exp()


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int) -> Tensor:
    """
    Valid (unpadded) 2-D convolution over NHWC input.

    Args:
        x (Tensor): input of shape (N, H, W, C)
        weight (Tensor): kernel of shape (kh, kw, C, O)
        bias (Tensor): bias of shape (O,)
        stride (int): stride along both spatial axes

    Returns:
        Tensor: output of shape (N, Ho, Wo, O)
    """
    n, h, w, c = x.shape
    kh, kw, cin, cout = weight.shape
    if cin != c:
        raise ShapeError(f"conv2d expects {cin} input channels, got {c}")
    if h < kh or w < kw:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than input {h}x{w}")

    windows = sliding_window_view(x.data, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = windows.shape[1], windows.shape[2]
    cols = np.ascontiguousarray(windows).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.transpose(2, 0, 1, 3).reshape(c * kh * kw, cout)
    y = (cols @ wmat).reshape(n, ho, wo, cout) + bias.data
    out = x._child(y, (x, weight, bias))

    def _bw():
        g = out.grad.reshape(n * ho * wo, cout)
        if weight.requires_grad:
            dw = (cols.T @ g).reshape(c, kh, kw, cout).transpose(1, 2, 0, 3)
            weight._accumulate(dw)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))
        if x.requires_grad:
            dcols = (g @ wmat.T).reshape(n, ho, wo, c, kh, kw)
            dx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    dx[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += (
                        dcols[..., i, j]
                    )
            x._accumulate(dx)
    out._backward = _bw
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    """Parents-before-children order of every tracked node reachable from root."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order
