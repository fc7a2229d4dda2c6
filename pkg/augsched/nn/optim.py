from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from augsched.nn.gradients import GradientSet
from augsched.nn.network import ParameterSet
from augsched.utils.errors import NumericalError, ShapeError


@dataclass
class AdamState:
    """First/second moments per parameter plus the bias-correction step counter"""
    m: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    v: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParameterSet, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m=OrderedDict((name, np.zeros_like(value)) for name, value in params.items()),
            v=OrderedDict((name, np.zeros_like(value)) for name, value in params.items()),
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    def copy(self) -> "AdamState":
        return AdamState(
            m=OrderedDict((k, a.copy()) for k, a in self.m.items()),
            v=OrderedDict((k, a.copy()) for k, a in self.v.items()),
            step=self.step,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )


def adam_step(
    params: ParameterSet, grads: GradientSet, state: AdamState, lr: float
) -> Tuple[ParameterSet, AdamState]:
    """
    One bias-corrected Adam update, applied in place

    Args:
        params (ParameterSet): parameters to update
        grads (GradientSet): gradients matching ``params``
        state (AdamState): optimizer moments, updated in place
        lr (float): learning rate

    Returns:
        Tuple[ParameterSet, AdamState]: the updated params and state

    Raises:
        ShapeError: if gradients do not match parameters
        NumericalError: if any gradient is non-finite (nothing is modified)
    """
    if grads.names() != params.names():
        raise ShapeError("Gradient names do not match parameters")
    for name, g in grads.items():
        if g.shape != params[name].shape or state.m[name].shape != g.shape:
            raise ShapeError(f"{name}: gradient/moment shape mismatch")
    if not grads.is_finite():
        raise NumericalError("Non-finite gradient passed to adam_step")

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name][...] -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
