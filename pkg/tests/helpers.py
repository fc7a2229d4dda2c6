from typing import Callable, Dict

import numpy as np

from augsched.nn.network import ParameterSet


def numerical_gradient(fn: Callable[[], float], params: ParameterSet, h: float = 1e-5) -> Dict[str, np.ndarray]:
    """Central finite differences of ``fn()`` w.r.t. every entry of ``params``, perturbed in place"""
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + h
            plus = fn()
            value[index] = original - h
            minus = fn()
            value[index] = original
            grad[index] = (plus - minus) / (2.0 * h)
        grads[name] = grad
    return grads


def assert_gradients_close(analytic, numeric: Dict[str, np.ndarray], rtol: float = 1e-4, atol: float = 1e-7) -> None:
    for name, expected in numeric.items():
        np.testing.assert_allclose(analytic[name], expected, rtol=rtol, atol=atol, err_msg=name)
