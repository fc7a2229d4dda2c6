"""Divergences between categorical policies given as logits."""
from __future__ import annotations

from typing import Union

import numpy as np

from augsched.nn.tensor import Tensor
from augsched.utils.errors import ShapeError

LN2 = float(np.log(2.0))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def kl_categorical(p_logits: Union[Tensor, np.ndarray], q_logits: Union[Tensor, np.ndarray]) -> Tensor:
    """
    KL[softmax(p) || softmax(q)] along the last axis

    Either argument may be a tracked Tensor; constants are wrapped. For a
    batch (N, K) the result is the (N,) vector of per-row divergences.
    """
    p = p_logits if isinstance(p_logits, Tensor) else Tensor(p_logits)
    q = q_logits if isinstance(q_logits, Tensor) else Tensor(q_logits)
    if p.shape != q.shape:
        raise ShapeError(f"kl_categorical: shapes differ {p.shape} vs {q.shape}")
    log_p = p.log_softmax(axis=-1)
    log_q = q.log_softmax(axis=-1)
    return (log_p.exp() * (log_p - log_q)).sum(axis=-1)


def js_distance(p_logits: np.ndarray, q_logits: np.ndarray) -> np.ndarray:
    """
    Jensen-Shannon divergence between softmax(p) and softmax(q), in [0, ln 2]

    Mixture m = (p + q) / 2 is formed in probability space. Works row-wise on
    batches; returns a scalar ndarray for 1-D inputs.
    """
    p_logits = np.asarray(p_logits, dtype=np.float64)
    q_logits = np.asarray(q_logits, dtype=np.float64)
    if p_logits.shape != q_logits.shape:
        raise ShapeError(f"js_distance: shapes differ {p_logits.shape} vs {q_logits.shape}")
    log_p, log_q = log_softmax(p_logits), log_softmax(q_logits)
    p, q = np.exp(log_p), np.exp(log_q)
    log_m = np.logaddexp(log_p, log_q) - LN2
    # xlogy convention: zero-probability terms contribute nothing
    kl_pm = np.where(p > 0, p * (log_p - log_m), 0.0).sum(axis=-1)
    kl_qm = np.where(q > 0, q * (log_q - log_m), 0.0).sum(axis=-1)
    return np.clip(0.5 * kl_pm + 0.5 * kl_qm, 0.0, LN2)
