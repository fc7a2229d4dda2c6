"""
Windowed UCB over augmentation arms with forced exploration.

Each arm keeps the gains of its last W selections; the exploration
coefficient is recomputed every round so that the least-favoured arm can
still overtake the best one.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Deque, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field

from augsched.augment.transforms import AugmentationSpec
from augsched.utils.errors import ScheduleError

logger = structlog.get_logger("augsched")


class BanditConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    window: int = Field(3, ge=2)
    min_exploration: int = Field(15, ge=0)
    epsilon: float = Field(1e-3, ge=0.0)
    require_identity: bool = True


@dataclass
class BanditState:
    """Arm set Φ, pull counts, per-arm gain windows and the round counter"""
    arms: List[AugmentationSpec]
    config: BanditConfig = field(default_factory=BanditConfig)
    counts: np.ndarray = None
    gains: List[Deque[float]] = None
    round: int = 0

    def __post_init__(self):
        if not self.arms:
            raise ScheduleError("The bandit needs at least one arm", error_code="empty_arm_set")
        if self.config.require_identity and not any(arm.is_identity for arm in self.arms):
            raise ScheduleError(
                "The augmentation set must include identity", error_code="identity_arm_missing"
            )
        if self.counts is None:
            self.counts = np.zeros(len(self.arms), dtype=np.int64)
        if self.gains is None:
            self.gains = [deque(maxlen=self.config.window) for _ in self.arms]

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    def mean_gains(self) -> np.ndarray:
        """Windowed mean gain per arm (NaN for arms never pulled)"""
        return np.array([np.mean(g) if g else np.nan for g in self.gains])

    def record(self, arm: int, gain: float) -> None:
        self.counts[arm] += 1
        self.gains[arm].append(float(gain))
        self.round += 1


@dataclass
class GainRecord:
    round: int
    arm: int
    gain: float
    ucb: List[float]
    forced: bool


def exploration_coefficient(state: BanditState, s: int) -> float:
    """
    c such that the worst arm's UCB can reach the best arm's

    Uses the arms with the highest and lowest windowed mean (lowest index on
    ties). Returns 0 when log(s) is 0.
    """
    means = state.mean_gains()
    best, worst = int(np.nanargmax(means)), int(np.nanargmin(means))
    log_s = math.log(s)
    if log_s <= 0.0:
        return 0.0
    w = state.config.window
    spread = max(
        1.0 / math.sqrt(state.counts[worst]) - 1.0 / math.sqrt(state.counts[best]),
        1.0 / math.sqrt(w - 1) - 1.0 / math.sqrt(w),
    )
    return (means[best] - means[worst] + state.config.epsilon) / (math.sqrt(log_s) * spread)


def ucb_scores(state: BanditState, s: int) -> np.ndarray:
    c = exploration_coefficient(state, s)
    log_s = math.log(s) if s > 0 else 0.0
    return state.mean_gains() + c * np.sqrt(log_s / state.counts)


def ucb_select(state: BanditState, s: Optional[int] = None) -> Tuple[int, np.ndarray, bool]:
    """
    Choose the arm for round ``s``

    Args:
        state (BanditState): bandit bookkeeping
        s (Optional[int]): round index, defaults to ``state.round``

    Returns:
        Tuple[int, np.ndarray, bool]: arm index, UCB score per arm (NaN during
        forced rounds) and whether the choice was forced
    """
    s = state.round if s is None else s
    nan_scores = np.full(state.num_arms, np.nan)
    if s < state.config.min_exploration:
        return s % state.num_arms, nan_scores, True
    unpulled = np.flatnonzero(state.counts == 0)
    if unpulled.size:
        return int(unpulled[0]), nan_scores, True
    scores = ucb_scores(state, s)
    # np.argmax returns the first maximum, i.e. the lowest arm index on ties
    return int(np.argmax(scores)), scores, False


def compute_gain(intervals: Sequence[Tuple[np.ndarray, np.ndarray]]) -> float:
    """
    Mean over rollouts of the per-rollout mean of (Â_t + V(o_t))

    Args:
        intervals (Sequence[Tuple[np.ndarray, np.ndarray]]): (advantages, values) per rollout

    Returns:
        float: G(s)
    """
    if not intervals:
        raise ScheduleError("compute_gain needs at least one rollout")
    return float(np.mean([np.mean(np.asarray(adv) + np.asarray(val)) for adv, val in intervals]))


def write_gain_log(records: Sequence[GainRecord], num_arms: int, path: Union[str, Path]) -> Path:
    """CSV with columns round,arm,gain,ucb_0..ucb_{K-1},forced"""
    path = Path(path)
    rows = []
    for rec in records:
        row = {"round": rec.round, "arm": rec.arm, "gain": rec.gain}
        row.update({f"ucb_{k}": rec.ucb[k] for k in range(num_arms)})
        row["forced"] = int(rec.forced)
        rows.append(row)
    columns = ["round", "arm", "gain"] + [f"ucb_{k}" for k in range(num_arms)] + ["forced"]
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format="%.17g")
    return path
