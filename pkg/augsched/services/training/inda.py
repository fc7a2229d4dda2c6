"""
Interleaved distillation: DA phases between PPO epochs inside a window,
with a fixed augmentation (InDA) or one picked per round by a windowed UCB
bandit (UCB-InDA, UCB-ExDA).
"""
from collections import deque
from pathlib import Path
from typing import Callable, Deque, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from augsched.augment.transforms import AugmentationSpec
from augsched.config.experiment import ExperimentConfig
from augsched.harness.metrics import MetricsSink
from augsched.services.bandit import BanditState, GainRecord, compute_gain, ucb_select, write_gain_log
from augsched.services.distill import da_phase, exda
from augsched.services.ppo import RolloutBuffer
from augsched.services.training.base import BaseTrainer, TrainResult

logger = structlog.get_logger("augsched")

# (arm index, [(advantages, values) per rollout]) -> gain
GainFn = Callable[[int, Sequence[Tuple[np.ndarray, np.ndarray]]], float]


class InDATrainer(BaseTrainer):
    """PPO with a DA phase on the last I rollouts at every scheduled epoch"""

    method = "inda"

    def __init__(self, config: ExperimentConfig, seed: int, run_dir=None, sink: Optional[MetricsSink] = None):
        super().__init__(config, seed, run_dir, sink)
        self.recent_obs: Deque[np.ndarray] = deque(maxlen=self.schedule.interval)

    def distill(self, augmentation: AugmentationSpec) -> None:
        obs = np.concatenate(list(self.recent_obs))
        self.params, stats = da_phase(self.params, obs, augmentation, self.config.da, self.streams.distill)
        self.note_da_phase(stats)

    def after_epoch(self, buffer: RolloutBuffer) -> None:
        self.recent_obs.append(buffer.flat_obs())
        if self.schedule.is_da_epoch(self.epoch):
            self.distill(self.schedule.augmentation)


class UCBInDATrainer(InDATrainer):
    """
    InDA where each round's augmentation is a bandit arm

    The identity arm skips the DA phase for its round. A round's gain is
    measured over the rollouts collected after its DA phase, up to the next
    scheduled round.
    """

    method = "ucb_inda"

    def __init__(
        self,
        config: ExperimentConfig,
        seed: int,
        run_dir=None,
        sink: Optional[MetricsSink] = None,
        gain_fn: Optional[GainFn] = None,
    ):
        super().__init__(config, seed, run_dir, sink)
        self.bandit = BanditState(list(config.augmentations), config.bandit)
        self.gain_fn = gain_fn
        self.pending: Optional[Tuple[int, int, np.ndarray, bool]] = None
        self.intervals: List[Tuple[np.ndarray, np.ndarray]] = []

    def close_round(self) -> None:
        if self.pending is None or not self.intervals:
            return
        round_, arm, scores, forced = self.pending
        gain = self.gain_fn(arm, self.intervals) if self.gain_fn else compute_gain(self.intervals)
        self.bandit.record(arm, gain)
        self.gain_records.append(GainRecord(round=round_, arm=arm, gain=gain, ucb=scores.tolist(), forced=forced))
        self.pending = None
        self.intervals = []

    def after_epoch(self, buffer: RolloutBuffer) -> None:
        self.recent_obs.append(buffer.flat_obs())
        if self.pending is not None:
            self.intervals.append((buffer.advantages.copy(), buffer.values.copy()))
        if not self.schedule.is_da_epoch(self.epoch):
            return
        self.close_round()
        arm, scores, forced = ucb_select(self.bandit)
        augmentation = self.bandit.arms[arm]
        logger.info(
            "Bandit selection",
            epoch=self.epoch,
            round=self.bandit.round,
            arm=arm,
            augmentation=augmentation.kind,
            forced=forced,
        )
        self.pending = (self.bandit.round, arm, scores, forced)
        if not augmentation.is_identity:
            self.distill(augmentation)

    def on_training_end(self) -> None:
        self.close_round()
        if self.run_dir is not None:
            write_gain_log(self.gain_records, self.bandit.num_arms, self.run_dir / "gains.csv")
        logger.info("Bandit summary", rounds=self.bandit.round, counts=self.bandit.counts.tolist())


class UCBExDATrainer(UCBInDATrainer):
    """UCB-InDA followed by ExDA over every non-identity arm"""

    method = "ucb_exda"
    post_stage = "exda"

    def exda_augmentations(self) -> List[AugmentationSpec]:
        arms = [arm for arm in self.bandit.arms if not arm.is_identity]
        return arms or [AugmentationSpec(kind="identity")]

    def finalize(self) -> None:
        self.params, stats = exda(
            self.params,
            self.envs,
            self.exda_augmentations(),
            self.config.da,
            self.schedule.exda_epochs,
            self.streams.distill,
        )
        self.da_stats.append(stats)
        self.note_fill_steps(stats.fill_steps)


def run_inda(
    config: ExperimentConfig, seed: int, run_dir: Optional[Union[str, Path]] = None
) -> TrainResult:
    return InDATrainer(config.for_run("inda"), seed, run_dir).train()


def run_ucb_inda(
    config: ExperimentConfig,
    seed: int,
    run_dir: Optional[Union[str, Path]] = None,
    gain_fn: Optional[GainFn] = None,
) -> TrainResult:
    return UCBInDATrainer(config.for_run("ucb_inda"), seed, run_dir, gain_fn=gain_fn).train()


def run_ucb_exda(
    config: ExperimentConfig,
    seed: int,
    run_dir: Optional[Union[str, Path]] = None,
    gain_fn: Optional[GainFn] = None,
) -> TrainResult:
    return UCBExDATrainer(config.for_run("ucb_exda"), seed, run_dir, gain_fn=gain_fn).train()
