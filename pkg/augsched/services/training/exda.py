"""Post-training distillation stages: ExDA and the anchor-free ExDrAC ablation."""
from pathlib import Path
from typing import List, Optional, Union

import structlog

from augsched.augment.transforms import AugmentationSpec
from augsched.config.experiment import ExperimentConfig
from augsched.services.distill import exda, exdrac, fill_distill_buffer
from augsched.services.training.base import BaseTrainer, TrainResult

logger = structlog.get_logger("augsched")


class ExDATrainer(BaseTrainer):
    """N epochs of plain PPO, then distillation of the pretrained policy with φ"""

    method = "exda"
    post_stage = "exda"

    def exda_augmentations(self) -> List[AugmentationSpec]:
        return [self.schedule.augmentation]

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


class ExDrACTrainer(BaseTrainer):
    """N epochs of plain PPO, then self-inconsistency minimization on an ExDA-sized buffer"""

    method = "exdrac"
    post_stage = "exdrac"

    def finalize(self) -> None:
        if self.schedule.exda_epochs == 0:
            logger.info("ExDrAC skipped", reason="zero epochs")
            return
        obs, steps = fill_distill_buffer(
            self.params, self.envs, self.config.da.exda_buffer_size, self.streams.distill
        )
        self.note_fill_steps(steps)
        self.params, stats = exdrac(
            self.params, obs, self.schedule.augmentation, self.config.da, self.schedule.exda_epochs, self.streams.distill
        )
        stats.fill_steps = steps
        self.da_stats.append(stats)


def run_exda_pipeline(
    config: ExperimentConfig, seed: int, run_dir: Optional[Union[str, Path]] = None
) -> TrainResult:
    """Plain PPO for ``schedule.epochs`` epochs followed by ExDA"""
    return ExDATrainer(config.for_run("exda"), seed, run_dir).train()


def run_exdrac_pipeline(
    config: ExperimentConfig, seed: int, run_dir: Optional[Union[str, Path]] = None
) -> TrainResult:
    return ExDrACTrainer(config.for_run("exdrac"), seed, run_dir).train()
