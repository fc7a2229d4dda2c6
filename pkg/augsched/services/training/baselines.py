"""
Methods that put augmentation inside the RL update itself: RAD feeds
augmented observations to PPO, DrAC adds the self-inconsistency regularizer,
DrAC+PAGrad combines the two gradients without conflict.
"""
from typing import Dict, Tuple

import numpy as np
import structlog

from augsched.augment.transforms import AugmentationSpec, batch_apply
from augsched.nn.gradients import GradientSet, backward
from augsched.nn.network import ParameterSet, network_for
from augsched.nn.optim import AdamState
from augsched.nn.tensor import Tensor
from augsched.services.distill import self_inconsistency
from augsched.services.ppo import Minibatch, PPOConfig, PPOUpdater, RolloutBuffer, ppo_loss
from augsched.services.surgery import pagrad_combine
from augsched.services.training.base import BaseTrainer

logger = structlog.get_logger("augsched")

# slack on the aux/main alignment check of an applied PAGrad step
ALIGNMENT_TOLERANCE = 1e-12


class RADUpdater(PPOUpdater):
    """PPO where each minibatch observation is replaced by φ(o) with probability ½"""

    def __init__(self, config: PPOConfig, augmentation: AugmentationSpec, rng: np.random.Generator):
        super().__init__(config)
        self.augmentation = augmentation
        self.rng = rng

    def augment_batch(self, batch: Minibatch) -> Minibatch:
        if self.augmentation.is_identity:
            return batch
        replace = self.rng.random(len(batch.obs)) < 0.5
        obs = batch.obs.copy()
        if replace.any():
            obs[replace] = batch_apply(self.augmentation, batch.obs[replace], self.rng)
        return batch._replace(obs=obs)

    def minibatch_gradients(self, params: ParameterSet, batch: Minibatch) -> Tuple[GradientSet, Dict[str, float]]:
        return super().minibatch_gradients(params, self.augment_batch(batch))


class DrACUpdater(PPOUpdater):
    """Single combined loss L_PPO + α_r · L_dis(θ, φ; θ) per minibatch"""

    def __init__(
        self, config: PPOConfig, augmentation: AugmentationSpec, alpha_r: float, rng: np.random.Generator
    ):
        super().__init__(config)
        self.augmentation = augmentation
        self.alpha_r = alpha_r
        self.rng = rng

    def regularizer(self, weights, params: ParameterSet, batch: Minibatch, outputs) -> Tensor:
        augmented = batch_apply(self.augmentation, batch.obs, self.rng)
        return self_inconsistency(
            weights, params.spec, batch.obs, augmented, stop_gradient=True, original_outputs=outputs
        )

    def minibatch_gradients(self, params: ParameterSet, batch: Minibatch) -> Tuple[GradientSet, Dict[str, float]]:
        if self.alpha_r == 0.0:
            return super().minibatch_gradients(params, batch)
        weights = params.track()
        outputs = network_for(params.spec)(weights, Tensor(batch.obs))
        loss, components = ppo_loss(weights, params.spec, batch, self.config, outputs=outputs)
        reg = self.regularizer(weights, params, batch, outputs)
        total = loss + reg * self.alpha_r
        components["drac_regularizer"] = reg.item()
        components["loss"] = total.item()
        return backward(total, weights), components


class DrACPAGradUpdater(DrACUpdater):
    """
    DrAC with separately computed gradients combined by PAGrad

    Tracks how many steps had conflicting gradients and the smallest
    alignment ⟨u − g_main, g_main⟩ of an applied step.
    """

    def __init__(
        self,
        config: PPOConfig,
        augmentation: AugmentationSpec,
        alpha_r: float,
        rng: np.random.Generator,
        per_layer: bool = False,
    ):
        super().__init__(config, augmentation, alpha_r, rng)
        self.per_layer = per_layer
        self.conflicts = 0
        self.steps = 0
        self.min_alignment = float("inf")

    def minibatch_gradients(self, params: ParameterSet, batch: Minibatch) -> Tuple[GradientSet, Dict[str, float]]:
        main_weights = params.track()
        loss, components = ppo_loss(main_weights, params.spec, batch, self.config)
        g_main = backward(loss, main_weights)
        if self.alpha_r == 0.0:
            return g_main, components

        aux_weights = params.track()
        reg = self.regularizer(aux_weights, params, batch, None)
        g_aux = backward(reg, aux_weights) * self.alpha_r
        combined = pagrad_combine(g_main, g_aux, per_layer=self.per_layer)

        self.steps += 1
        if g_aux.dot(g_main) < 0.0:
            self.conflicts += 1
        alignment = (combined - g_main).dot(g_main)
        self.min_alignment = min(self.min_alignment, alignment)
        if alignment < -ALIGNMENT_TOLERANCE and not self.per_layer:
            logger.warning("PAGrad step opposes the main gradient", alignment=alignment)
        components["drac_regularizer"] = reg.item()
        components["loss"] = loss.item() + self.alpha_r * reg.item()
        return combined, components


class PPOTrainer(BaseTrainer):
    method = "ppo"


class RADTrainer(BaseTrainer):
    method = "rad"

    def make_updater(self) -> PPOUpdater:
        return RADUpdater(self.config.ppo, self.schedule.augmentation, self.streams.augment)


class DrACTrainer(BaseTrainer):
    method = "drac"

    def make_updater(self) -> PPOUpdater:
        return DrACUpdater(self.config.ppo, self.schedule.augmentation, self.schedule.alpha_r, self.streams.augment)


class DrACPAGradTrainer(BaseTrainer):
    method = "drac_pagrad"

    def make_updater(self) -> PPOUpdater:
        return DrACPAGradUpdater(
            self.config.ppo,
            self.schedule.augmentation,
            self.schedule.alpha_r,
            self.streams.augment,
            per_layer=self.schedule.pagrad_per_layer,
        )

    def on_training_end(self) -> None:
        updater = self.updater
        logger.info(
            "PAGrad summary",
            steps=updater.steps,
            conflicts=updater.conflicts,
            min_alignment=updater.min_alignment if updater.steps else None,
        )


def rad_update(
    params: ParameterSet,
    adam: AdamState,
    buffer: RolloutBuffer,
    augmentation: AugmentationSpec,
    config: PPOConfig,
    rng: np.random.Generator,
    augment_rng: np.random.Generator,
) -> ParameterSet:
    """One RAD update of ``params`` in place"""
    RADUpdater(config, augmentation, augment_rng).update(params, adam, buffer, rng)
    return params


def drac_update(
    params: ParameterSet,
    adam: AdamState,
    buffer: RolloutBuffer,
    augmentation: AugmentationSpec,
    alpha_r: float,
    config: PPOConfig,
    rng: np.random.Generator,
    augment_rng: np.random.Generator,
) -> ParameterSet:
    """One DrAC update of ``params`` in place"""
    DrACUpdater(config, augmentation, alpha_r, augment_rng).update(params, adam, buffer, rng)
    return params


def drac_pagrad_update(
    params: ParameterSet,
    adam: AdamState,
    buffer: RolloutBuffer,
    augmentation: AugmentationSpec,
    alpha_r: float,
    config: PPOConfig,
    rng: np.random.Generator,
    augment_rng: np.random.Generator,
    per_layer: bool = False,
) -> ParameterSet:
    """One DrAC+PAGrad update of ``params`` in place"""
    DrACPAGradUpdater(config, augmentation, alpha_r, augment_rng, per_layer).update(params, adam, buffer, rng)
    return params
