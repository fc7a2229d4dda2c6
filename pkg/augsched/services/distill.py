"""
Distillation with augmented observations.

A frozen snapshot θ_old supplies cached policy/value targets on original
observations; the student θ is trained to match them on both the original
and the augmented observation. The same machinery drives the in-training DA
phases, the post-training ExDA stage and the anchor-free ExDrAC ablation.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from augsched.augment.transforms import AugmentationSpec, apply
from augsched.envs.gridworld import VecEnv
from augsched.nn.functional import js_distance, kl_categorical
from augsched.nn.gradients import backward
from augsched.nn.network import NetworkSpec, ParameterSet, forward, init_params, network_for
from augsched.nn.optim import AdamState, adam_step
from augsched.nn.tensor import Tensor
from augsched.services.ppo import sample_actions
from augsched.utils.errors import AugmentationError, ScheduleError
from augsched.utils.images import decode_obs, encode_obs

logger = structlog.get_logger("augsched")

# view index reserved for before/after measurements, never used by a training pass
MEASURE_VIEW = 2 ** 32 - 1


class DAConfig(BaseModel):
    """Distillation hyperparameters for DA phases and the ExDA stage"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(1e-4, gt=0.0)
    epochs: int = Field(3, ge=0)
    minibatch_size: int = Field(256, ge=1)
    include_value_term: bool = True
    anchor_kl_threshold: float = Field(0.05, gt=0.0)

    exda_buffer_size: int = Field(20000, ge=1)
    exda_minibatch_size: int = Field(256, ge=1)
    exda_lr: float = Field(1e-3, gt=0.0)
    exda_include_value_term: bool = False
    exda_refresh_every: int = Field(3, ge=1)
    reinitialize: bool = False
    reinit_seed: int = 0


@dataclass
class DistillBuffer:
    """Observations with the frozen teacher's cached logits and values"""
    obs: np.ndarray  # (N, H, W, C) uint8
    teacher_logits: np.ndarray  # (N, A)
    teacher_values: np.ndarray  # (N,)

    @classmethod
    def build(cls, teacher: ParameterSet, obs: np.ndarray) -> "DistillBuffer":
        obs = np.asarray(obs)
        if len(obs) == 0:
            raise ScheduleError("Cannot distill on an empty observation buffer", error_code="empty_buffer")
        out = forward(teacher, obs)
        return cls(obs=obs, teacher_logits=out.logits, teacher_values=out.values)

    def __len__(self) -> int:
        return int(self.obs.shape[0])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.teacher_logits).tobytes())
        h.update(np.ascontiguousarray(self.teacher_values).tobytes())
        return h.hexdigest()


def augmented_view(
    spec: AugmentationSpec, obs: np.ndarray, indices: np.ndarray, seed: int, pass_index: int
) -> np.ndarray:
    """
    φ(o) for the given buffer indices

    Each (pass, index) pair owns its rng stream, so a minibatch sees the same
    augmented frame the whole-buffer D_φ of that pass would hold.
    """
    images = decode_obs(obs[indices])
    if spec.is_identity:
        return images
    return np.stack([
        apply(spec, image, np.random.default_rng([seed, pass_index, int(i)]))
        for image, i in zip(images, indices)
    ])


def l_dis(
    weights: Mapping[str, Tensor],
    spec: NetworkSpec,
    obs: np.ndarray,
    teacher_logits: np.ndarray,
    teacher_values: np.ndarray,
    include_value: bool = True,
) -> Tensor:
    """
    E[KL(π_old(·|o) ‖ π_θ(·|x))] + E[(V_old(o) − V_θ(x))²]

    Args:
        weights (Mapping[str, Tensor]): student parameters
        spec (NetworkSpec): architecture
        obs (np.ndarray): student inputs x, i.e. o or φ(o), float (n, H, W, C)
        teacher_logits (np.ndarray): cached π_old logits on the original o
        teacher_values (np.ndarray): cached V_old on the original o
        include_value (bool): keep the value-matching term

    Returns:
        Tensor: scalar loss; gradients reach only the student
    """
    logits, values = network_for(spec)(weights, Tensor(obs))
    loss = kl_categorical(teacher_logits, logits).mean()
    if include_value:
        loss = loss + ((values - teacher_values) ** 2).mean()
    return loss


def l_da(
    weights: Mapping[str, Tensor],
    spec: NetworkSpec,
    obs: np.ndarray,
    augmented: np.ndarray,
    teacher_logits: np.ndarray,
    teacher_values: np.ndarray,
    include_value: bool = True,
) -> Tensor:
    """Anchor term on original inputs plus matching term on augmented inputs"""
    return (
        l_dis(weights, spec, obs, teacher_logits, teacher_values, include_value)
        + l_dis(weights, spec, augmented, teacher_logits, teacher_values, include_value)
    )


def self_inconsistency(
    weights: Mapping[str, Tensor],
    spec: NetworkSpec,
    obs: np.ndarray,
    augmented: np.ndarray,
    stop_gradient: bool = True,
    include_value: bool = True,
    original_outputs: Optional[Tuple[Tensor, Tensor]] = None,
) -> Tensor:
    """
    E[KL(π_θ(·|o) ‖ π_θ(·|φ(o)))] + E[(V_θ(o) − V_θ(φ(o)))²]

    With ``stop_gradient`` the original-observation branch is a constant
    target (DrAC); without it both branches carry gradient (ExDrAC).
    """
    net = network_for(spec)
    logits, values = original_outputs if original_outputs is not None else net(weights, Tensor(obs))
    if stop_gradient:
        logits, values = logits.detach(), values.detach()
    aug_logits, aug_values = net(weights, Tensor(augmented))
    loss = kl_categorical(logits, aug_logits).mean()
    if include_value:
        loss = loss + ((values - aug_values) ** 2).mean()
    return loss


def policy_distance(
    params: ParameterSet,
    obs: np.ndarray,
    spec: AugmentationSpec,
    rng: np.random.Generator,
    chunk_size: int = 256,
) -> float:
    """Mean JS divergence between π_θ(o) and π_θ(φ(o)), one fresh φ draw per observation"""
    obs = np.asarray(obs)
    if len(obs) == 0:
        raise ScheduleError("policy_distance needs at least one observation")
    if spec.is_identity:
        return 0.0
    distances = []
    for start in range(0, len(obs), chunk_size):
        chunk = obs[start:start + chunk_size]
        augmented = np.stack([apply(spec, image, rng) for image in chunk])
        distances.append(js_distance(forward(params, chunk).logits, forward(params, augmented).logits))
    return float(np.concatenate(distances).mean())


def anchor_kl(teacher_logits: np.ndarray, params: ParameterSet, obs: np.ndarray) -> float:
    """Mean KL(π_old ‖ π_θ) on the original observations"""
    return float(kl_categorical(teacher_logits, forward(params, obs).logits).data.mean())


def measure_self_inconsistency(
    params: ParameterSet,
    obs: np.ndarray,
    spec: AugmentationSpec,
    seed: int,
    include_value: bool = True,
    chunk_size: int = 256,
) -> float:
    """Self-inconsistency of ``params`` on a fixed augmented view of ``obs``, evaluated in chunks"""
    weights = params.constants()
    total = 0.0
    for start in range(0, len(obs), chunk_size):
        indices = np.arange(start, min(start + chunk_size, len(obs)))
        augmented = augmented_view(spec, obs, indices, seed, MEASURE_VIEW)
        loss = self_inconsistency(weights, params.spec, decode_obs(obs[indices]), augmented, include_value=include_value)
        total += loss.item() * len(indices)
    return total / len(obs)


@dataclass
class DistillStats:
    epochs: int = 0
    steps: int = 0
    losses: List[float] = field(default_factory=list)
    anchor_kl: Optional[float] = None
    inconsistency_before: Optional[float] = None
    inconsistency_after: Optional[float] = None
    teacher_digest: Optional[str] = None
    fill_steps: int = 0

    @property
    def final_loss(self) -> Optional[float]:
        return self.losses[-1] if self.losses else None


LossFn = Callable[[Mapping[str, Tensor], np.ndarray, np.ndarray], Tensor]


def _distill_epochs(
    params: ParameterSet,
    obs: np.ndarray,
    epochs: int,
    minibatch_size: int,
    lr: float,
    augmentation_for_epoch: Callable[[int], Tuple[AugmentationSpec, int]],
    loss_fn: LossFn,
    rng: np.random.Generator,
    stats: DistillStats,
) -> None:
    """Shared minibatch Adam loop; ``loss_fn(weights, indices, augmented)`` builds the loss"""
    adam = AdamState.for_params(params)
    seed = int(rng.integers(2 ** 63))
    n = len(obs)
    for epoch in range(epochs):
        spec, view = augmentation_for_epoch(epoch)
        permutation = rng.permutation(n)
        epoch_loss, batches = 0.0, 0
        for start in range(0, n, minibatch_size):
            indices = permutation[start:start + minibatch_size]
            augmented = augmented_view(spec, obs, indices, seed, view)
            weights = params.track()
            loss = loss_fn(weights, indices, augmented)
            adam_step(params, backward(loss, weights), adam, lr)
            epoch_loss += loss.item()
            batches += 1
            stats.steps += 1
        stats.losses.append(epoch_loss / max(batches, 1))
        stats.epochs += 1


def da_phase(
    params: ParameterSet,
    obs: np.ndarray,
    spec: AugmentationSpec,
    config: DAConfig,
    rng: np.random.Generator,
) -> Tuple[ParameterSet, DistillStats]:
    """
    One DA phase of in-training distillation, in place

    Args:
        params (ParameterSet): current θ; snapshotted as θ_old before training
        obs (np.ndarray): D_O, observations of the last rollouts (encoded or float)
        spec (AugmentationSpec): φ
        config (DAConfig): l_DA, epochs, minibatch size, value-term flag
        rng (np.random.Generator): shuffling and augmentation stream

    Returns:
        Tuple[ParameterSet, DistillStats]: updated θ and phase diagnostics

    Raises:
        ScheduleError: on an empty observation buffer
    """
    obs = encode_obs(obs) if np.asarray(obs).dtype != np.uint8 else np.asarray(obs)
    teacher = params.copy()
    buffer = DistillBuffer.build(teacher, obs)
    measure_seed = int(rng.integers(2 ** 63))
    stats = DistillStats(teacher_digest=buffer.digest())
    stats.inconsistency_before = measure_self_inconsistency(params, obs, spec, measure_seed, config.include_value_term)

    def loss_fn(weights, indices, augmented):
        return l_da(
            weights, params.spec, decode_obs(obs[indices]), augmented,
            buffer.teacher_logits[indices], buffer.teacher_values[indices], config.include_value_term,
        )

    _distill_epochs(
        params, obs, config.epochs, config.minibatch_size, config.lr,
        lambda epoch: (spec, epoch), loss_fn, rng, stats,
    )

    stats.anchor_kl = anchor_kl(buffer.teacher_logits, params, obs)
    stats.inconsistency_after = measure_self_inconsistency(params, obs, spec, measure_seed, config.include_value_term)
    if buffer.digest() != stats.teacher_digest:
        raise ScheduleError("Teacher targets changed during a DA phase", error_code="teacher_mutated")
    if stats.anchor_kl > config.anchor_kl_threshold:
        logger.warning("DA phase drifted from its anchor", anchor_kl=stats.anchor_kl, threshold=config.anchor_kl_threshold)
    logger.info(
        "DA phase finished",
        augmentation=spec.kind,
        samples=len(obs),
        loss=stats.final_loss,
        anchor_kl=stats.anchor_kl,
        inconsistency_before=stats.inconsistency_before,
        inconsistency_after=stats.inconsistency_after,
    )
    return params, stats


def fill_distill_buffer(
    params: ParameterSet, envs: VecEnv, size: int, rng: np.random.Generator
) -> Tuple[np.ndarray, int]:
    """
    Collect ``size`` observations along the stochastic policy's own trajectories

    Returns:
        Tuple[np.ndarray, int]: encoded observations and the env steps consumed
    """
    start_steps = envs.total_steps
    frames: List[np.ndarray] = []
    collected = 0
    obs = envs.observations
    while collected < size:
        frames.append(encode_obs(obs))
        collected += len(obs)
        actions = sample_actions(forward(params, obs).logits, rng)
        obs = envs.step(actions)[0]
    buffer = np.concatenate(frames)[:size]
    return buffer, envs.total_steps - start_steps


def exda(
    params: ParameterSet,
    envs: VecEnv,
    augmentations: Sequence[AugmentationSpec],
    config: DAConfig,
    epochs: int,
    rng: np.random.Generator,
    obs: Optional[np.ndarray] = None,
) -> Tuple[ParameterSet, DistillStats]:
    """
    Post-training distillation stage

    The pretrained policy fills the buffer (unless ``obs`` is given), then the
    student minimizes L_DA for ``epochs`` epochs with φ cycling through
    ``augmentations``; the augmented view is refreshed every
    ``config.exda_refresh_every`` epochs.

    Args:
        params (ParameterSet): pretrained θ, the teacher
        envs (VecEnv): train-mode environments for the buffer fill
        augmentations (Sequence[AugmentationSpec]): φ set, non-empty
        config (DAConfig): ExDA buffer, minibatch, lr and value-term settings
        epochs (int): M; 0 returns ``params`` untouched without filling
        rng (np.random.Generator): fill, shuffling and augmentation stream
        obs (Optional[np.ndarray]): pre-collected buffer

    Returns:
        Tuple[ParameterSet, DistillStats]: the distilled parameters and diagnostics
    """
    augmentations = list(augmentations)
    if not augmentations:
        raise AugmentationError("ExDA needs at least one augmentation", error_code="empty_augmentation_set")
    stats = DistillStats()
    if epochs == 0:
        logger.info("ExDA skipped", reason="zero epochs")
        return params, stats

    if obs is None:
        obs, stats.fill_steps = fill_distill_buffer(params, envs, config.exda_buffer_size, rng)
    teacher = params.copy()
    buffer = DistillBuffer.build(teacher, obs)
    stats.teacher_digest = buffer.digest()
    student = init_params(params.spec, config.reinit_seed, params.scale or 0.05) if config.reinitialize else params

    def augmentation_for_epoch(epoch: int) -> Tuple[AugmentationSpec, int]:
        block = epoch // config.exda_refresh_every
        return augmentations[block % len(augmentations)], block

    def loss_fn(weights, indices, augmented):
        return l_da(
            weights, params.spec, decode_obs(obs[indices]), augmented,
            buffer.teacher_logits[indices], buffer.teacher_values[indices], config.exda_include_value_term,
        )

    _distill_epochs(
        student, obs, epochs, config.exda_minibatch_size, config.exda_lr,
        augmentation_for_epoch, loss_fn, rng, stats,
    )
    stats.anchor_kl = anchor_kl(buffer.teacher_logits, student, obs)
    logger.info(
        "ExDA finished",
        augmentations=[a.kind for a in augmentations],
        epochs=epochs,
        samples=len(obs),
        fill_steps=stats.fill_steps,
        loss=stats.final_loss,
        anchor_kl=stats.anchor_kl,
    )
    return student, stats


def exdrac(
    params: ParameterSet,
    obs: np.ndarray,
    spec: AugmentationSpec,
    config: DAConfig,
    epochs: int,
    rng: np.random.Generator,
) -> Tuple[ParameterSet, DistillStats]:
    """
    Minimize the self-inconsistency alone, with no teacher anchor

    Both branches carry gradient, so a constant response is a minimizer.
    """
    obs = encode_obs(obs) if np.asarray(obs).dtype != np.uint8 else np.asarray(obs)
    stats = DistillStats()

    def augmentation_for_epoch(epoch: int) -> Tuple[AugmentationSpec, int]:
        return spec, epoch // config.exda_refresh_every

    def loss_fn(weights, indices, augmented):
        return self_inconsistency(
            weights, params.spec, decode_obs(obs[indices]), augmented,
            stop_gradient=False, include_value=config.exda_include_value_term,
        )

    _distill_epochs(
        params, obs, epochs, config.exda_minibatch_size, config.exda_lr,
        augmentation_for_epoch, loss_fn, rng, stats,
    )
    logger.info("ExDrAC finished", augmentation=spec.kind, epochs=epochs, loss=stats.final_loss)
    return params, stats
