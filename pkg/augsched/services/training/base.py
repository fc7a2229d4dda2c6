from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import structlog

from augsched.config.experiment import ExperimentConfig
from augsched.envs.gridworld import EnvMode, make_vec_env
from augsched.harness.evaluate import evaluate
from augsched.harness.metrics import MetricsRow, MetricsSink
from augsched.nn.checkpoint import save_checkpoint
from augsched.nn.network import ParameterSet, init_params
from augsched.nn.optim import AdamState
from augsched.services.bandit import GainRecord
from augsched.services.distill import DistillStats, policy_distance
from augsched.services.ppo import PPOUpdater, RewardNormalizer, RolloutBuffer, collect_rollout, process_rollout

# Set up logger
logger = structlog.get_logger("augsched")

STREAM_POLICY, STREAM_SHUFFLE, STREAM_AUGMENT, STREAM_DISTILL, STREAM_DISTANCE = range(1, 6)


@dataclass
class RngStreams:
    """Independent named random streams of one run, all derived from the run seed"""
    seed: int

    def __post_init__(self):
        self.policy = np.random.default_rng([self.seed, STREAM_POLICY])
        self.shuffle = np.random.default_rng([self.seed, STREAM_SHUFFLE])
        self.augment = np.random.default_rng([self.seed, STREAM_AUGMENT])
        self.distill = np.random.default_rng([self.seed, STREAM_DISTILL])

    def distance(self, epoch: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, STREAM_DISTANCE, epoch])


@dataclass
class TrainResult:
    method: str
    seed: int
    params: ParameterSet
    adam: AdamState
    rows: List[MetricsRow] = field(default_factory=list)
    gain_records: List[GainRecord] = field(default_factory=list)
    da_stats: List[DistillStats] = field(default_factory=list)
    da_phases: int = 0
    env_steps: int = 0
    fill_steps: int = 0
    updates: int = 0
    pretrained: Optional[ParameterSet] = None
    checkpoint: Optional[Path] = None

    @property
    def final_row(self) -> Optional[MetricsRow]:
        return self.rows[-1] if self.rows else None


class BaseTrainer:
    """
    Plain PPO training loop with hooks for the augmentation methods

    Subclasses override ``make_updater`` (what one minibatch step optimizes),
    ``after_epoch`` (distillation rounds during training) and ``finalize``
    (a distillation stage after training).
    """

    method = "ppo"
    post_stage: Optional[str] = None

    def __init__(
        self,
        config: ExperimentConfig,
        seed: int,
        run_dir: Optional[Union[str, Path]] = None,
        sink: Optional[MetricsSink] = None,
    ):
        """
        Initialize trainer

        Args:
            config (ExperimentConfig): experiment configuration
            seed (int): run seed; every random stream derives from it
            run_dir (Optional[Union[str, Path]]): where metrics and checkpoints go; None keeps them in memory
            sink (Optional[MetricsSink]): metrics sink override
        """
        self.config = config
        self.schedule = config.schedule
        self.seed = int(seed)
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.streams = RngStreams(self.seed)
        self.params = init_params(config.network, self.seed, config.init_scale)
        self.adam = AdamState.for_params(self.params)
        self.envs = make_vec_env(config.env, EnvMode.EASYBG, config.ppo.num_envs, self.seed)
        self.normalizer = RewardNormalizer(config.ppo.num_envs, config.ppo.gamma) if config.ppo.reward_norm else None
        self.sink = sink or MetricsSink(self.method, self.seed, self.run_dir)
        self.updater = self.make_updater()

        self.epoch = 0
        self.rl_steps = 0
        self.fill_steps = 0
        self.da_phases = 0
        self.da_stats: List[DistillStats] = []
        self.gain_records: List[GainRecord] = []
        self.pretrained: Optional[ParameterSet] = None
        self.last_buffer: Optional[RolloutBuffer] = None
        self.last_components: Dict[str, float] = {}
        self._da_this_epoch = False

    def make_updater(self) -> PPOUpdater:
        return PPOUpdater(self.config.ppo)

    # ------------------------------
    # Loop
    # ------------------------------
    def rl_epoch(self) -> RolloutBuffer:
        """One rollout followed by one PPO update"""
        ppo = self.config.ppo
        start = self.envs.total_steps
        buffer = collect_rollout(self.params, self.envs, ppo.num_steps, self.streams.policy, self.normalizer)
        process_rollout(buffer, ppo)
        steps = self.envs.total_steps - start
        self.rl_steps += steps
        self.sink.env_steps.inc(steps)

        updates_before = self.updater.updates
        self.last_components = self.updater.update(self.params, self.adam, buffer, self.streams.shuffle)
        self.sink.updates.inc(self.updater.updates - updates_before)
        self.last_buffer = buffer
        return buffer

    def after_epoch(self, buffer: RolloutBuffer) -> None:
        """Hook run after every RL epoch"""

    def on_training_end(self) -> None:
        """Hook run once after the last RL epoch, before any post stage"""

    def finalize(self) -> None:
        """Post-training stage; only called when ``post_stage`` is set"""

    def note_da_phase(self, stats: DistillStats) -> None:
        self.da_phases += 1
        self.da_stats.append(stats)
        self.sink.da_phases.inc()
        self._da_this_epoch = True

    def note_fill_steps(self, steps: int) -> None:
        self.fill_steps += steps
        self.sink.exda_fill_steps.inc(steps)

    def train(self) -> TrainResult:
        """
        Run the full schedule

        Returns:
            TrainResult: final parameters, metrics rows and bookkeeping
        """
        epochs = self.schedule.epochs
        structlog.contextvars.bind_contextvars(method=self.method, seed=self.seed)
        logger.info("Run started", epochs=epochs, num_envs=self.config.ppo.num_envs)
        try:
            for n in range(1, epochs + 1):
                self.epoch = n
                self._da_this_epoch = False
                buffer = self.rl_epoch()
                self.after_epoch(buffer)
                if n % self.config.eval_every == 0 or n == epochs:
                    self.record_metrics()
            if epochs == 0:
                self.record_metrics()
            self.on_training_end()

            if self.post_stage is not None:
                self.pretrained = self.params.copy()
                if self.run_dir is not None:
                    save_checkpoint(self.pretrained, self.adam, self.run_dir / "pretrained.ckpt")
                self.finalize()
                self.record_metrics(stage=self.post_stage)

            checkpoint = None
            if self.run_dir is not None:
                checkpoint = save_checkpoint(self.params, self.adam, self.run_dir / "final.ckpt")
            logger.info(
                "Run finished",
                env_steps=self.rl_steps,
                fill_steps=self.fill_steps,
                da_phases=self.da_phases,
                train_return=self.sink.rows[-1].train_return if self.sink.rows else None,
            )
            return TrainResult(
                method=self.method,
                seed=self.seed,
                params=self.params,
                adam=self.adam,
                rows=list(self.sink.rows),
                gain_records=list(self.gain_records),
                da_stats=list(self.da_stats),
                da_phases=self.da_phases,
                env_steps=self.rl_steps,
                fill_steps=self.fill_steps,
                updates=self.updater.updates,
                pretrained=self.pretrained,
                checkpoint=checkpoint,
            )
        finally:
            self.sink.close()
            structlog.contextvars.unbind_contextvars("method", "seed")

    # ------------------------------
    # Metrics
    # ------------------------------
    def record_metrics(self, stage: str = "rl") -> MetricsRow:
        """Evaluate on all three modes and append a metrics row"""
        cfg = self.config
        returns = {
            mode: evaluate(self.params, cfg.env, mode, cfg.eval_episodes, self.seed).mean_return
            for mode in EnvMode
        }
        distance = None
        rollout_return = None
        if self.last_buffer is not None:
            obs = self.last_buffer.flat_obs()
            distance = policy_distance(self.params, obs, self.schedule.augmentation, self.streams.distance(self.epoch))
            if self.last_buffer.episode_returns:
                rollout_return = float(np.mean(self.last_buffer.episode_returns))
        last_da = self.da_stats[-1] if self.da_stats else None
        row = MetricsRow(
            env_steps=self.rl_steps,
            exda_fill_steps=self.fill_steps,
            epoch=self.epoch,
            stage=stage,
            method=self.method,
            seed=self.seed,
            train_return=returns[EnvMode.EASYBG],
            test_bg_return=returns[EnvMode.TEST_BG],
            test_lv_return=returns[EnvMode.TEST_LV],
            rollout_return=rollout_return,
            policy_objective=self.last_components.get("policy_objective"),
            value_loss=self.last_components.get("value_loss"),
            entropy=self.last_components.get("entropy"),
            da_loss=last_da.final_loss if last_da else None,
            anchor_kl=last_da.anchor_kl if last_da else None,
            policy_distance=distance,
            da_phase=self._da_this_epoch,
            da_phases=self.da_phases,
        )
        logger.info(
            "Evaluation",
            epoch=self.epoch,
            stage=stage,
            train=row.train_return,
            test_bg=row.test_bg_return,
            test_lv=row.test_lv_return,
        )
        return self.sink.record(row)
