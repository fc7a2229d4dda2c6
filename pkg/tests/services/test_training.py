import numpy as np
import pytest

from augsched.augment.transforms import AugmentationSpec, batch_apply
from augsched.envs.gridworld import make_vec_env
from augsched.harness.metrics import read_metrics_csv
from augsched.nn.gradients import backward
from augsched.nn.network import forward
from augsched.nn.optim import AdamState
from augsched.nn.tensor import Tensor
from augsched.services.bandit import BanditConfig
from augsched.services.distill import DAConfig, self_inconsistency
from augsched.services.ppo import Minibatch, PPOConfig, collect_rollout, make_minibatch, ppo_loss, process_rollout
from augsched.services.training.baselines import DrACPAGradTrainer, DrACUpdater, drac_pagrad_update, drac_update
from augsched.services.training.exda import run_exda_pipeline, run_exdrac_pipeline
from augsched.services.training.inda import InDATrainer, UCBInDATrainer, run_inda, run_ucb_exda, run_ucb_inda
from augsched.services.training.orchestrator import METHOD_TRAINERS, TrainingOrchestrator, run_method
from augsched.services.training.schedule import METHODS
from augsched.utils.errors import ScheduleError
from tests.helpers import assert_gradients_close, numerical_gradient

GRAY = AugmentationSpec(kind="grayscale")


@pytest.fixture
def ppo_result(make_experiment):
    """Reference plain PPO run every equivalence is compared against"""
    return run_method(make_experiment("ppo"), "ppo", seed=0)


class TestDegenerateEquivalences:
    """Methods whose augmentation is switched off reproduce plain PPO exactly"""

    def test_inda_with_empty_window(self, make_experiment, ppo_result):
        result = run_inda(make_experiment("inda", window_start=0, window_end=0), seed=0)
        assert result.da_phases == 0
        assert result.params.equals(ppo_result.params)

    def test_drac_with_zero_alpha(self, make_experiment, ppo_result):
        result = run_method(make_experiment("drac", alpha_r=0.0, augmentation="grayscale"), "drac", seed=0)
        assert result.params.equals(ppo_result.params)

    def test_rad_with_identity(self, make_experiment, ppo_result):
        result = run_method(make_experiment("rad", augmentation="identity"), "rad", seed=0)
        assert result.params.equals(ppo_result.params)

    def test_exda_with_zero_epochs(self, make_experiment, ppo_result):
        result = run_exda_pipeline(make_experiment("exda", exda_epochs=0), seed=0)
        assert result.params.equals(ppo_result.params)
        assert result.fill_steps == 0
        assert result.final_row.stage == "exda"

    def test_ucb_with_identity_only(self, make_experiment, ppo_result):
        """A bandit whose only arm is identity never distills"""
        config = make_experiment("ucb_inda", augmentations=["identity"], bandit=BanditConfig(min_exploration=0))
        result = run_ucb_inda(config, seed=0)
        assert result.da_phases == 0
        assert result.params.equals(ppo_result.params)

    def test_same_seed_same_params(self, make_experiment, ppo_result):
        """Runs are reproducible from the seed"""
        assert run_method(make_experiment("ppo"), "ppo", seed=0).params.digest() == ppo_result.params.digest()

    def test_augmentation_changes_training(self, make_experiment, ppo_result):
        result = run_method(make_experiment("rad", augmentation="grayscale"), "rad", seed=0)
        assert not result.params.equals(ppo_result.params)


class TestInDA:
    """Interleaved distillation"""

    def test_phase_count_follows_schedule(self, make_experiment):
        """N = 6, I = 2 distills after epochs 1, 3 and 5"""
        config = make_experiment("inda", epochs=6, interval=2, augmentation="grayscale")
        trainer = InDATrainer(config, seed=0)
        result = trainer.train()
        assert result.da_phases == 3 and len(result.da_stats) == 3
        assert trainer.recent_obs.maxlen == 2
        assert result.env_steps == 6 * 2 * 8

    def test_metrics_rows(self, make_experiment):
        """Rows every eval_every epochs plus the last epoch"""
        result = run_inda(make_experiment("inda", epochs=4, augmentation="grayscale"), seed=0)
        assert [row.epoch for row in result.rows] == [3, 4]
        assert result.rows[-1].da_phases == 4
        assert result.rows[-1].anchor_kl is not None

    def test_every_phase_stays_anchored(self, make_experiment):
        """Across 20 phases the student stays near its snapshot and grows more consistent"""
        result = run_inda(make_experiment("inda", epochs=20, interval=1, augmentation="grayscale"), seed=0)
        assert result.da_phases == 20
        for stats in result.da_stats:
            assert stats.anchor_kl < 0.05
            assert stats.inconsistency_after < stats.inconsistency_before

    def test_zero_epochs_still_reports(self, make_experiment):
        result = run_inda(make_experiment("inda", epochs=0), seed=0)
        assert len(result.rows) == 1 and result.env_steps == 0


class TestUCB:
    """Bandit-scheduled distillation"""

    def make_config(self, make_experiment, **schedule):
        return make_experiment(
            "ucb_inda",
            augmentations=["identity", "grayscale"],
            bandit=BanditConfig(min_exploration=2),
            **{"epochs": 10, "interval": 1, **schedule},
        )

    def test_mock_gain_favours_better_arm(self, make_experiment):
        """With a constant gain for the grayscale arm the bandit pulls it most"""
        trainer = UCBInDATrainer(
            self.make_config(make_experiment), seed=0, gain_fn=lambda arm, intervals: 1.0 if arm == 1 else 0.0
        )
        result = trainer.train()
        # the round selected at the last epoch never sees a rollout
        assert len(result.gain_records) == 9
        counts = trainer.bandit.counts
        assert counts.sum() == 9 and counts[1] > counts[0]
        pulled_last = int(trainer.pending[1] == 1) if trainer.pending else 0
        assert result.da_phases == sum(r.arm == 1 for r in result.gain_records) + pulled_last
        assert [r.forced for r in result.gain_records[:2]] == [True, True]

    def test_gain_records_are_deterministic(self, make_experiment, tmp_path):
        """Same seed, same arms and gains; the log lands in the run directory"""
        config = self.make_config(make_experiment, epochs=5)
        a = run_ucb_inda(config, seed=0, run_dir=tmp_path / "a")
        b = run_ucb_inda(config, seed=0)
        assert [(r.arm, r.gain) for r in a.gain_records] == [(r.arm, r.gain) for r in b.gain_records]
        assert (tmp_path / "a" / "gains.csv").exists()

    def test_gain_fn_receives_rollouts_of_the_round(self, make_experiment):
        """With interval 2 each closed round has seen two rollouts"""
        seen = []

        def gain_fn(arm, intervals):
            seen.append(len(intervals))
            return 0.0

        run_ucb_inda(self.make_config(make_experiment, epochs=7, interval=2), seed=0, gain_fn=gain_fn)
        assert seen == [2, 2, 2]

    def test_ucb_exda_distills_non_identity_arms(self, make_experiment):
        config = self.make_config(make_experiment, epochs=3, exda_epochs=1)
        result = run_ucb_exda(config, seed=0)
        assert result.pretrained is not None
        assert result.fill_steps == 16
        assert result.final_row.stage == "exda"


class TestPostTrainingStages:
    """ExDA and ExDrAC pipelines"""

    def test_exda_writes_checkpoints(self, make_experiment, tmp_path):
        result = run_exda_pipeline(make_experiment("exda", augmentation="grayscale"), seed=0, run_dir=tmp_path)
        assert (tmp_path / "pretrained.ckpt").exists() and result.checkpoint == tmp_path / "final.ckpt"
        assert not result.params.equals(result.pretrained)
        assert result.env_steps == 3 * 2 * 8 and result.fill_steps == 16
        frame = read_metrics_csv(tmp_path / "metrics.csv")
        assert frame["stage"].tolist() == ["rl", "exda"]
        assert frame["exda_fill_steps"].tolist() == [0, 16]

    def test_exdrac_runs(self, make_experiment):
        result = run_exdrac_pipeline(make_experiment("exdrac", augmentation="grayscale"), seed=0)
        assert result.final_row.stage == "exdrac"
        assert result.fill_steps == 16 and len(result.da_stats) == 1

    def test_exdrac_with_zero_epochs(self, make_experiment, ppo_result):
        result = run_exdrac_pipeline(make_experiment("exdrac", exda_epochs=0), seed=0)
        assert result.fill_steps == 0
        assert result.params.equals(ppo_result.params)


class TestPAGrad:
    def test_counts_every_minibatch_step(self, make_experiment):
        trainer = DrACPAGradTrainer(make_experiment("drac_pagrad", augmentation="grayscale", alpha_r=1.0), seed=0)
        result = trainer.train()
        assert trainer.updater.steps == result.updates == 3 * 2
        assert trainer.updater.min_alignment >= -1e-9

    def test_matches_drac_without_conflict(self, tiny_params, tiny_env_config):
        """When the consistency gradient never opposes the PPO gradient both methods take the same step"""
        config = PPOConfig(
            num_envs=2, num_steps=8, epochs=1, minibatches=1,
            value_coef=0.0, entropy_coef=0.0, normalize_advantages=False,
        )
        envs = make_vec_env(tiny_env_config, "easybg", 2, seed=0)
        buffer = process_rollout(collect_rollout(tiny_params, envs, 8, np.random.default_rng(0)), config)
        batch = make_minibatch(buffer, np.arange(len(buffer)))

        weights = tiny_params.track()
        g_main = backward(ppo_loss(weights, tiny_params.spec, batch, config)[0], weights)
        weights = tiny_params.track()
        augmented = batch_apply(GRAY, batch.obs, np.random.default_rng(0))
        g_aux = backward(self_inconsistency(weights, tiny_params.spec, batch.obs, augmented), weights)
        if g_aux.dot(g_main) < 0.0:
            # with only the surrogate term the PPO gradient is linear in the advantages
            buffer.advantages = -buffer.advantages
            g_main = g_main * -1.0
        assert g_aux.dot(g_main) > 0.0

        results = []
        for update in (drac_update, drac_pagrad_update):
            params = tiny_params.copy()
            update(params, AdamState.for_params(params), buffer, GRAY, 0.1, config,
                   np.random.default_rng(1), np.random.default_rng(2))
            results.append(params)
        drac, pagrad = results
        assert not drac.equals(tiny_params)
        for name, value in drac.items():
            np.testing.assert_allclose(pagrad[name], value, rtol=1e-7, atol=1e-10, err_msg=name)


class TestOrchestrator:
    def test_registry_covers_every_method(self):
        assert set(METHOD_TRAINERS) == set(METHODS)

    def test_unknown_method(self, make_experiment):
        with pytest.raises(ScheduleError):
            TrainingOrchestrator(make_experiment()).trainer_for("mixreg", seed=0)

    def test_trainer_gets_its_method(self, make_experiment):
        trainer = TrainingOrchestrator(make_experiment("ppo")).trainer_for("inda", seed=0)
        assert isinstance(trainer, InDATrainer) and trainer.schedule.method == "inda"


def ppo_minibatch(params, obs):
    """Six transitions whose probability ratios stay well inside the clip range"""
    rng = np.random.default_rng(7)
    actions = np.array([0, 1, 2, 3, 1, 2])
    log_probs = forward(params, obs).log_probs()
    return Minibatch(
        obs=obs,
        actions=actions,
        advantages=rng.normal(size=6),
        returns=rng.normal(size=6),
        log_probs_old=log_probs[np.arange(6), actions] + rng.uniform(-0.05, 0.05, size=6),
    )


class TestDrACGradients:
    """Gradient of the regularized PPO step"""

    def test_combined_loss_matches_finite_differences(self, tiny_params, obs_batch):
        """L_PPO + alpha_r * consistency, with the original-observation branch held fixed"""
        config = PPOConfig()
        batch = ppo_minibatch(tiny_params, obs_batch)
        updater = DrACUpdater(config, GRAY, 0.1, np.random.default_rng(0))
        analytic, components = updater.minibatch_gradients(tiny_params, batch)

        current = forward(tiny_params, obs_batch)
        targets = (Tensor(current.logits), Tensor(current.values))
        augmented = batch_apply(GRAY, obs_batch, np.random.default_rng(0))

        def total():
            weights = tiny_params.constants()
            loss, _ = ppo_loss(weights, tiny_params.spec, batch, config)
            reg = self_inconsistency(weights, tiny_params.spec, obs_batch, augmented, original_outputs=targets)
            return (loss + reg * 0.1).item()

        assert_gradients_close(analytic, numerical_gradient(total, tiny_params))
        assert components["drac_regularizer"] > 0.0
