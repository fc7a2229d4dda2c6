import numpy as np
import pytest

from augsched.augment.transforms import AugmentationSpec, batch_apply
from augsched.envs.gridworld import make_vec_env
from augsched.nn.gradients import backward
from augsched.nn.functional import js_distance
from augsched.nn.network import forward, init_params
from augsched.services.distill import (
    DAConfig,
    DistillBuffer,
    augmented_view,
    da_phase,
    exda,
    exdrac,
    fill_distill_buffer,
    l_da,
    policy_distance,
    self_inconsistency,
)
from augsched.utils.errors import AugmentationError, ScheduleError
from augsched.utils.images import encode_obs
from tests.helpers import assert_gradients_close, numerical_gradient

GRAY = AugmentationSpec(kind="grayscale")


class TestDistillLosses:
    """Distillation objectives"""

    def test_l_da_gradient(self, tiny_params, tiny_spec, obs_batch):
        """Gradient of the anchor plus augmented matching loss agrees with finite differences"""
        teacher = forward(init_params(tiny_spec, seed=1, scale=0.3), obs_batch)
        augmented = augmented_view(GRAY, encode_obs(obs_batch), np.arange(6), seed=0, pass_index=0)

        def loss(weights):
            return l_da(weights, tiny_spec, obs_batch, augmented, teacher.logits, teacher.values)

        weights = tiny_params.track()
        analytic = backward(loss(weights), weights)
        numeric = numerical_gradient(lambda: loss(tiny_params.constants()).item(), tiny_params)
        assert_gradients_close(analytic, numeric)

    def test_l_da_zero_at_teacher_for_identity(self, tiny_params, tiny_spec, obs_batch):
        """The teacher itself has zero loss when the view is unaugmented"""
        teacher = forward(tiny_params, obs_batch)
        loss = l_da(tiny_params.constants(), tiny_spec, obs_batch, obs_batch, teacher.logits, teacher.values)
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_augmented_view_is_reproducible_per_index(self, obs_batch):
        """A minibatch view equals the matching rows of the full-buffer view"""
        spec = AugmentationSpec(kind="cutout_color")
        encoded = encode_obs(obs_batch)
        full = augmented_view(spec, encoded, np.arange(6), seed=3, pass_index=1)
        part = augmented_view(spec, encoded, np.array([4, 1]), seed=3, pass_index=1)
        np.testing.assert_array_equal(part, full[[4, 1]])

    def test_empty_buffer(self, tiny_params):
        """Distilling on no observations is a schedule error"""
        with pytest.raises(ScheduleError):
            DistillBuffer.build(tiny_params, np.zeros((0, 8, 8, 3), dtype=np.uint8))


class TestPolicyDistance:
    """Jensen-Shannon distance between original and augmented policies"""

    def test_identity_is_zero(self, tiny_params, obs_batch):
        assert policy_distance(tiny_params, obs_batch, AugmentationSpec(), np.random.default_rng(0)) == 0.0

    def test_bounded(self, tiny_params, obs_batch):
        """Distances lie in [0, ln 2]"""
        d = policy_distance(tiny_params, obs_batch, AugmentationSpec(kind="black"), np.random.default_rng(0))
        assert 0.0 <= d <= np.log(2)

    def test_chunking_does_not_change_result(self, tiny_params, obs_batch):
        """Chunk size only affects memory"""
        a = policy_distance(tiny_params, obs_batch, GRAY, np.random.default_rng(0), chunk_size=2)
        b = policy_distance(tiny_params, obs_batch, GRAY, np.random.default_rng(0), chunk_size=256)
        assert a == pytest.approx(b, abs=1e-12)


class TestDAPhase:
    """In-training distillation phase"""

    def test_phase_stays_anchored_and_reduces_inconsistency(self, tiny_params, obs_batch):
        """The student keeps close to its snapshot while becoming more consistent"""
        config = DAConfig(lr=1e-3, epochs=30, minibatch_size=6)
        params = tiny_params.copy()
        params, stats = da_phase(params, obs_batch, GRAY, config, np.random.default_rng(0))
        assert stats.epochs == 30 and stats.steps == 30
        assert stats.anchor_kl < 0.05
        assert stats.inconsistency_after < stats.inconsistency_before
        assert not params.equals(tiny_params)

    def test_teacher_targets_are_frozen(self, tiny_params, obs_batch):
        """The recorded teacher digest matches a rebuild from the original parameters"""
        _, stats = da_phase(tiny_params.copy(), obs_batch, GRAY, DAConfig(epochs=2, minibatch_size=4), np.random.default_rng(0))
        assert stats.teacher_digest == DistillBuffer.build(tiny_params, encode_obs(obs_batch)).digest()

    def test_zero_epochs_leave_params(self, tiny_params, obs_batch):
        """A phase with no epochs only measures"""
        params, stats = da_phase(tiny_params.copy(), obs_batch, GRAY, DAConfig(epochs=0), np.random.default_rng(0))
        assert params.equals(tiny_params)
        assert stats.anchor_kl == pytest.approx(0.0, abs=1e-12)
        assert stats.final_loss is None

    def test_same_seed_same_result(self, tiny_params, obs_batch):
        """Phases are reproducible from the rng seed"""
        config = DAConfig(epochs=2, minibatch_size=4)
        spec = AugmentationSpec(kind="random_conv")
        a, _ = da_phase(tiny_params.copy(), obs_batch, spec, config, np.random.default_rng(5))
        b, _ = da_phase(tiny_params.copy(), obs_batch, spec, config, np.random.default_rng(5))
        assert a.digest() == b.digest()

    def test_identity_leaves_policy_at_anchor(self, tiny_params, obs_batch):
        """With the identity view the snapshot is already optimal and the policy stays put"""
        anchor = forward(tiny_params, obs_batch).logits
        config = DAConfig(lr=1e-3, epochs=5, minibatch_size=3)
        params, stats = da_phase(tiny_params.copy(), obs_batch, AugmentationSpec(), config, np.random.default_rng(0))
        assert float(js_distance(anchor, forward(params, obs_batch).logits).mean()) < 1e-3
        assert stats.anchor_kl < 1e-6


class TestExDA:
    """Post-training distillation"""

    def test_zero_epochs_return_params_untouched(self, tiny_params, tiny_env_config):
        """M = 0 skips the buffer fill and training"""
        envs = make_vec_env(tiny_env_config, "easybg", 2, seed=0)
        params, stats = exda(tiny_params, envs, [GRAY], DAConfig(), 0, np.random.default_rng(0))
        assert params is tiny_params
        assert envs.total_steps == 0 and stats.fill_steps == 0

    def test_empty_augmentation_set(self, tiny_params, tiny_env_config):
        envs = make_vec_env(tiny_env_config, "easybg", 2, seed=0)
        with pytest.raises(AugmentationError):
            exda(tiny_params, envs, [], DAConfig(), 1, np.random.default_rng(0))

    def test_fill_counts_env_steps(self, tiny_params, tiny_env_config):
        """Filling 5 frames from 2 envs takes 3 vector steps"""
        envs = make_vec_env(tiny_env_config, "easybg", 2, seed=0)
        obs, steps = fill_distill_buffer(tiny_params, envs, 5, np.random.default_rng(0))
        assert obs.shape == (5, 8, 8, 3) and obs.dtype == np.uint8
        assert steps == 6

    def test_runs_with_fill(self, tiny_params, tiny_env_config):
        """A short stage fills its buffer and trains for M epochs"""
        envs = make_vec_env(tiny_env_config, "easybg", 2, seed=0)
        config = DAConfig(exda_buffer_size=8, exda_minibatch_size=4, exda_refresh_every=1)
        params, stats = exda(tiny_params.copy(), envs, [GRAY, AugmentationSpec(kind="black")], config, 2, np.random.default_rng(0))
        assert stats.fill_steps == 8 and stats.epochs == 2 and stats.steps == 4
        assert stats.anchor_kl is not None

    def test_reinitialize_starts_from_fresh_student(self, tiny_params, obs_batch, tiny_env_config):
        """With reinitialize the pretrained parameters are left alone"""
        envs = make_vec_env(tiny_env_config, "easybg", 2, seed=0)
        config = DAConfig(reinitialize=True, reinit_seed=9, exda_minibatch_size=6)
        original = tiny_params.copy()
        student, _ = exda(tiny_params, envs, [GRAY], config, 1, np.random.default_rng(0), obs=encode_obs(obs_batch))
        assert student is not tiny_params
        assert tiny_params.equals(original)


class TestExDrAC:
    """Anchor-free self-consistency training"""

    def test_reduces_self_inconsistency(self, tiny_params, obs_batch):
        """Training lowers the consistency loss it optimizes"""
        config = DAConfig(exda_lr=1e-3, exda_minibatch_size=6, exda_refresh_every=100)
        _, stats = exdrac(tiny_params.copy(), obs_batch, GRAY, config, 20, np.random.default_rng(0))
        assert stats.epochs == 20
        assert stats.losses[-1] < stats.losses[0]

    def test_gradient_flows_through_both_branches(self, tiny_params, tiny_spec, obs_batch):
        """The undetached consistency loss agrees with finite differences"""
        augmented = batch_apply(GRAY, obs_batch, np.random.default_rng(0))

        def loss(weights, stop_gradient=False):
            return self_inconsistency(weights, tiny_spec, obs_batch, augmented, stop_gradient=stop_gradient)

        weights = tiny_params.track()
        analytic = backward(loss(weights), weights)
        numeric = numerical_gradient(lambda: loss(tiny_params.constants()).item(), tiny_params)
        assert_gradients_close(analytic, numeric)

        weights = tiny_params.track()
        detached = backward(loss(weights, stop_gradient=True), weights)
        assert any(not np.allclose(detached[name], analytic[name]) for name, _ in tiny_params.items())
