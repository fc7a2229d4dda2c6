import numpy as np
import pytest

from augsched.nn.checkpoint import load_checkpoint, save_checkpoint
from augsched.nn.gradients import GradientSet
from augsched.nn.network import ConvLayer, DenseLayer, FlattenLayer, NetworkSpec, init_params
from augsched.nn.optim import AdamState, adam_step
from augsched.utils.errors import CheckpointError, NumericalError, ShapeError


class TestInitParams:
    """Parameter initialization"""

    def test_same_seed_is_bit_identical(self, tiny_spec):
        """Equal seeds give equal parameters, different seeds do not"""
        assert init_params(tiny_spec, 3).equals(init_params(tiny_spec, 3))
        assert not init_params(tiny_spec, 3).equals(init_params(tiny_spec, 4))

    def test_weights_within_scale_and_zero_biases(self, tiny_spec):
        """Weights lie in [-scale, scale]; biases start at zero"""
        params = init_params(tiny_spec, 0, scale=0.05)
        for name, value in params.items():
            if name.endswith(".bias"):
                assert not value.any()
            else:
                assert np.abs(value).max() <= 0.05

    def test_default_spec_matches_default_observation(self):
        """The default trunk accepts 64x64 RGB frames"""
        spec = NetworkSpec()
        assert spec.parameter_shapes()["policy.weight"][1] == 4

    def test_invalid_spec_raises_shape_error(self):
        """A dense layer straight after a conv is rejected"""
        with pytest.raises(ShapeError):
            NetworkSpec(input_shape=(8, 8, 3), layers=[ConvLayer(out_channels=2, kernel=3), DenseLayer(out_dim=4)])

    def test_kernel_larger_than_input_raises(self):
        """Kernels cannot exceed the spatial extent"""
        with pytest.raises(ShapeError):
            NetworkSpec(input_shape=(4, 4, 3), layers=[ConvLayer(out_channels=2, kernel=5), FlattenLayer()])


class TestAdam:
    """Bias-corrected Adam"""

    def test_first_step_moves_by_learning_rate(self, tiny_params):
        """After bias correction the first step is lr * sign(g) for non-zero g"""
        before = tiny_params.copy()
        grads = GradientSet({name: np.full(value.shape, 2.0) for name, value in tiny_params.items()})
        state = AdamState.for_params(tiny_params)
        adam_step(tiny_params, grads, state, lr=0.01)
        for name, value in tiny_params.items():
            np.testing.assert_allclose(before[name] - value, 0.01, rtol=1e-6)
        assert state.step == 1

    def test_non_finite_gradient_leaves_params_untouched(self, tiny_params):
        """NaN gradients raise before anything is modified"""
        before = tiny_params.copy()
        grads = GradientSet({name: np.full(value.shape, np.nan) for name, value in tiny_params.items()})
        state = AdamState.for_params(tiny_params)
        with pytest.raises(NumericalError):
            adam_step(tiny_params, grads, state, lr=0.01)
        assert tiny_params.equals(before)
        assert state.step == 0


class TestCheckpoint:
    """Binary checkpoint format"""

    def test_round_trip_with_optimizer_state(self, tiny_params, tmp_path):
        """Saved parameters and Adam moments load back exactly"""
        state = AdamState.for_params(tiny_params)
        grads = GradientSet({name: np.ones(value.shape) for name, value in tiny_params.items()})
        adam_step(tiny_params, grads, state, lr=0.1)
        path = save_checkpoint(tiny_params, state, tmp_path / "a.ckpt")
        params, loaded = load_checkpoint(path, expected_spec=tiny_params.spec)
        assert params.equals(tiny_params)
        assert loaded.step == 1
        np.testing.assert_array_equal(loaded.m["policy.weight"], state.m["policy.weight"])

    def test_bad_magic(self, tmp_path):
        """Files of another format are rejected"""
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_file(self, tiny_params, tmp_path):
        """A cut-off checkpoint is detected"""
        path = save_checkpoint(tiny_params, None, tmp_path / "a.ckpt")
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    @pytest.mark.parametrize("offset", [40, -40])
    def test_corrupted_bytes_fail_before_parsing(self, tiny_params, tmp_path, offset):
        """Flipped bytes in the spec length or a record are caught by the trailer, not by the parser"""
        path = save_checkpoint(tiny_params, None, tmp_path / "a.ckpt")
        data = bytearray(path.read_bytes())
        data[offset] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError) as excinfo:
            load_checkpoint(path)
        assert excinfo.value.error_code == "checkpoint_corrupt"

    def test_spec_mismatch(self, tiny_params, tmp_path):
        """Loading against a different architecture fails"""
        path = save_checkpoint(tiny_params, None, tmp_path / "a.ckpt")
        with pytest.raises(CheckpointError):
            load_checkpoint(path, expected_spec=NetworkSpec())

    def test_missing_file(self, tmp_path):
        """An unreadable path is a checkpoint error"""
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.ckpt")
