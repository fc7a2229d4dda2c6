from pathlib import Path

import pytest

from augsched.main import build_parser, main
from augsched.nn.checkpoint import save_checkpoint

TINY = Path(__file__).resolve().parents[2] / "configs" / "tiny.yaml"


class TestCLI:
    """Command-line exit codes and outputs"""

    def test_report_without_manifest(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == 1
        assert "manifest_missing" in capsys.readouterr().err

    def test_eval_missing_checkpoint(self, tmp_path):
        assert main(["eval", str(tmp_path / "none.ckpt"), "--mode", "easybg"]) == 1

    def test_eval_shape_mismatch(self, tiny_params, tmp_path, capsys):
        """A checkpoint for 8x8 frames cannot be evaluated on the default 64x64 env"""
        path = save_checkpoint(tiny_params, None, tmp_path / "tiny.ckpt")
        assert main(["eval", str(path), "--mode", "test-bg", "--episodes", "1"]) == 1
        assert "observations" in capsys.readouterr().err

    def test_eval_checkpoint(self, tiny_params, tmp_path, capsys):
        path = save_checkpoint(tiny_params, None, tmp_path / "tiny.ckpt")
        assert main(["eval", str(path), "--mode", "test-lv", "--config", str(TINY), "--episodes", "2"]) == 0
        assert capsys.readouterr().out.startswith("test_lv\tmean_return=")

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("seeds: [0]\n")
        assert main(["run", str(path)]) == 1

    def test_tiny_run_then_report(self, tmp_path, capsys):
        out = tmp_path / "runs"
        assert main(["run", str(TINY), "--method", "ppo", "--seed", "0", "--out", str(out)]) == 0
        assert "| ppo |" in capsys.readouterr().out
        assert main(["report", str(out)]) == 0
        assert (out / "report.md").exists()

    def test_dump_frames(self, tmp_path, capsys):
        out = tmp_path / "frames"
        assert main(["dump-frames", str(TINY), "--out", str(out), "--count", "1", "--augmentations"]) == 0
        # three modes, each with the plain frame and two augmented views
        assert len(list(out.glob("*.ppm"))) == 9

    @pytest.mark.parametrize("flag", ["--augment", "--augmentation"])
    def test_augmentation_override_flag(self, flag):
        """Both spellings of the override reach the same option"""
        args = build_parser().parse_args(["run", str(TINY), flag, "random_crop"])
        assert args.augmentation == "random_crop"

    def test_unknown_augmentation_override(self, tmp_path):
        """An override naming no known kind is a config error"""
        assert main(["run", str(TINY), "--augment", "sepia", "--out", str(tmp_path / "runs")]) == 1
