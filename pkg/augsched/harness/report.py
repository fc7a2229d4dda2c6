"""
Aggregate finished runs into a method × mode table of mean ± std over seeds,
normalized by the PPO mean of the same mode.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import structlog

from augsched.harness.metrics import read_metrics_csv
from augsched.harness.plots import write_line_chart
from augsched.utils.errors import ReportError

logger = structlog.get_logger("augsched")

MODES = {"easybg": "train_return", "test_bg": "test_bg_return", "test_lv": "test_lv_return"}
MANIFEST = "manifest.json"


@dataclass
class RunRecord:
    method: str
    seed: int
    status: str  # completed | failed
    run_dir: str
    error: Optional[str] = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"


@dataclass
class EvalReport:
    table: pd.DataFrame
    csv_path: Optional[Path] = None
    markdown_path: Optional[Path] = None
    plots: List[Path] = None


def write_manifest(runs: Sequence[RunRecord], out_dir: Union[str, Path], seeds: Sequence[int]) -> Path:
    path = Path(out_dir) / MANIFEST
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"seeds": list(seeds), "runs": [asdict(run) for run in runs]}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(out_dir: Union[str, Path]) -> tuple:
    """(runs, expected seeds) recorded by a suite"""
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        raise ReportError(f"{out_dir} has no {MANIFEST}", error_code="manifest_missing")
    payload = json.loads(path.read_text())
    return [RunRecord(**run) for run in payload["runs"]], payload.get("seeds", [])


def final_returns(runs: Sequence[RunRecord]) -> pd.DataFrame:
    """One row per completed run: the returns of its last metrics row"""
    rows = []
    for run in runs:
        if not run.completed:
            continue
        final = read_metrics_csv(Path(run.run_dir) / "metrics.csv").iloc[-1]
        rows.append({"method": run.method, "seed": run.seed, **{mode: float(final[col]) for mode, col in MODES.items()}})
    return pd.DataFrame(rows, columns=["method", "seed", *MODES])


def summarize(returns: pd.DataFrame, expected_seeds: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """
    Mean and population std (ddof=0) per (method, mode), normalized score and missing-seed flags

    Args:
        returns (pd.DataFrame): columns method, seed, easybg, test_bg, test_lv
        expected_seeds (Optional[Sequence[int]]): seeds every method should have

    Returns:
        pd.DataFrame: columns method, mode, mean, std, seeds, normalized, missing_seeds, flagged

    Raises:
        ReportError: if ``returns`` is empty
    """
    if returns.empty:
        raise ReportError("No completed runs to report", error_code="no_completed_runs")
    expected = sorted(set(expected_seeds)) if expected_seeds else sorted(returns["seed"].unique())
    ppo = returns[returns["method"] == "ppo"]
    ppo_means = {mode: float(ppo[mode].mean()) for mode in MODES} if not ppo.empty else {}

    records = []
    for method, group in returns.groupby("method", sort=False):
        missing = sorted(set(expected) - set(group["seed"]))
        for mode in MODES:
            values = group[mode].to_numpy(dtype=np.float64)
            mean = float(values.mean())
            if method == "ppo":
                normalized = 1.0
            elif ppo_means.get(mode):
                normalized = mean / ppo_means[mode]
            else:
                normalized = float("nan")
            records.append({
                "method": method,
                "mode": mode,
                "mean": mean,
                "std": float(values.std(ddof=0)),
                "seeds": len(values),
                "normalized": normalized,
                "missing_seeds": ",".join(str(s) for s in missing),
                "flagged": bool(missing),
            })
    return pd.DataFrame(records)


def render_markdown(table: pd.DataFrame) -> str:
    """Method rows × mode columns of ``mean ± std (normalized)``; flagged rows are marked"""
    lines = [
        "| method | " + " | ".join(MODES) + " | seeds |",
        "|---|" + "---|" * len(MODES) + "---|",
    ]
    for method, group in table.groupby("method", sort=False):
        by_mode = group.set_index("mode")
        cells = [
            f"{by_mode.at[mode, 'mean']:.3f} ± {by_mode.at[mode, 'std']:.3f} ({by_mode.at[mode, 'normalized']:.2f})"
            for mode in MODES
        ]
        flagged = bool(group["flagged"].iloc[0])
        seeds = f"{int(group['seeds'].iloc[0])}" + (f" (missing {group['missing_seeds'].iloc[0]})" if flagged else "")
        name = f"{method} (incomplete)" if flagged else method
        lines.append(f"| {name} | " + " | ".join(cells) + f" | {seeds} |")
    lines.append("")
    lines.append("Mean ± population std over seeds; parentheses hold the score normalized by PPO's mean.")
    return "\n".join(lines) + "\n"


def learning_curves(runs: Sequence[RunRecord]) -> Dict[str, Dict[str, List[tuple]]]:
    """mode -> method -> [(env_steps, mean return over seeds)] from the RL-stage rows"""
    frames = []
    for run in runs:
        if run.completed:
            frame = read_metrics_csv(Path(run.run_dir) / "metrics.csv")
            frames.append(frame[frame["stage"] == "rl"])
    curves: Dict[str, Dict[str, List[tuple]]] = {mode: {} for mode in MODES}
    if not frames:
        return curves
    frame = pd.concat(frames, ignore_index=True)
    for mode, column in MODES.items():
        for method, group in frame.groupby("method", sort=False):
            mean = group.groupby("env_steps")[column].mean()
            curves[mode][method] = [(float(x), float(y)) for x, y in mean.items()]
    return curves


def emit_report(
    runs: Sequence[RunRecord],
    out_dir: Optional[Union[str, Path]] = None,
    expected_seeds: Optional[Sequence[int]] = None,
    plots: bool = True,
) -> EvalReport:
    """
    Build the report and, with ``out_dir``, write report.csv, report.md and one SVG per mode

    Raises:
        ReportError: when no run completed
    """
    failed = [run for run in runs if not run.completed]
    for run in failed:
        logger.warning("Run excluded from report", method=run.method, seed=run.seed, error=run.error)
    table = summarize(final_returns(runs), expected_seeds)
    report = EvalReport(table=table, plots=[])
    if out_dir is None:
        return report

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.csv_path = out_dir / "report.csv"
    table.to_csv(report.csv_path, index=False, float_format="%.17g")
    report.markdown_path = out_dir / "report.md"
    report.markdown_path.write_text(render_markdown(table), encoding="utf-8")
    if plots:
        for mode, series in learning_curves(runs).items():
            report.plots.append(write_line_chart(out_dir / f"curves_{mode}.svg", f"{mode} return", series))
    logger.info("Report written", out_dir=str(out_dir), methods=table["method"].nunique(), failed=len(failed))
    return report
