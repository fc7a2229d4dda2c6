from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import structlog

from augsched.config.experiment import ExperimentConfig, serialize_config
from augsched.config.settings import settings
from augsched.harness.report import EvalReport, RunRecord, emit_report, write_manifest
from augsched.services.training.orchestrator import TrainingOrchestrator

# Set up logger
logger = structlog.get_logger("augsched")


@dataclass
class SuiteResult:
    runs: List[RunRecord]
    report: Optional[EvalReport]
    out_dir: Path

    @property
    def failed(self) -> List[RunRecord]:
        return [run for run in self.runs if not run.completed]


def run_dir_for(out_dir: Union[str, Path], method: str, seed: int) -> Path:
    return Path(out_dir) / method / f"seed{seed}"


def _run_one(orchestrator: TrainingOrchestrator, method: str, seed: int, run_dir: Path) -> RunRecord:
    try:
        orchestrator.run(method, seed, run_dir)
        return RunRecord(method=method, seed=seed, status="completed", run_dir=str(run_dir))
    except Exception as e:
        logger.error("Run failed", method=method, seed=seed, error=str(e), exc_info=True)
        return RunRecord(method=method, seed=seed, status="failed", run_dir=str(run_dir), error=str(e))


def run_suite(
    config: ExperimentConfig,
    out_dir: Optional[Union[str, Path]] = None,
    threads: Optional[int] = None,
) -> SuiteResult:
    """
    Run every (method, seed) pair, then aggregate

    Args:
        config (ExperimentConfig): experiment configuration
        out_dir (Optional[Union[str, Path]]): defaults to ``config.output_dir``
        threads (Optional[int]): worker cap, defaults to ``AUGSCHED_THREADS``

    Returns:
        SuiteResult: per-run status and the report (None when every run failed)
    """
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(serialize_config(config))

    jobs = [(method, seed) for method in config.methods for seed in config.seeds]
    workers = max(1, min(threads or settings.AUGSCHED_THREADS, len(jobs)))
    logger.info("Suite started", runs=len(jobs), workers=workers, out_dir=str(out_dir))

    orchestrator = TrainingOrchestrator(config)
    if workers == 1:
        runs = [_run_one(orchestrator, m, s, run_dir_for(out_dir, m, s)) for m, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, orchestrator, m, s, run_dir_for(out_dir, m, s)) for m, s in jobs]
            runs = [future.result() for future in futures]

    write_manifest(runs, out_dir, config.seeds)
    report = None
    if any(run.completed for run in runs):
        report = emit_report(runs, out_dir, expected_seeds=config.seeds)
    else:
        logger.error("Every run failed; no report written", runs=len(runs))
    logger.info("Suite finished", completed=sum(run.completed for run in runs), failed=sum(not run.completed for run in runs))
    return SuiteResult(runs=runs, report=report, out_dir=out_dir)
