"""
Per-run metrics: a versioned CSV of evaluation-cadence rows plus a
Prometheus textfile of run counters.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import List, Optional, Union

import pandas as pd
import structlog
from prometheus_client import CollectorRegistry, Counter, Gauge, write_to_textfile
from pydantic import BaseModel, ConfigDict, model_validator

from augsched.utils.errors import NumericalError

logger = structlog.get_logger("augsched")

CSV_HEADER = "# augsched-metrics v1"


class MetricsRow(BaseModel):
    """One evaluation point of a run"""
    model_config = ConfigDict(extra="forbid")

    env_steps: int
    exda_fill_steps: int = 0
    epoch: int
    stage: str = "rl"
    method: str
    seed: int
    train_return: float
    test_bg_return: float
    test_lv_return: float
    rollout_return: Optional[float] = None
    policy_objective: Optional[float] = None
    value_loss: Optional[float] = None
    entropy: Optional[float] = None
    da_loss: Optional[float] = None
    anchor_kl: Optional[float] = None
    policy_distance: Optional[float] = None
    da_phase: bool = False
    da_phases: int = 0

    @model_validator(mode="after")
    def _finite(self) -> "MetricsRow":
        for name, value in self:
            if isinstance(value, float) and not math.isfinite(value):
                raise NumericalError(f"metrics field {name} is not finite ({value})", error_code="non_finite_metric")
        return self


COLUMNS = list(MetricsRow.model_fields)


def write_metrics_csv(rows: List[MetricsRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=COLUMNS)
    with path.open("w", newline="") as handle:
        handle.write(CSV_HEADER + "\n")
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_metrics_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Load a metrics CSV, checking its schema header"""
    path = Path(path)
    with path.open() as handle:
        header = handle.readline().strip()
    if header != CSV_HEADER:
        raise ValueError(f"{path} does not start with {CSV_HEADER!r}")
    return pd.read_csv(path, skiprows=1)


class MetricsSink:
    """
    Collects rows and run counters for one (method, seed) run

    With ``run_dir`` set, ``close`` writes ``metrics.csv`` and ``metrics.prom``
    there; otherwise everything stays in memory.
    """

    def __init__(self, method: str, seed: int, run_dir: Optional[Union[str, Path]] = None):
        self.method = method
        self.seed = seed
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.rows: List[MetricsRow] = []

        self.registry = CollectorRegistry()
        labels = {"method": method, "seed": str(seed)}
        self.env_steps = Counter(
            "augsched_env_steps", "Environment steps consumed by RL training", list(labels), registry=self.registry
        ).labels(**labels)
        self.exda_fill_steps = Counter(
            "augsched_exda_fill_steps", "Environment steps consumed filling distillation buffers",
            list(labels), registry=self.registry,
        ).labels(**labels)
        self.da_phases = Counter(
            "augsched_da_phases", "Distillation phases executed", list(labels), registry=self.registry
        ).labels(**labels)
        self.updates = Counter(
            "augsched_updates", "Optimizer steps of the RL update", list(labels), registry=self.registry
        ).labels(**labels)
        self.last_return = Gauge(
            "augsched_last_eval_return", "Mean return of the latest evaluation",
            list(labels) + ["mode"], registry=self.registry,
        )

    def record(self, row: MetricsRow) -> MetricsRow:
        if self.rows and row.env_steps < self.rows[-1].env_steps:
            raise NumericalError("env step count went backwards", error_code="non_monotone_steps")
        self.rows.append(row)
        labels = {"method": self.method, "seed": str(self.seed)}
        self.last_return.labels(mode="easybg", **labels).set(row.train_return)
        self.last_return.labels(mode="test_bg", **labels).set(row.test_bg_return)
        self.last_return.labels(mode="test_lv", **labels).set(row.test_lv_return)
        return row

    def close(self) -> None:
        if self.run_dir is None:
            return
        write_metrics_csv(self.rows, self.run_dir / "metrics.csv")
        write_to_textfile(str(self.run_dir / "metrics.prom"), self.registry)
        logger.info("Metrics written", run_dir=str(self.run_dir), rows=len(self.rows))
